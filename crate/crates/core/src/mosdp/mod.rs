//! Mixture-of-size dynamic patching: coarsest patchify, routing over real and
//! null experts, ancestor lookup and gated multi-granularity fusion.

pub mod ancestor;
pub mod balance;
pub mod config;
pub mod fusion;
pub mod patchify;
pub mod router;

pub use ancestor::ancestor;
pub use balance::{accumulate_load, update_bias};
pub use config::{PatchConfig, SoftmaxScope};
pub use fusion::{ExpertMlp, TokenSequence, TokenSpan, Tokenizer};
pub use patchify::{patchify_coarsest, CoarsePatches};
pub use router::{affinities, decide, route, RouterState, RoutingDecision, RoutingRecord};
