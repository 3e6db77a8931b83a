//! Instance-adaptive rotary position embeddings: base frequencies, spectral
//! instance features, per-layer `(γ, β)` modulation and pair rotation.

pub mod modulation;
pub mod rope;

pub use modulation::{
    extract_fft_features, fft_amplitudes, theta_node, IaropeConfig, LayerNet, Modulation, ModulationNet,
    ModulationRecord,
};
pub use rope::{adapt_frequencies, apply_rotation, base_frequencies, ModulationSpace};
