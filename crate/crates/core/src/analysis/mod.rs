//! Information-density profiles, routing patch-size maps and the rotary
//! modulation shuffle harness.

pub mod entropy;
pub mod patch_map;
pub mod shuffle;

pub use entropy::{
    hamming, profile, spectral_entropy, write_profiles_csv, EntropyConfig, EntropyProfile, EntropySummary,
};
pub use patch_map::{weighted_patch_size, write_patch_maps_csv, PatchSizeMap};
pub use shuffle::{
    shuffle_experiment, shuffle_modulations, ShuffleConfig, ShuffleDataset, ShuffleMode, ShuffleReport, ShuffleRow,
};
