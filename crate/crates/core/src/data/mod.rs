//! Series type, synthetic generators, tiered corpus sampling and file I/O.

pub mod composite;
pub mod industrial;
pub mod io;
pub mod sampler;
pub mod series;

pub use composite::{gen_composite, gen_composite_with_info, CompositeGenConfig, CompositeInfo, SeasonalPattern, TrendKind};
pub use industrial::{
    gen_industrial, gen_industrial_with_params, trapezoid, IndustrialGenConfig, IndustrialParams, IndustrialPattern,
};
pub use io::{load_csv, load_jsonl, load_series, write_jsonl, write_jsonl_to};
pub use sampler::{window, Corpus, CorpusSampler, Example, Source, DEFAULT_TIER_WEIGHTS};
pub use series::TimeSeries;
