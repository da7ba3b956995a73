//! Configuration, synthetic population generation and file I/O.

mod config;
mod generate;
mod io;

pub use config::{
    CheckConfig, FairnessConfig, GeneratorConfig, GroupSpec, PipelineConfig, Provenance, ReportConfig,
    MIN_INCOME_FLOOR, RNG_NAME,
};
pub use generate::{generate_population, separable_blobs};
pub use io::{fmt_f64, load_csv, load_json, save_csv, save_json, write_table, Stamped};
