//! Benchmark data: the nonlinear mass-spring-damper generator, multisine
//! excitation, dataset CSV I/O and the BFR metric.

mod csvio;
mod dataset;
mod metrics;
mod msd;
mod multisine;

pub use csvio::{meta_path, read_csv, write_csv};
pub use dataset::{Dataset, DatasetMeta};
pub use metrics::{bfr, mse};
pub use msd::{
    generate_msd_dataset, generate_msd_dataset_with, msd_step, simulate_msd, MsdParams,
    MsdProtocol, NoiseLevel, Split, MAX_REDRAWS, NOMINAL_SIGMA_E2,
};
pub use multisine::{band_bins, multisine};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no grid frequency falls in [{f_lo}, {f_hi}] Hz")]
    EmptyBand { f_lo: f64, f_hi: f64 },
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("reference output is constant; BFR undefined")]
    DegenerateReference,
    #[error("simulation diverged at step {0}")]
    Diverged(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
