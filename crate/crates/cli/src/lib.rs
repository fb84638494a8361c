//! Experiment harness around the tensor-deflation library: configuration
//! files, seeded Monte-Carlo sweeps with empirical-versus-asymptotic
//! comparison, spectrum diagnostics, and static SVG figures.

pub mod config;
pub mod plot;
pub mod spectrum;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] tensor_deflation::ModelError),
    #[error(transparent)]
    Deflation(#[from] tensor_deflation::DeflationError),
    #[error(transparent)]
    Solver(#[from] tensor_deflation::SolverError),
    #[error(transparent)]
    Rmt(#[from] tensor_deflation::RmtError),
    #[error(transparent)]
    Tensor(#[from] tensor_deflation::TensorError),
    #[error("nothing to plot: empty row set")]
    EmptyPlot,
    #[error("cannot parse sweep csv: {0}")]
    CsvParse(String),
}

/// Worker count for sweep parallelism: `TENSOR_DEFLATION_WORKERS` when set,
/// otherwise the machine's available parallelism.
pub fn worker_count() -> usize {
    if let Ok(v) = std::env::var("TENSOR_DEFLATION_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
