//! Hotelling deflation on symmetric spiked random tensors.
//!
//! The crate provides the building blocks for studying greedy rank-one
//! deflation of dense symmetric tensors of the form
//!
//! ```text
//!     S = Σ_i β_i x_i^⊗d + (1/√n) W,
//! ```
//!
//! a low-rank signal with positive weights buried in a symmetric Gaussian
//! noise tensor, together with the random-matrix machinery that predicts
//! how well deflation recovers the signal when `n` is large:
//!
//! * [`symtensor`] — dense symmetric tensors with multilinear contraction,
//!   rank-one construction and subtraction, and symmetrization of raw arrays;
//! * [`spike_model`] — reproducible generation of correlated spike components
//!   and of the spiked tensor itself;
//! * [`deflation`] — best rank-one approximation by power iteration with
//!   restarts, the deflation loop, and summary statistics against ground
//!   truth;
//! * [`rmt`] — semicircle law, Stieltjes-transform kernels, and empirical
//!   spectrum diagnostics for contraction matrices;
//! * [`asymptotic`] — the coupled equation system satisfied by the limiting
//!   summary statistics, solved forward (predict statistics from model
//!   parameters) or inverse (estimate weights and correlations from observed
//!   statistics).

pub mod asymptotic;
pub mod deflation;
pub mod rmt;
pub mod seeding;
pub mod spike_model;
pub mod symtensor;

pub use asymptotic::{
    estimate_params, estimate_params_auto, psi, solve_forward, solve_forward_auto,
    system_residual, InitSource, InverseInit, InverseSolution, LimitStats, ModelParams,
    ObservedStats, SolveReport, SolveSolution, SolverError, SolverOptions,
};
pub use deflation::{
    best_rank1, deflate, summary_statistics, DeflationError, DeflationResult, PowerIterOptions,
    RankOneFit, SummaryStatistics,
};
pub use rmt::{
    contraction_spectrum, f_func, gamma_d, h_func, q_func, stieltjes_g, RmtError, SemicircleLaw,
    SpectrumReport,
};
pub use spike_model::{
    correlated_unit_vectors, sample_noise, sample_spiked_tensor, GroundTruth, ModelError,
    SpikeParams,
};
pub use symtensor::{Contracted, SymmetricTensor, TensorError, UnitVector};
