//! Stochastic momentum optimizers for interpolated least squares, with the
//! spectral machinery needed to pick their hyper-parameters analytically.
//!
//! The crate is organized around five pieces:
//!
//! - [`problem`]: synthetic data generators (component-decoupled, diagonal
//!   Gaussian), CSV ingestion, and spectral characterization of a dataset
//!   (`L`, `mu`, `L1`, `kappa_tilde` and their mini-batch variants).
//! - [`optim`]: the MaSS update rule in both of its equivalent forms, the
//!   SGD / Nesterov / Heavy-Ball baselines, hyper-parameter conversion and
//!   the analytic optimal selection, plus the seeded run loop that produces
//!   [`optim::Trajectory`] records.
//! - [`nesterov`]: second-moment transition matrices for SGD+Nesterov on the
//!   component-decoupled model, divergence thresholds and rate prediction.
//! - [`experiments`]: grid searches, batch-size regime sweeps, and the
//!   Lyapunov / variance-reduction verification suites.
//! - [`par`]: a small work-queue wrapper that runs independent jobs on a
//!   rayon pool (feature `parallel`, on by default) or sequentially.
//!
//! Every stochastic entry point takes an explicit 64-bit seed and produces
//! bit-identical results across runs and across worker counts.

pub mod experiments;
pub mod nesterov;
pub mod optim;
pub mod par;
pub mod problem;
pub mod report;
pub mod rng;

pub use optim::{
    run, BatchScheme, HyperParamsAnalytic, HyperParamsPractical, Method, OptimizerSpec,
    RunSettings, Trajectory,
};
pub use problem::{
    batch_constants, min_norm_solution, spectral_profile, BatchSize, LinearProblem, SpectralProfile,
};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv parse error at {path}:{line}: {message}")]
    CsvParse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("problem is not interpolable (relative fit residual {residual:.3e} > {tolerance:.1e}); distance-to-solution metrics are unavailable")]
    NotInterpolable { residual: f64, tolerance: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Finite and strictly positive (rejects NaN and infinities).
pub(crate) fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}
