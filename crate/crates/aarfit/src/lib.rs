//! Semiparametric modeling of ice-core apparent accumulation rate (AAR)
//! against temperature anomaly.
//!
//! The log AAR series is modeled as `ln(1 + gamma * x_i) + log g(z_i) + eps_i`
//! with a scalar temperature coefficient `gamma`, a nonincreasing baseline
//! `g` of age capturing thinning, and AR(1) noise. The crate provides:
//!
//! - [`data`]: core-file ingestion and derivation of the observation series;
//! - [`isotonic`]: pool-adjacent-violators regression onto nonincreasing
//!   sequences (the inner solver for the baseline);
//! - [`fitter`]: alternating Gauss-Newton / isotonic minimization;
//! - [`smoother`]: kernel smoothing of the step baseline and the
//!   coefficient refit;
//! - [`noise`]: residuals and AR(1) parameter estimates;
//! - [`bootstrap`]: model-based bootstrap standard errors and percentile
//!   intervals;
//! - [`simulation`]: the synthetic finite-sample study harness;
//! - [`model`]: the end-to-end pipeline used by the CLI and the bootstrap.

pub mod bootstrap;
pub mod cli;
pub mod data;
pub mod error;
pub mod fitter;
pub mod isotonic;
pub mod model;
pub mod noise;
pub mod rng;
pub mod simulation;
pub mod smoother;

pub use bootstrap::{run_bootstrap, BootstrapConfig, BootstrapSummary, NoiseMode};
pub use data::{load_core, DerivedSeries, RawCoreSeries, TempBand};
pub use error::{Error, Result};
pub use fitter::{alternate_fit, FitConfig, GammaFit, StepFit};
pub use isotonic::{minmax_nonincreasing, pava_nonincreasing, MonotoneStepFn};
pub use model::{fit_model, ModelFit};
pub use noise::{estimate_noise, estimate_phi, estimate_sigma2, NoiseEstimates};
pub use simulation::{
    make_design, run_bias_sd_study, run_coverage_study, simulate_ar1, true_mean, SimConfig,
    StudyResult,
};
pub use smoother::{smooth_log_g, KernelKind, KernelSpec, LogGEvaluator, SmoothFit};
