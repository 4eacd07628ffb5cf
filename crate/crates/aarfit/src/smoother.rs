//! Kernel smoothing of the step baseline estimate and the coefficient refit.
//!
//! The smoothed log baseline at a query age is the kernel-weighted average
//! of the step-fit levels at the sample ages falling within one bandwidth of
//! the query. The coefficient is then re-estimated against the smoothed
//! baseline with the same inner solver used by the alternation.

use serde::{Deserialize, Serialize};

use crate::data::TempBand;
use crate::error::{Error, Result};
use crate::fitter::{fit_gamma_from, FitConfig, GammaFit, StepFit};
use crate::isotonic::MonotoneStepFn;

/// Supported kernel shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Epanechnikov,
}

impl KernelKind {
    /// Kernel value at scaled distance `w`; zero outside (-1, 1).
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            KernelKind::Epanechnikov => {
                if w.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - w * w)
                }
            }
        }
    }
}

/// Kernel shape plus bandwidth in KYr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::NonPositiveBandwidth(bandwidth));
        }
        Ok(Self { kind, bandwidth })
    }

    /// Epanechnikov kernel with the given bandwidth.
    pub fn epanechnikov(bandwidth: f64) -> Result<Self> {
        Self::new(KernelKind::Epanechnikov, bandwidth)
    }
}

/// Kernel-weighted average of `values` (levels at the sorted `knots`) over
/// the window `|z - knot| < h`. Errors when the window is empty; the caller
/// decides any fallback.
pub fn smooth_log_g(knots: &[f64], values: &[f64], z: f64, spec: &KernelSpec) -> Result<f64> {
    if knots.is_empty() {
        return Err(Error::EmptyInput);
    }
    if knots.len() != values.len() {
        return Err(Error::LengthMismatch(knots.len(), values.len()));
    }
    let h = spec.bandwidth;
    let lo = knots.partition_point(|k| *k <= z - h);
    let hi = knots.partition_point(|k| *k < z + h);
    if lo >= hi {
        return Err(Error::EmptyWindow { z, h });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in lo..hi {
        let w = spec.kind.eval((z - knots[i]) / h);
        num += w * values[i];
        den += w;
    }
    if den <= 0.0 {
        // Only possible if every in-window point sits exactly at distance h,
        // which the strict window excludes; kept as a guard.
        return Err(Error::EmptyWindow { z, h });
    }
    Ok(num / den)
}

/// Query-anywhere evaluator for the fitted log baseline: either the raw
/// step fit (no smoothing) or the kernel-smoothed version of it.
#[derive(Debug, Clone)]
pub enum LogGEvaluator {
    /// Piecewise-linear interpolation of the step-fit levels.
    Step(MonotoneStepFn),
    /// Kernel average of the step-fit levels at the sample ages.
    Smoothed {
        knots: Vec<f64>,
        values: Vec<f64>,
        spec: KernelSpec,
    },
}

impl LogGEvaluator {
    pub fn eval(&self, z: f64) -> Result<f64> {
        match self {
            LogGEvaluator::Step(step) => Ok(step.eval(z)),
            LogGEvaluator::Smoothed { knots, values, spec } => {
                smooth_log_g(knots, values, z, spec)
            }
        }
    }

    /// Evaluates at `z`, substituting the nearest-knot level when the kernel
    /// window is empty. The flag reports whether the fallback fired.
    pub fn eval_or_nearest(&self, z: f64) -> (f64, bool) {
        match self.eval(z) {
            Ok(v) => (v, false),
            Err(_) => (self.nearest_level(z), true),
        }
    }

    fn nearest_level(&self, z: f64) -> f64 {
        let (knots, values) = match self {
            LogGEvaluator::Step(step) => (step.knots(), step.levels()),
            LogGEvaluator::Smoothed { knots, values, .. } => (&knots[..], &values[..]),
        };
        let i = knots.partition_point(|k| *k < z);
        if i == 0 {
            values[0]
        } else if i == knots.len() {
            values[knots.len() - 1]
        } else if (z - knots[i - 1]).abs() <= (knots[i] - z).abs() {
            values[i - 1]
        } else {
            values[i]
        }
    }
}

/// Smoothed stage of the fit: the log baseline evaluator, the refitted
/// coefficient, and the bandwidth that produced it (0 when unsmoothed).
#[derive(Debug, Clone)]
pub struct SmoothFit {
    pub log_g_tilde: LogGEvaluator,
    pub gamma_tilde: f64,
    pub h_used: f64,
    pub gamma_converged: bool,
    /// Number of sample ages where evaluating the smoothed baseline needed
    /// the nearest-knot fallback (expected 0 for sane bandwidths).
    pub eval_fallbacks: usize,
}

impl SmoothFit {
    /// Smoothed baseline values at the sample ages, nearest-knot fallback
    /// applied.
    pub fn values_at(&self, ages: &[f64]) -> Vec<f64> {
        ages.iter().map(|&z| self.log_g_tilde.eval_or_nearest(z).0).collect()
    }
}

/// Re-estimates the coefficient against a fixed (smoothed) log baseline.
pub fn refit_gamma(
    y: &[f64],
    x: &[f64],
    log_g_tilde: &[f64],
    band: &TempBand,
    cfg: &FitConfig,
) -> Result<GammaFit> {
    fit_gamma_from(0.0, y, x, log_g_tilde, band, cfg)
}

/// Builds the smoothed stage from a step fit: smooth the levels (when a
/// kernel is given), then refit the coefficient against the smoothed
/// baseline at the sample ages, warm-started at the step estimate.
pub fn smooth_step_fit(
    step: &StepFit,
    y: &[f64],
    x: &[f64],
    band: &TempBand,
    cfg: &FitConfig,
    smoothing: Option<KernelSpec>,
) -> Result<SmoothFit> {
    let knots = step.log_g_hat.knots();
    let evaluator = match smoothing {
        None => LogGEvaluator::Step(step.log_g_hat.clone()),
        Some(spec) => LogGEvaluator::Smoothed {
            knots: knots.to_vec(),
            values: step.log_g_hat.levels().to_vec(),
            spec,
        },
    };
    let mut fallbacks = 0usize;
    let values: Vec<f64> = knots
        .iter()
        .map(|&z| {
            let (v, fell_back) = evaluator.eval_or_nearest(z);
            if fell_back {
                fallbacks += 1;
            }
            v
        })
        .collect();
    let gfit = fit_gamma_from(step.gamma_hat, y, x, &values, band, cfg)?;
    Ok(SmoothFit {
        log_g_tilde: evaluator,
        gamma_tilde: gfit.gamma,
        h_used: smoothing.map_or(0.0, |s| s.bandwidth),
        gamma_converged: gfit.converged,
        eval_fallbacks: fallbacks,
    })
}
