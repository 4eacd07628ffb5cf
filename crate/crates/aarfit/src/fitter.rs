//! Alternating minimization of the average squared error loss over the
//! temperature coefficient and the nonincreasing log baseline.
//!
//! The loss for a series of log rates `y`, temperatures `x` and ages `z` is
//!
//! ```text
//! Q(gamma, g) = (1/n) * sum_i (y_i - ln(1 + gamma * x_i) - log_g(z_i))^2
//! ```
//!
//! Starting from `gamma = 0` and the isotonic fit of `y`, each outer sweep
//! updates `gamma` by a clamped Gauss-Newton step given the current baseline,
//! then refits the baseline by PAVA on the adjusted responses
//! `y_i - ln(1 + gamma * x_i)`. Sweeps stop once the relative loss change
//! falls below `rel_tol`.

use serde::{Deserialize, Serialize};

use crate::data::{DerivedSeries, TempBand};
use crate::error::{Error, Result};
use crate::isotonic::{pava_nonincreasing, MonotoneStepFn};

/// Maximum number of step halvings when a Gauss-Newton step would increase
/// the objective.
const MAX_HALVINGS: usize = 30;

/// Stopping rules for the alternating fit and its inner 1-D solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Relative loss-change threshold for the outer alternation.
    pub rel_tol: f64,
    /// Cap on outer sweeps.
    pub max_outer_iters: usize,
    /// Absolute step threshold for the Gauss-Newton update.
    pub gn_tol: f64,
    /// Cap on Gauss-Newton iterations per call.
    pub gn_max_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            max_outer_iters: 200,
            gn_tol: 1e-10,
            gn_max_iters: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must be in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if !(self.gn_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gn_tol must be positive, got {}",
                self.gn_tol
            )));
        }
        if self.max_outer_iters == 0 || self.gn_max_iters == 0 {
            return Err(Error::InvalidConfig(
                "iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of the inner 1-D Gauss-Newton minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub gamma: f64,
    /// False when the iteration cap was hit before the step shrank below
    /// `gn_tol`; the best iterate is still returned.
    pub converged: bool,
    pub iterations: usize,
}

/// Output of the alternating fit: the coefficient, the piecewise-constant
/// log baseline over the sample ages, and the loss value after the initial
/// isotonic fit and after every completed sweep.
#[derive(Debug, Clone)]
pub struct StepFit {
    pub gamma_hat: f64,
    pub log_g_hat: MonotoneStepFn,
    pub loss_trace: Vec<f64>,
    /// Completed outer sweeps.
    pub iterations: usize,
    /// Whether the relative-change rule fired before `max_outer_iters`.
    pub converged: bool,
    /// Convergence flag of the final Gauss-Newton call.
    pub gamma_converged: bool,
}

/// Average squared error loss at `(gamma, log_g)`.
pub fn loss(y: &[f64], x: &[f64], gamma: f64, log_g: &[f64]) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch(y.len(), x.len()));
    }
    if y.len() != log_g.len() {
        return Err(Error::LengthMismatch(y.len(), log_g.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for i in 0..y.len() {
        let u = 1.0 + gamma * x[i];
        if u <= 0.0 {
            return Err(Error::DomainViolation {
                index: i,
                gamma,
                x: x[i],
            });
        }
        let r = y[i] - u.ln() - log_g[i];
        sum += r * r;
    }
    Ok(sum / y.len() as f64)
}

/// Responses with the temperature factor removed: `y_i - ln(1 + gamma * x_i)`.
pub fn adjusted_responses(y: &[f64], x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch(y.len(), x.len()));
    }
    let mut adj = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let u = 1.0 + gamma * x[i];
        if u <= 0.0 {
            return Err(Error::DomainViolation {
                index: i,
                gamma,
                x: x[i],
            });
        }
        adj.push(y[i] - u.ln());
    }
    Ok(adj)
}

// Inner solver on targets c_i = y_i - log_g(z_i): minimizes
// mean((c_i - ln(1 + gamma * x_i))^2) over the band's coefficient interval.
// Residual derivative is -x_i / (1 + gamma * x_i); steps that leave the
// interval are projected back, and steps that would increase the objective
// are halved up to MAX_HALVINGS times.
fn gauss_newton(c: &[f64], x: &[f64], start: f64, band: &TempBand, cfg: &FitConfig) -> GammaFit {
    let n = c.len() as f64;
    let obj = |g: f64| -> f64 {
        let mut s = 0.0;
        for (ci, xi) in c.iter().zip(x) {
            let u = 1.0 + g * xi;
            if u <= 0.0 {
                return f64::INFINITY;
            }
            let r = ci - u.ln();
            s += r * r;
        }
        s / n
    };
    let mut gamma = band.clamp_gamma(start);
    let mut f = obj(gamma);
    for iter in 1..=cfg.gn_max_iters {
        let (mut num, mut den) = (0.0, 0.0);
        for (ci, xi) in c.iter().zip(x) {
            let u = 1.0 + gamma * xi;
            let r = ci - u.ln();
            let j = xi / u;
            num += j * r;
            den += j * j;
        }
        if den == 0.0 {
            // Objective is flat in gamma (all x effectively zero).
            return GammaFit {
                gamma,
                converged: true,
                iterations: iter,
            };
        }
        let mut step = num / den;
        let mut cand = band.clamp_gamma(gamma + step);
        let mut fc = obj(cand);
        let mut halvings = 0;
        while fc > f && halvings < MAX_HALVINGS {
            step *= 0.5;
            cand = band.clamp_gamma(gamma + step);
            fc = obj(cand);
            halvings += 1;
        }
        if fc > f {
            cand = gamma;
            fc = f;
        }
        let applied = (cand - gamma).abs();
        gamma = cand;
        f = fc;
        if applied < cfg.gn_tol {
            return GammaFit {
                gamma,
                converged: true,
                iterations: iter,
            };
        }
    }
    GammaFit {
        gamma,
        converged: false,
        iterations: cfg.gn_max_iters,
    }
}

/// Minimizes the loss over the coefficient for a fixed log baseline,
/// starting from zero.
pub fn fit_gamma_given_g(
    y: &[f64],
    x: &[f64],
    log_g: &[f64],
    band: &TempBand,
    cfg: &FitConfig,
) -> Result<GammaFit> {
    fit_gamma_from(0.0, y, x, log_g, band, cfg)
}

/// As [`fit_gamma_given_g`] but warm-started, for use inside alternation
/// sweeps and refits.
pub fn fit_gamma_from(
    start: f64,
    y: &[f64],
    x: &[f64],
    log_g: &[f64],
    band: &TempBand,
    cfg: &FitConfig,
) -> Result<GammaFit> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch(y.len(), x.len()));
    }
    if y.len() != log_g.len() {
        return Err(Error::LengthMismatch(y.len(), log_g.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate()?;
    band.check_temps(x)?;
    let c: Vec<f64> = y.iter().zip(log_g).map(|(yi, gi)| yi - gi).collect();
    Ok(gauss_newton(&c, x, start, band, cfg))
}

/// Isotonic update of the log baseline for a fixed coefficient: PAVA on the
/// adjusted responses, with knots at the sample ages.
pub fn fit_g_given_gamma(y: &[f64], x: &[f64], z: &[f64], gamma: f64) -> Result<MonotoneStepFn> {
    if y.len() != z.len() {
        return Err(Error::LengthMismatch(y.len(), z.len()));
    }
    let adj = adjusted_responses(y, x, gamma)?;
    let levels = pava_nonincreasing(&adj, None)?;
    MonotoneStepFn::new(z.to_vec(), levels)
}

/// Two-stage coordinate descent from `gamma = 0` and the isotonic fit of
/// the log rates; see the module docs for the sweep structure.
pub fn alternate_fit(series: &DerivedSeries, band: &TempBand, cfg: &FitConfig) -> Result<StepFit> {
    cfg.validate()?;
    let (y, x, z) = (series.log_rate(), series.temp(), series.age());
    band.check_temps(x)?;
    let n = y.len() as f64;

    let mut log_g = pava_nonincreasing(y, None)?;
    let mut gamma = 0.0;
    let q0 = y
        .iter()
        .zip(&log_g)
        .map(|(yi, gi)| (yi - gi) * (yi - gi))
        .sum::<f64>()
        / n;
    let mut trace = vec![q0];
    let mut converged = false;
    let mut gamma_converged = true;

    while trace.len() - 1 < cfg.max_outer_iters {
        let c: Vec<f64> = y.iter().zip(&log_g).map(|(yi, gi)| yi - gi).collect();
        let gfit = gauss_newton(&c, x, gamma, band, cfg);
        gamma = gfit.gamma;
        gamma_converged = gfit.converged;

        let adj = adjusted_responses(y, x, gamma)?;
        log_g = pava_nonincreasing(&adj, None)?;
        let q = adj
            .iter()
            .zip(&log_g)
            .map(|(ai, gi)| (ai - gi) * (ai - gi))
            .sum::<f64>()
            / n;
        let q_prev = *trace.last().unwrap();
        trace.push(q);
        if q_prev <= f64::MIN_POSITIVE || (q_prev - q) / q_prev < cfg.rel_tol {
            converged = true;
            break;
        }
    }

    let iterations = trace.len() - 1;
    Ok(StepFit {
        gamma_hat: gamma,
        log_g_hat: MonotoneStepFn::new(z.to_vec(), log_g)?,
        loss_trace: trace,
        iterations,
        converged,
        gamma_converged,
    })
}
