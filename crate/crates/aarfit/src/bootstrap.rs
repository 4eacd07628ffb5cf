//! Model-based bootstrap for the coefficient and the log baseline.
//!
//! Each replicate resamples the estimated innovations with replacement
//! (rejecting draws whose spread falls below the source spread), rebuilds a
//! synthetic log-rate series from the fitted mean plus regenerated noise,
//! and re-runs the full fit (alternation, smoothing, coefficient refit).
//! Spread is compared through centered sums of squares, which puts the n
//! drawn values and the n - 1 source innovations on the common divisor
//! n - 1 and makes the resampled sum unbiased for the source sum.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DerivedSeries, TempBand};
use crate::error::{Error, Result};
use crate::fitter::{alternate_fit, FitConfig};
use crate::rng::stream_rng;
use crate::smoother::{smooth_step_fit, KernelSpec, SmoothFit};
use crate::noise::NoiseEstimates;

/// Cap on rejected innovation draws per replicate.
const RESAMPLE_RETRY_CAP: usize = 1000;

/// Fraction of failed replicates above which the bootstrap aborts.
const MAX_FAILURE_FRACTION: f64 = 0.05;

/// How replicate noise is rebuilt from resampled innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Recursive AR(1) reconstruction: eps*_2 = U*_2, then
    /// eps*_i = phi * eps*_{i-1} + U*_i.
    Ar1,
    /// Lag-1 differenced innovations added directly: U*_i - phi * U*_{i-1}.
    /// This yields MA(1)-type noise rather than AR(1); kept selectable for
    /// comparison.
    Differenced,
}

/// Bootstrap controls: replicate count, miscoverage level, seed and noise
/// reconstruction mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub noise_mode: NoiseMode,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alpha: f64, seed: u64, noise_mode: NoiseMode) -> Result<Self> {
        let cfg = Self {
            replicates,
            alpha,
            seed,
            noise_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicate count must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Replicate values and the uncertainty summaries built from them.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    /// Coefficient replicates, ordered by replicate index (failures removed).
    pub gamma_reps: Vec<f64>,
    /// Smoothed log-baseline replicates evaluated at the original sample
    /// ages; one row per surviving replicate.
    pub log_g_reps: Vec<Vec<f64>>,
    /// Sample standard deviation of the coefficient replicates; `None` when
    /// fewer than two replicates survive.
    pub se_gamma: Option<f64>,
    /// Percentile interval for the coefficient.
    pub ci_gamma: (f64, f64),
    /// Percentile interval per sample age for the log baseline.
    pub pointwise_ci_log_g: Vec<(f64, f64)>,
    pub failed_replicates: usize,
}

/// Estimated innovations: eps_i - phi * eps_{i-1} for i from the second
/// element on (one fewer than the residual count).
pub fn innovations(eps: &[f64], phi: f64) -> Vec<f64> {
    eps.windows(2).map(|w| w[1] - phi * w[0]).collect()
}

fn centered_sum_of_squares(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Acceptance rule for a resampled innovation set: its centered sum of
/// squares must not fall below that of the source innovations.
pub fn resample_accepted(u_star: &[f64], u: &[f64]) -> bool {
    centered_sum_of_squares(u_star) >= centered_sum_of_squares(u)
}

/// Draws `u.len() + 1` innovations with replacement from `u` (the extra
/// draw serves as the lagged value at the series start), retrying until the
/// accepted-spread rule holds.
pub fn resample_innovations(u: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if u.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = u.len();
    let size = m + 1;
    for _ in 0..RESAMPLE_RETRY_CAP {
        let draw: Vec<f64> = (0..size).map(|_| u[rng.random_range(0..m)]).collect();
        if resample_accepted(&draw, u) {
            return Ok(draw);
        }
    }
    Err(Error::ResampleRetryCap(RESAMPLE_RETRY_CAP))
}

// Noise sequence for indices 2..n given n resampled innovations.
fn replicate_noise(phi: f64, u_star: &[f64], mode: NoiseMode) -> Vec<f64> {
    let n = u_star.len();
    let mut out = Vec::with_capacity(n - 1);
    match mode {
        NoiseMode::Ar1 => {
            let mut eps = 0.0;
            for (i, u) in u_star.iter().enumerate().skip(1) {
                eps = if i == 1 { *u } else { phi * eps + u };
                out.push(eps);
            }
        }
        NoiseMode::Differenced => {
            for i in 1..n {
                out.push(u_star[i] - phi * u_star[i - 1]);
            }
        }
    }
    out
}

/// Synthetic log rates for the second through last sample: fitted mean plus
/// regenerated noise. `log_g_tilde` holds the smoothed baseline at the
/// sample ages; `u_star` must have the full sample length.
pub fn generate_replicate(
    x: &[f64],
    log_g_tilde: &[f64],
    gamma: f64,
    phi: f64,
    u_star: &[f64],
    mode: NoiseMode,
) -> Result<Vec<f64>> {
    if x.len() != log_g_tilde.len() {
        return Err(Error::LengthMismatch(x.len(), log_g_tilde.len()));
    }
    if x.len() != u_star.len() {
        return Err(Error::LengthMismatch(x.len(), u_star.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let mean = fitted_mean(x, log_g_tilde, gamma)?;
    let noise = replicate_noise(phi, u_star, mode);
    Ok(mean[1..]
        .iter()
        .zip(&noise)
        .map(|(m, e)| m + e)
        .collect())
}

/// Fitted mean curve `ln(1 + gamma * x_i) + log_g_tilde_i`.
pub fn fitted_mean(x: &[f64], log_g_tilde: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if x.len() != log_g_tilde.len() {
        return Err(Error::LengthMismatch(x.len(), log_g_tilde.len()));
    }
    x.iter()
        .zip(log_g_tilde)
        .enumerate()
        .map(|(i, (xi, gi))| {
            let u = 1.0 + gamma * xi;
            if u <= 0.0 {
                return Err(Error::DomainViolation {
                    index: i,
                    gamma,
                    x: *xi,
                });
            }
            Ok(u.ln() + gi)
        })
        .collect()
}

/// Nearest-rank percentile interval covering the middle `1 - alpha` of the
/// values: endpoints are the `ceil(alpha/2 * B)`-th and
/// `ceil((1 - alpha/2) * B)`-th order statistics.
pub fn percentile_interval(values: &[f64], alpha: f64) -> (f64, f64) {
    assert!(!values.is_empty(), "percentile interval of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let b = sorted.len();
    let rank = |p: f64| -> usize {
        let k = (p * b as f64).ceil() as usize;
        k.clamp(1, b) - 1
    };
    (sorted[rank(alpha / 2.0)], sorted[rank(1.0 - alpha / 2.0)])
}

/// Runs the full model-based bootstrap: `cfg.replicates` independent
/// replicates, each refit from scratch on its synthetic series, summarized
/// by the sample standard deviation and percentile intervals. Replicates
/// run on numbered RNG streams of `cfg.seed`, so results do not depend on
/// thread count; failed replicates are dropped, and more than 5% failures
/// aborts.
pub fn run_bootstrap(
    series: &DerivedSeries,
    fit: &SmoothFit,
    noise: &NoiseEstimates,
    smoothing: Option<KernelSpec>,
    band: &TempBand,
    fit_cfg: &FitConfig,
    cfg: &BootstrapConfig,
) -> Result<BootstrapSummary> {
    cfg.validate()?;
    let n = series.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    let (z, x) = (series.age(), series.temp());
    let log_g_tilde = fit.values_at(z);
    let mean = fitted_mean(x, &log_g_tilde, fit.gamma_tilde)?;
    let u = innovations(&noise.residuals, noise.phi_tilde);

    let replicate = |index: usize| -> Result<(f64, Vec<f64>)> {
        let mut rng = stream_rng(cfg.seed, index as u64 + 1);
        let u_star = resample_innovations(&u, &mut rng)?;
        assert!(resample_accepted(&u_star, &u));
        let noise_star = replicate_noise(noise.phi_tilde, &u_star, cfg.noise_mode);
        let y_star: Vec<f64> = mean[1..]
            .iter()
            .zip(&noise_star)
            .map(|(m, e)| m + e)
            .collect();
        let series_star =
            DerivedSeries::from_log_parts(z[1..].to_vec(), x[1..].to_vec(), y_star)?;
        let step_star = alternate_fit(&series_star, band, fit_cfg)?;
        let smooth_star = smooth_step_fit(
            &step_star,
            series_star.log_rate(),
            series_star.temp(),
            band,
            fit_cfg,
            smoothing,
        )?;
        let row = smooth_star.values_at(z);
        Ok((smooth_star.gamma_tilde, row))
    };

    let results: Vec<Result<(f64, Vec<f64>)>> =
        (0..cfg.replicates).into_par_iter().map(replicate).collect();

    let failed = results.iter().filter(|r| r.is_err()).count();
    let allowed = (MAX_FAILURE_FRACTION * cfg.replicates as f64).floor() as usize;
    if failed > allowed {
        return Err(Error::TooManyReplicateFailures {
            failed,
            total: cfg.replicates,
            allowed,
        });
    }
    let mut gamma_reps = Vec::with_capacity(cfg.replicates - failed);
    let mut log_g_reps = Vec::with_capacity(cfg.replicates - failed);
    for r in results {
        if let Ok((g, row)) = r {
            gamma_reps.push(g);
            log_g_reps.push(row);
        }
    }

    let se_gamma = sample_sd(&gamma_reps);
    let ci_gamma = percentile_interval(&gamma_reps, cfg.alpha);
    let pointwise_ci_log_g = (0..n)
        .map(|j| {
            let column: Vec<f64> = log_g_reps.iter().map(|row| row[j]).collect();
            percentile_interval(&column, cfg.alpha)
        })
        .collect();

    Ok(BootstrapSummary {
        gamma_reps,
        log_g_reps,
        se_gamma,
        ci_gamma,
        pointwise_ci_log_g,
        failed_replicates: failed,
    })
}

/// Sample standard deviation (n - 1 divisor); `None` below two values.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let ssd = centered_sum_of_squares(values);
    Some((ssd / (values.len() - 1) as f64).sqrt())
}
