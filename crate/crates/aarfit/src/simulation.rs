//! Synthetic finite-sample study: a fixed quadratic age profile and an
//! oscillating temperature profile over a uniform depth grid, AR(1) noise on
//! the log scale, and Monte Carlo summaries of estimator bias, spread and
//! bootstrap coverage.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, sample_sd, BootstrapConfig, NoiseMode};
use crate::data::{DerivedSeries, TempBand};
use crate::error::{Error, Result};
use crate::fitter::FitConfig;
use crate::model::fit_model;
use crate::rng::{derive_seed, stream_rng};
use crate::smoother::KernelSpec;

/// Age at depth `d` meters: `7e-5 * d^2` KYrBP.
const AGE_SCALE: f64 = 7e-5;

/// Angular scale of the temperature oscillation over depth squared.
const TEMP_WAVE_SCALE: f64 = 14.0 * std::f64::consts::PI * 1e-7;

/// Fraction of failed runs above which a study aborts.
const MAX_RUN_FAILURE_FRACTION: f64 = 0.05;

/// Number of grid points for the pointwise log-baseline summaries.
const LOG_G_GRID_POINTS: usize = 101;

/// Study controls. Defaults mirror the synthetic design: a 3000 m core,
/// temperature effect 0.05, strongly persistent AR(1) noise (phi = 0.95,
/// sigma^2 = 0.01), bandwidth 28 KYr, 200 runs with 200 bootstrap
/// replicates each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Depth span in meters.
    pub delta: f64,
    pub gamma0: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub runs: usize,
    /// Bootstrap replicates per run (coverage studies).
    pub replicates: usize,
    /// Kernel bandwidth in KYr; 0 disables smoothing.
    pub bandwidth: f64,
    pub alpha: f64,
    pub design_seed: u64,
    pub run_seed: u64,
    pub fit: FitConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            delta: 3000.0,
            gamma0: 0.05,
            phi: 0.95,
            sigma2: 0.01,
            runs: 200,
            replicates: 200,
            bandwidth: 28.0,
            alpha: 0.05,
            design_seed: 1,
            run_seed: 2,
            fit: FitConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be at least 2".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig("delta must be positive".into()));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "phi must satisfy |phi| < 1, got {}",
                self.phi
            )));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidConfig("sigma2 must be positive".into()));
        }
        if !(self.bandwidth >= 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidConfig("bandwidth must be finite and >= 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        self.fit.validate()
    }

    fn smoothing(&self) -> Result<Option<KernelSpec>> {
        if self.bandwidth == 0.0 {
            Ok(None)
        } else {
            KernelSpec::epanechnikov(self.bandwidth).map(Some)
        }
    }
}

/// Fixed design arrays: depth grid, ages and temperatures. The temperature
/// jitter is drawn once from `design_seed` and reused across all runs.
#[derive(Debug, Clone)]
pub struct Design {
    pub depth: Vec<f64>,
    pub age: Vec<f64>,
    pub temp: Vec<f64>,
}

/// Builds the design: `d_i = i * delta / n`, `z_i = 7e-5 d_i^2`,
/// `x_i = -3 + 8 cos(14 pi 1e-7 d_i^2) + theta_i` with standard normal
/// jitter `theta`.
pub fn make_design(cfg: &SimConfig) -> Design {
    let mut rng = stream_rng(cfg.design_seed, 0);
    let n = cfg.n;
    let mut depth = Vec::with_capacity(n);
    let mut age = Vec::with_capacity(n);
    let mut temp = Vec::with_capacity(n);
    for i in 1..=n {
        let d = i as f64 * cfg.delta / n as f64;
        let d2 = d * d;
        let jitter: f64 = StandardNormal.sample(&mut rng);
        depth.push(d);
        age.push(AGE_SCALE * d2);
        temp.push(-3.0 + 8.0 * (TEMP_WAVE_SCALE * d2).cos() + jitter);
    }
    Design { depth, age, temp }
}

/// Nominal accumulation rate at temperature anomaly zero: `25 e^{-z/100} + 1`.
pub fn nominal_rate(z: f64) -> f64 {
    25.0 * (-z / 100.0).exp() + 1.0
}

/// True mean of the log rate: `ln(1 + gamma0 x) + ln(nominal_rate(z))`.
pub fn true_mean(z: &[f64], x: &[f64], gamma0: f64) -> Result<Vec<f64>> {
    if z.len() != x.len() {
        return Err(Error::LengthMismatch(z.len(), x.len()));
    }
    z.iter()
        .zip(x)
        .enumerate()
        .map(|(i, (zi, xi))| {
            let u = 1.0 + gamma0 * xi;
            if u <= 0.0 {
                return Err(Error::DomainViolation {
                    index: i,
                    gamma: gamma0,
                    x: *xi,
                });
            }
            Ok(u.ln() + nominal_rate(*zi).ln())
        })
        .collect()
}

/// Stationary AR(1) path of length `n`: Gaussian innovations with variance
/// `sigma2`, first element drawn from the stationary law.
pub fn simulate_ar1(n: usize, phi: f64, sigma2: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(phi.abs() < 1.0, "ar(1) requires |phi| < 1, got {phi}");
    assert!(sigma2 >= 0.0, "variance must be nonnegative, got {sigma2}");
    let sd = sigma2.sqrt();
    let stationary_sd = (sigma2 / (1.0 - phi * phi)).sqrt();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let z0: f64 = StandardNormal.sample(rng);
    out.push(stationary_sd * z0);
    for _ in 1..n {
        let u: f64 = StandardNormal.sample(rng);
        let prev = *out.last().unwrap();
        out.push(phi * prev + sd * u);
    }
    out
}

/// One synthetic series: true mean over the design plus a fresh AR(1) path.
pub fn simulate_series(
    design: &Design,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DerivedSeries> {
    let mean = true_mean(&design.age, &design.temp, cfg.gamma0)?;
    let eps = simulate_ar1(cfg.n, cfg.phi, cfg.sigma2, rng);
    let y: Vec<f64> = mean.iter().zip(&eps).map(|(m, e)| m + e).collect();
    DerivedSeries::from_log_parts(design.age.clone(), design.temp.clone(), y)
}

/// Bias/spread summary of the three scalar estimators for one (n, h) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummaryRow {
    pub n: usize,
    pub h: f64,
    pub runs_completed: usize,
    pub runs_failed: usize,
    pub bias_gamma: f64,
    pub sd_gamma: f64,
    pub bias_phi: f64,
    pub sd_phi: f64,
    pub bias_sigma2: f64,
    pub sd_sigma2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: f64,
    pub bias: f64,
    pub sd: f64,
}

/// Pointwise bias/spread of the smoothed log baseline on a fixed age grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogGCurve {
    pub n: usize,
    pub h: f64,
    pub points: Vec<CurvePoint>,
}

/// Bootstrap coverage summary for one (n, h) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub n: usize,
    pub h: f64,
    pub runs_completed: usize,
    pub runs_failed: usize,
    /// Fraction of runs whose percentile interval covered gamma0.
    pub coverage_gamma: f64,
    /// Mean bootstrap standard error of the coefficient across runs.
    pub mean_boot_se_gamma: f64,
    /// Standard deviation of the coefficient estimates across runs (the
    /// direct Monte Carlo reference the bootstrap tries to match).
    pub direct_sd_gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointCoverage {
    pub z: f64,
    pub coverage: f64,
}

/// Pointwise bootstrap coverage of the true log baseline at a subset of
/// sample ages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogGCoverageCurve {
    pub n: usize,
    pub h: f64,
    pub points: Vec<PointCoverage>,
}

/// Aggregated study output; sections are filled by whichever study ran.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StudyResult {
    pub bias_sd: Vec<EstimatorSummaryRow>,
    pub log_g_curves: Vec<LogGCurve>,
    pub coverage: Vec<CoverageRow>,
    pub log_g_coverage: Vec<LogGCoverageCurve>,
}

impl StudyResult {
    pub fn merge(&mut self, other: StudyResult) {
        self.bias_sd.extend(other.bias_sd);
        self.log_g_curves.extend(other.log_g_curves);
        self.coverage.extend(other.coverage);
        self.log_g_coverage.extend(other.log_g_coverage);
    }
}

fn age_grid(cfg: &SimConfig) -> Vec<f64> {
    let z_max = AGE_SCALE * cfg.delta * cfg.delta;
    (0..LOG_G_GRID_POINTS)
        .map(|j| z_max * j as f64 / (LOG_G_GRID_POINTS - 1) as f64)
        .collect()
}

fn mean_of(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.sum::<f64>() / count as f64
}

fn check_run_failures(total: usize, failed: usize) -> Result<()> {
    let allowed = (MAX_RUN_FAILURE_FRACTION * total as f64).floor() as usize;
    if failed > allowed {
        return Err(Error::TooManyRunFailures {
            failed,
            total,
            allowed,
        });
    }
    Ok(())
}

struct BiasSdRun {
    gamma: f64,
    phi: f64,
    sigma2: f64,
    log_g_on_grid: Vec<f64>,
}

/// Monte Carlo bias and spread of the coefficient, the AR parameters and
/// the pointwise log baseline: `cfg.runs` independent series, each fully
/// refitted at bandwidth `cfg.bandwidth`. Runs use numbered noise streams
/// of `run_seed`; no bootstrap is involved.
pub fn run_bias_sd_study(cfg: &SimConfig) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.runs < 2 {
        return Err(Error::InvalidConfig(
            "bias/sd study needs at least 2 runs".into(),
        ));
    }
    let design = make_design(cfg);
    let band = TempBand::from_temps(&design.temp)?;
    let smoothing = cfg.smoothing()?;
    let grid = age_grid(cfg);

    let results: Vec<Result<BiasSdRun>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.run_seed, r as u64 + 1);
            let series = simulate_series(&design, cfg, &mut rng)?;
            let fit = fit_model(&series, &band, &cfg.fit, smoothing)?;
            let log_g_on_grid = grid
                .iter()
                .map(|&z| fit.smooth.log_g_tilde.eval_or_nearest(z).0)
                .collect();
            Ok(BiasSdRun {
                gamma: fit.smooth.gamma_tilde,
                phi: fit.noise.phi_tilde,
                sigma2: fit.noise.sigma2_tilde,
                log_g_on_grid,
            })
        })
        .collect();

    let failed = results.iter().filter(|r| r.is_err()).count();
    check_run_failures(cfg.runs, failed)?;
    let runs: Vec<BiasSdRun> = results.into_iter().filter_map(|r| r.ok()).collect();
    let m = runs.len();

    let gamma: Vec<f64> = runs.iter().map(|r| r.gamma).collect();
    let phi: Vec<f64> = runs.iter().map(|r| r.phi).collect();
    let sigma2: Vec<f64> = runs.iter().map(|r| r.sigma2).collect();
    let row = EstimatorSummaryRow {
        n: cfg.n,
        h: cfg.bandwidth,
        runs_completed: m,
        runs_failed: failed,
        bias_gamma: mean_of(gamma.iter().copied(), m) - cfg.gamma0,
        sd_gamma: sample_sd(&gamma).unwrap_or(0.0),
        bias_phi: mean_of(phi.iter().copied(), m) - cfg.phi,
        sd_phi: sample_sd(&phi).unwrap_or(0.0),
        bias_sigma2: mean_of(sigma2.iter().copied(), m) - cfg.sigma2,
        sd_sigma2: sample_sd(&sigma2).unwrap_or(0.0),
    };

    let points = grid
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let vals: Vec<f64> = runs.iter().map(|r| r.log_g_on_grid[j]).collect();
            CurvePoint {
                z,
                bias: mean_of(vals.iter().copied(), m) - nominal_rate(z).ln(),
                sd: sample_sd(&vals).unwrap_or(0.0),
            }
        })
        .collect();

    Ok(StudyResult {
        bias_sd: vec![row],
        log_g_curves: vec![LogGCurve {
            n: cfg.n,
            h: cfg.bandwidth,
            points,
        }],
        ..StudyResult::default()
    })
}

struct CoverageRun {
    gamma: f64,
    boot_se: Option<f64>,
    covers_gamma0: bool,
    covers_log_g: Vec<bool>,
}

/// Bootstrap coverage study over a bandwidth grid: for each bandwidth,
/// every run simulates a series (noise streams shared across bandwidths for
/// paired comparison), fits the pipeline, bootstraps `cfg.replicates`
/// replicates and checks whether the percentile intervals cover the truth.
/// Pointwise baseline coverage is evaluated at the sample ages nearest a
/// fixed grid.
pub fn run_coverage_study(cfg: &SimConfig, h_grid: &[f64]) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.runs == 0 || h_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "coverage study needs at least one run and one bandwidth".into(),
        ));
    }
    for &h in h_grid {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid bandwidth {h}")));
        }
    }
    let design = make_design(cfg);
    let band = TempBand::from_temps(&design.temp)?;
    let grid = age_grid(cfg);
    // Sample indices closest to each grid age; coverage is checked at those
    // exact sample ages.
    let check_indices: Vec<usize> = grid
        .iter()
        .map(|&z| {
            let i = design.age.partition_point(|a| *a < z);
            if i == 0 {
                0
            } else if i == design.age.len() {
                design.age.len() - 1
            } else if (z - design.age[i - 1]).abs() <= (design.age[i] - z).abs() {
                i - 1
            } else {
                i
            }
        })
        .collect();
    let truth_at_checks: Vec<f64> = check_indices
        .iter()
        .map(|&k| nominal_rate(design.age[k]).ln())
        .collect();

    let mut result = StudyResult::default();
    for &h in h_grid {
        let smoothing = if h == 0.0 {
            None
        } else {
            Some(KernelSpec::epanechnikov(h)?)
        };
        let runs: Vec<Result<CoverageRun>> = (0..cfg.runs)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(cfg.run_seed, r as u64 + 1);
                let series = simulate_series(&design, cfg, &mut rng)?;
                let fit = fit_model(&series, &band, &cfg.fit, smoothing)?;
                let bcfg = BootstrapConfig::new(
                    cfg.replicates,
                    cfg.alpha,
                    derive_seed(cfg.run_seed, r as u64),
                    NoiseMode::Ar1,
                )?;
                let summary = run_bootstrap(
                    &series,
                    &fit.smooth,
                    &fit.noise,
                    smoothing,
                    &band,
                    &cfg.fit,
                    &bcfg,
                )?;
                let covers_gamma0 = summary.ci_gamma.0 <= cfg.gamma0
                    && cfg.gamma0 <= summary.ci_gamma.1;
                let covers_log_g = check_indices
                    .iter()
                    .zip(&truth_at_checks)
                    .map(|(&k, &t)| {
                        let (lo, hi) = summary.pointwise_ci_log_g[k];
                        lo <= t && t <= hi
                    })
                    .collect();
                Ok(CoverageRun {
                    gamma: fit.smooth.gamma_tilde,
                    boot_se: summary.se_gamma,
                    covers_gamma0,
                    covers_log_g,
                })
            })
            .collect();

        let failed = runs.iter().filter(|r| r.is_err()).count();
        check_run_failures(cfg.runs, failed)?;
        let ok: Vec<CoverageRun> = runs.into_iter().filter_map(|r| r.ok()).collect();
        let m = ok.len();
        let gammas: Vec<f64> = ok.iter().map(|r| r.gamma).collect();
        let ses: Vec<f64> = ok.iter().filter_map(|r| r.boot_se).collect();
        result.coverage.push(CoverageRow {
            n: cfg.n,
            h,
            runs_completed: m,
            runs_failed: failed,
            coverage_gamma: ok.iter().filter(|r| r.covers_gamma0).count() as f64 / m as f64,
            mean_boot_se_gamma: if ses.is_empty() {
                f64::NAN
            } else {
                mean_of(ses.iter().copied(), ses.len())
            },
            direct_sd_gamma: sample_sd(&gammas).unwrap_or(0.0),
        });
        result.log_g_coverage.push(LogGCoverageCurve {
            n: cfg.n,
            h,
            points: check_indices
                .iter()
                .enumerate()
                .map(|(j, &k)| PointCoverage {
                    z: design.age[k],
                    coverage: ok.iter().filter(|r| r.covers_log_g[j]).count() as f64
                        / m as f64,
                })
                .collect(),
        });
    }
    Ok(result)
}
