//! Cross-module integration tests: solver oracles, noise limits, bootstrap
//! mechanics.

mod common;

use aarfit::bootstrap::{
    generate_replicate, innovations, resample_innovations, run_bootstrap, BootstrapConfig,
    NoiseMode,
};
use aarfit::data::TempBand;
use aarfit::fitter::{fit_gamma_given_g, loss, FitConfig};
use aarfit::model::fit_model;
use aarfit::noise::{estimate_phi, estimate_sigma2, residuals};
use aarfit::rng::stream_rng;
use aarfit::simulation::{make_design, nominal_rate, simulate_ar1, true_mean, SimConfig};
use aarfit::smoother::KernelSpec;
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};

use common::{grid_golden_gamma, lag1_autocorr, mean, sample_variance, simulated_series};

/// Loss at the true parameters converges to the stationary noise second
/// moment sigma^2 / (1 - phi^2) = 0.102564...
#[test]
fn loss_at_truth_matches_stationary_noise_level() {
    let cfg = SimConfig {
        n: 3000,
        ..SimConfig::default()
    };
    let design = make_design(&cfg);
    let mean_curve = true_mean(&design.age, &design.temp, cfg.gamma0).unwrap();
    let log_g0: Vec<f64> = design.age.iter().map(|z| nominal_rate(*z).ln()).collect();
    let target = cfg.sigma2 / (1.0 - cfg.phi * cfg.phi);

    let draws = 1000;
    let mut values = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut rng = stream_rng(77, d as u64);
        let eps = simulate_ar1(cfg.n, cfg.phi, cfg.sigma2, &mut rng);
        let y: Vec<f64> = mean_curve.iter().zip(&eps).map(|(m, e)| m + e).collect();
        values.push(loss(&y, &design.temp, cfg.gamma0, &log_g0).unwrap());
    }
    let m = mean(&values);
    let sd = sample_variance(&values).sqrt();
    let se = sd / (draws as f64).sqrt();
    assert!(
        (m - target).abs() < 3.0 * se,
        "mean loss {m} vs {target} (se {se})"
    );
    // A single draw sits within a few sd of the limit as well.
    assert!((values[0] - target).abs() < 5.0 * sd);
}

/// Gauss-Newton agrees with an independent grid + golden-section scan of the
/// same objective on 100 random model-like instances.
#[test]
fn gamma_solver_matches_grid_golden_oracle() {
    let mut rng = stream_rng(31, 0);
    for trial in 0..100 {
        let n = rng.random_range(60..400usize);
        let x: Vec<f64> = (0..n)
            .map(|i| {
                -3.0 + 6.0 * (i as f64 * 0.21).cos() + {
                    let j: f64 = StandardNormal.sample(&mut rng);
                    j
                }
            })
            .collect();
        let band = TempBand::from_temps(&x).unwrap();
        let span = band.gamma_upper() - band.gamma_lower();
        let gamma_true = band.gamma_lower() + span * rng.random_range(0.2..0.8);
        let log_g: Vec<f64> = (0..n).map(|i| 1.0 - 0.002 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&log_g)
            .map(|(xi, gi)| {
                (1.0 + gamma_true * xi).ln()
                    + gi
                    + 0.05 * {
                        let u: f64 = StandardNormal.sample(&mut rng);
                        u
                    }
            })
            .collect();
        let fit = fit_gamma_given_g(&y, &x, &log_g, &band, &FitConfig::default()).unwrap();
        let c: Vec<f64> = y.iter().zip(&log_g).map(|(yi, gi)| yi - gi).collect();
        let oracle = grid_golden_gamma(&c, &x, &band);
        assert!(
            (fit.gamma - oracle).abs() <= 1e-8,
            "trial {trial}: gn {} vs oracle {}",
            fit.gamma,
            oracle
        );
    }
}

/// Residuals computed at the true parameters reproduce the simulated noise
/// path exactly.
#[test]
fn residuals_reconstruct_simulated_noise() {
    let cfg = SimConfig {
        n: 500,
        ..SimConfig::default()
    };
    let design = make_design(&cfg);
    let mean_curve = true_mean(&design.age, &design.temp, cfg.gamma0).unwrap();
    let mut rng = stream_rng(5, 9);
    let eps = simulate_ar1(cfg.n, cfg.phi, cfg.sigma2, &mut rng);
    let y: Vec<f64> = mean_curve.iter().zip(&eps).map(|(m, e)| m + e).collect();
    let log_g0: Vec<f64> = design.age.iter().map(|z| nominal_rate(*z).ln()).collect();
    let rec = residuals(&y, &design.temp, cfg.gamma0, &log_g0).unwrap();
    for (a, b) in rec.iter().zip(&eps) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// AR(1) estimators on a direct simulated path land inside the documented
/// finite-sample band at n = 3000.
#[test]
fn phi_estimate_on_simulated_path_is_in_band() {
    // Average over a handful of paths so the check reflects the estimator,
    // not a single draw; the band combines the documented finite-sample
    // bias (about -0.012) with a 3-sd halfwidth (sd about 0.0068).
    let mut phis = Vec::new();
    let mut s2s = Vec::new();
    for k in 0..10 {
        let mut rng = stream_rng(21, k);
        let eps = simulate_ar1(3000, 0.95, 0.01, &mut rng);
        let phi = estimate_phi(&eps).unwrap();
        s2s.push(estimate_sigma2(&eps, phi).unwrap());
        phis.push(phi);
    }
    let phi = mean(&phis);
    assert!((phi - (0.95 - 0.012)).abs() < 3.0 * 0.0068, "phi = {phi}");
    let s2 = mean(&s2s);
    assert!((s2 - 0.01).abs() < 0.15 * 0.01, "sigma2 = {s2}");
}

/// Consistency of the AR parameter estimators on long paths, including the
/// independent-noise case.
#[test]
fn ar_estimators_converge_on_long_paths() {
    for (k, phi) in [-0.5, 0.0, 0.5, 0.95].into_iter().enumerate() {
        let mut rng = stream_rng(100 + k as u64, 0);
        let eps = simulate_ar1(100_000, phi, 0.01, &mut rng);
        let phi_hat = estimate_phi(&eps).unwrap();
        assert!((phi_hat - phi).abs() < 0.01, "phi {phi}: {phi_hat}");
        let s2 = estimate_sigma2(&eps, phi_hat).unwrap();
        assert!((s2 - 0.01).abs() < 0.05 * 0.01, "phi {phi}: sigma2 {s2}");
    }
}

/// Innovations recovered from a fitted pipeline have close to the true
/// innovation variance.
#[test]
fn fitted_innovation_variance_near_truth() {
    let cfg = SimConfig {
        n: 3000,
        ..SimConfig::default()
    };
    let (_, band, series) = simulated_series(&cfg, 1);
    let spec = KernelSpec::epanechnikov(28.0).unwrap();
    let fit = fit_model(&series, &band, &cfg.fit, Some(spec)).unwrap();
    let u = innovations(&fit.noise.residuals, fit.noise.phi_tilde);
    let v = sample_variance(&u);
    assert!(
        (v - 0.01).abs() < 0.15 * 0.01,
        "innovation variance {v}"
    );
}

/// AR(1)-mode replicates carry the requested lag-1 dependence.
#[test]
fn replicate_noise_has_requested_autocorrelation() {
    let cfg = SimConfig {
        n: 3000,
        ..SimConfig::default()
    };
    let design = make_design(&cfg);
    let log_g0: Vec<f64> = design.age.iter().map(|z| nominal_rate(*z).ln()).collect();
    let mean_curve = true_mean(&design.age, &design.temp, cfg.gamma0).unwrap();
    // Innovation pool drawn from the true innovation law.
    let mut rng = stream_rng(55, 0);
    let pool: Vec<f64> = (0..cfg.n - 1)
        .map(|_| {
            let u: f64 = StandardNormal.sample(&mut rng);
            0.1 * u
        })
        .collect();
    let mut acfs = Vec::new();
    for b in 0..100 {
        let mut rng = stream_rng(55, b + 1);
        let u_star = resample_innovations(&pool, &mut rng).unwrap();
        let y_star = generate_replicate(
            &design.temp,
            &log_g0,
            cfg.gamma0,
            0.95,
            &u_star,
            NoiseMode::Ar1,
        )
        .unwrap();
        let noise: Vec<f64> = y_star
            .iter()
            .zip(&mean_curve[1..])
            .map(|(y, m)| y - m)
            .collect();
        acfs.push(lag1_autocorr(&noise));
    }
    let m = mean(&acfs);
    assert!((m - 0.95).abs() < 0.01, "mean lag-1 acf {m}");
}

/// Bootstrap summaries are deterministic, respect the band, bracket the
/// median replicate, and report order-statistic endpoints.
#[test]
fn bootstrap_summary_structure() {
    let cfg = SimConfig {
        n: 150,
        ..SimConfig::default()
    };
    let (_, band, series) = simulated_series(&cfg, 3);
    let spec = KernelSpec::epanechnikov(28.0).unwrap();
    let fit = fit_model(&series, &band, &cfg.fit, Some(spec)).unwrap();
    let bcfg = BootstrapConfig::new(60, 0.05, 11, NoiseMode::Ar1).unwrap();
    let a = run_bootstrap(
        &series,
        &fit.smooth,
        &fit.noise,
        Some(spec),
        &band,
        &cfg.fit,
        &bcfg,
    )
    .unwrap();
    let b = run_bootstrap(
        &series,
        &fit.smooth,
        &fit.noise,
        Some(spec),
        &band,
        &cfg.fit,
        &bcfg,
    )
    .unwrap();
    assert_eq!(a.gamma_reps, b.gamma_reps);
    assert_eq!(a.ci_gamma, b.ci_gamma);
    assert_eq!(a.se_gamma, b.se_gamma);
    assert_eq!(a.failed_replicates, 0);

    for g in &a.gamma_reps {
        assert!(band.contains_gamma(*g));
    }
    let mut sorted = a.gamma_reps.clone();
    sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
    // ceil(0.025 * 60) = 2nd and ceil(0.975 * 60) = 59th order statistics.
    assert_eq!(a.ci_gamma, (sorted[1], sorted[58]));
    let median = sorted[sorted.len() / 2];
    assert!(a.ci_gamma.0 <= median && median <= a.ci_gamma.1);
    assert_eq!(a.pointwise_ci_log_g.len(), series.len());
    for (lo, hi) in &a.pointwise_ci_log_g {
        assert!(lo <= hi);
    }

    // Different seed moves the replicates.
    let bcfg2 = BootstrapConfig::new(60, 0.05, 12, NoiseMode::Ar1).unwrap();
    let c = run_bootstrap(
        &series,
        &fit.smooth,
        &fit.noise,
        Some(spec),
        &band,
        &cfg.fit,
        &bcfg2,
    )
    .unwrap();
    assert_ne!(a.gamma_reps, c.gamma_reps);
}

/// A single-replicate bootstrap runs, reports no spread estimate and a
/// degenerate interval.
#[test]
fn bootstrap_single_replicate_edge() {
    let cfg = SimConfig {
        n: 60,
        ..SimConfig::default()
    };
    let (_, band, series) = simulated_series(&cfg, 8);
    let fit = fit_model(&series, &band, &cfg.fit, None).unwrap();
    let bcfg = BootstrapConfig::new(1, 0.05, 3, NoiseMode::Ar1).unwrap();
    let s = run_bootstrap(
        &series,
        &fit.smooth,
        &fit.noise,
        None,
        &band,
        &cfg.fit,
        &bcfg,
    )
    .unwrap();
    assert_eq!(s.gamma_reps.len(), 1);
    assert!(s.se_gamma.is_none());
    assert_eq!(s.ci_gamma.0, s.ci_gamma.1);
    assert_eq!(s.ci_gamma.0, s.gamma_reps[0]);
}

/// Bootstrap results are identical under different rayon pool sizes.
#[test]
fn bootstrap_is_thread_count_invariant() {
    let cfg = SimConfig {
        n: 100,
        ..SimConfig::default()
    };
    let (_, band, series) = simulated_series(&cfg, 5);
    let spec = KernelSpec::epanechnikov(28.0).unwrap();
    let fit = fit_model(&series, &band, &cfg.fit, Some(spec)).unwrap();
    let bcfg = BootstrapConfig::new(24, 0.1, 7, NoiseMode::Ar1).unwrap();
    let run_in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            run_bootstrap(
                &series,
                &fit.smooth,
                &fit.noise,
                Some(spec),
                &band,
                &cfg.fit,
                &bcfg,
            )
            .unwrap()
        })
    };
    let one = run_in_pool(1);
    let four = run_in_pool(4);
    assert_eq!(one.gamma_reps, four.gamma_reps);
    assert_eq!(one.log_g_reps, four.log_g_reps);
    assert_eq!(one.ci_gamma, four.ci_gamma);
}

/// The two replicate noise modes produce different series when phi != 0 and
/// identical ones at phi = 0 (mode contract).
#[test]
fn noise_modes_differ_only_through_phi() {
    let x = vec![-1.0, 0.5, 1.5, -2.0, 0.0];
    let log_g = vec![1.0, 0.9, 0.8, 0.7, 0.6];
    let u: Vec<f64> = vec![0.2, -0.1, 0.3, 0.05, -0.25];
    let a = generate_replicate(&x, &log_g, 0.03, 0.9, &u, NoiseMode::Ar1).unwrap();
    let d = generate_replicate(&x, &log_g, 0.03, 0.9, &u, NoiseMode::Differenced).unwrap();
    assert_ne!(a, d);
}
