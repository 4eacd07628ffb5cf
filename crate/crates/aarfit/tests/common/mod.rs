//! Shared helpers and independent oracles for the integration tests.
//!
//! Everything here recomputes expected values through routes that do not
//! share code with the production implementations they check.

#![allow(dead_code)]

use aarfit::data::TempBand;
use aarfit::simulation::{make_design, true_mean, Design, SimConfig};
use aarfit::{simulate_ar1, DerivedSeries};

/// Sample variance with the n-1 divisor.
pub fn sample_variance(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Exhaustive minimizer of the nonincreasing least-squares problem by
/// enumerating all 2^(n-1) consecutive-block partitions, keeping those whose
/// block means are nonincreasing, and taking the cheapest. Exact for the
/// cone-projection problem; practical for n <= 16.
pub fn brute_force_nonincreasing(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 1 && n <= 16);
    let mut best_cost = f64::INFINITY;
    let mut best_fit = vec![values[0]; n];
    for mask in 0..(1u32 << (n - 1)) {
        // Bit i set = block boundary between i and i+1.
        let mut fit = Vec::with_capacity(n);
        let mut means = Vec::new();
        let mut start = 0usize;
        for i in 0..n {
            let boundary = i == n - 1 || (mask >> i) & 1 == 1;
            if boundary {
                let block = &values[start..=i];
                let m = block.iter().sum::<f64>() / block.len() as f64;
                means.push(m);
                fit.extend(std::iter::repeat(m).take(block.len()));
                start = i + 1;
            }
        }
        let feasible = means.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        if !feasible {
            continue;
        }
        let cost: f64 = values
            .iter()
            .zip(&fit)
            .map(|(v, f)| (v - f) * (v - f))
            .sum();
        if cost < best_cost {
            best_cost = cost;
            best_fit = fit;
        }
    }
    best_fit
}

/// Grid scan plus golden-section refinement of the 1-D objective
/// mean((c_i - ln(1 + gamma x_i))^2) over the band's coefficient interval.
pub fn grid_golden_gamma(c: &[f64], x: &[f64], band: &TempBand) -> f64 {
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
    let (lo, hi) = (band.gamma_lower(), band.gamma_upper());
    let points = 4000usize;
    let at = |k: usize| lo + (hi - lo) * k as f64 / points as f64;
    let mut best_k = 0;
    let mut best = f64::INFINITY;
    for k in 0..=points {
        let f = obj(at(k));
        if f < best {
            best = f;
            best_k = k;
        }
    }
    let mut a = at(best_k.saturating_sub(1));
    let mut b = at((best_k + 1).min(points));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c1 = b - inv_phi * (b - a);
    let mut c2 = a + inv_phi * (b - a);
    let mut f1 = obj(c1);
    let mut f2 = obj(c2);
    while b - a > 1e-13 {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv_phi * (b - a);
            f1 = obj(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv_phi * (b - a);
            f2 = obj(c2);
        }
    }
    0.5 * (a + b)
}

/// Design plus one simulated series drawn on the given stream.
pub fn simulated_series(cfg: &SimConfig, stream: u64) -> (Design, TempBand, DerivedSeries) {
    let design = make_design(cfg);
    let band = TempBand::from_temps(&design.temp).unwrap();
    let mean_curve = true_mean(&design.age, &design.temp, cfg.gamma0).unwrap();
    let mut rng = aarfit::rng::stream_rng(cfg.run_seed, stream);
    let eps = simulate_ar1(cfg.n, cfg.phi, cfg.sigma2, &mut rng);
    let y: Vec<f64> = mean_curve.iter().zip(&eps).map(|(m, e)| m + e).collect();
    let series =
        DerivedSeries::from_log_parts(design.age.clone(), design.temp.clone(), y).unwrap();
    (design, band, series)
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorr(v: &[f64]) -> f64 {
    let m = mean(v);
    let num: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    num / den
}

/// Synthetic core file whose apparent rate follows the model: a decaying
/// baseline times a temperature-linked factor, plus a mild deterministic
/// wobble. Depth increments are backed out from the target rates.
pub fn write_synthetic_core(path: &std::path::Path, records: usize) {
    let da = 0.2;
    let ages: Vec<f64> = (0..records).map(|i| i as f64 * da).collect();
    let temps: Vec<f64> = (0..records)
        .map(|i| -3.0 + 4.0 * (i as f64 * 0.31).cos())
        .collect();
    let mut text = String::from("# synthetic core\ndepth_m,age_kyrbp,temp_c\n");
    let mut depth = 0.0;
    for i in 0..records {
        text.push_str(&format!("{depth},{},{}\n", ages[i], temps[i]));
        if i + 1 < records {
            let z = 0.5 * (ages[i] + ages[i + 1]);
            let x = 0.5 * (temps[i] + temps[i + 1]);
            let y = (1.0 + 0.05 * x).ln()
                + (25.0 * (-z / 100.0).exp() + 1.0).ln()
                + 0.05 * (1.7 * i as f64).sin();
            depth += y.exp() * da;
        }
    }
    std::fs::write(path, text).unwrap();
}
