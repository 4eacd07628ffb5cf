//! End-to-end fit pipeline: alternation, smoothing stage, noise stage.

use crate::data::{DerivedSeries, TempBand};
use crate::error::Result;
use crate::fitter::{alternate_fit, FitConfig, StepFit};
use crate::noise::{estimate_noise, NoiseEstimates};
use crate::smoother::{smooth_step_fit, KernelSpec, SmoothFit};

/// Complete fit of one series: the step stage, the smoothed stage and the
/// noise estimates derived from the smoothed residuals.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub step: StepFit,
    pub smooth: SmoothFit,
    pub noise: NoiseEstimates,
}

/// Step stage plus smoothing/refit, without noise estimation (bootstrap
/// replicates only need the coefficient and the baseline).
pub fn fit_gamma_and_g(
    series: &DerivedSeries,
    band: &TempBand,
    cfg: &FitConfig,
    smoothing: Option<KernelSpec>,
) -> Result<(StepFit, SmoothFit)> {
    let step = alternate_fit(series, band, cfg)?;
    let smooth = smooth_step_fit(
        &step,
        series.log_rate(),
        series.temp(),
        band,
        cfg,
        smoothing,
    )?;
    Ok((step, smooth))
}

/// Full pipeline on one series. `smoothing: None` keeps the raw step
/// baseline (the no-smoothing limit).
pub fn fit_model(
    series: &DerivedSeries,
    band: &TempBand,
    cfg: &FitConfig,
    smoothing: Option<KernelSpec>,
) -> Result<ModelFit> {
    let (step, smooth) = fit_gamma_and_g(series, band, cfg, smoothing)?;
    let log_g_tilde = smooth.values_at(series.age());
    let noise = estimate_noise(
        series.log_rate(),
        series.temp(),
        smooth.gamma_tilde,
        &log_g_tilde,
    )?;
    Ok(ModelFit {
        step,
        smooth,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_runs_on_tiny_series() {
        let series = DerivedSeries::from_log_parts(
            vec![1.0, 3.0],
            vec![-2.0, -4.0],
            vec![0.5f64.ln(), 0.5f64.ln()],
        )
        .unwrap();
        let band = TempBand::from_temps(series.temp()).unwrap();
        let spec = KernelSpec::epanechnikov(28.0).unwrap();
        let fit = fit_model(&series, &band, &FitConfig::default(), Some(spec)).unwrap();
        assert!(fit.step.converged);
        assert!(fit.noise.degenerate);
        assert_eq!(fit.noise.residuals.len(), 2);
    }
}
