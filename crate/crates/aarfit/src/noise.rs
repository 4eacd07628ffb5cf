//! Residual extraction and AR(1) noise parameter estimation.
//!
//! The residuals strip the fitted mean from the log rates. The lag
//! coefficient is the ratio of the lag-1 cross sum to the sum of squares of
//! the residuals from the second onward (both sums start at the second
//! residual; this differs from the textbook Yule-Walker lag-0 normalization
//! by a single boundary term, vanishing at rate 1/n). The innovation
//! variance divides the sum of squared one-step prediction errors by the
//! full sample size n, not n - 1.

use crate::error::{Error, Result};
use crate::fitter::adjusted_responses;

/// Residuals with AR(1) parameter estimates.
#[derive(Debug, Clone)]
pub struct NoiseEstimates {
    pub residuals: Vec<f64>,
    pub phi_tilde: f64,
    pub sigma2_tilde: f64,
    /// True when the lag ratio was undefined (all trailing residuals zero)
    /// and `phi_tilde` was set to 0 as a fallback.
    pub degenerate: bool,
    /// True when `phi_tilde` fell outside (-1, 1); the value is reported
    /// as-is, this flag only marks it.
    pub phi_outside_unit: bool,
}

/// Residuals `y_i - ln(1 + gamma * x_i) - log_g_tilde_i`.
pub fn residuals(y: &[f64], x: &[f64], gamma: f64, log_g_tilde: &[f64]) -> Result<Vec<f64>> {
    if y.len() != log_g_tilde.len() {
        return Err(Error::LengthMismatch(y.len(), log_g_tilde.len()));
    }
    let adj = adjusted_responses(y, x, gamma)?;
    Ok(adj.iter().zip(log_g_tilde).map(|(a, g)| a - g).collect())
}

/// Lag coefficient estimate: sum of eps_i * eps_{i-1} over sum of eps_i^2,
/// both sums running from the second element.
pub fn estimate_phi(eps: &[f64]) -> Result<f64> {
    if eps.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: eps.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 1..eps.len() {
        num += eps[i] * eps[i - 1];
        den += eps[i] * eps[i];
    }
    if den == 0.0 {
        return Err(Error::ZeroLagDenominator);
    }
    Ok(num / den)
}

/// Innovation variance estimate: mean of squared one-step prediction errors
/// with a 1/n normalization over the n - 1 available terms.
pub fn estimate_sigma2(eps: &[f64], phi: f64) -> Result<f64> {
    if eps.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: eps.len(),
        });
    }
    let mut sum = 0.0;
    for i in 1..eps.len() {
        let u = eps[i] - phi * eps[i - 1];
        sum += u * u;
    }
    Ok(sum / eps.len() as f64)
}

/// Full noise stage: residuals, then the AR(1) parameters. A zero lag
/// denominator (perfect fit) degrades to `phi_tilde = 0` with the
/// `degenerate` flag set instead of failing, so downstream reporting still
/// works on toy inputs.
pub fn estimate_noise(
    y: &[f64],
    x: &[f64],
    gamma: f64,
    log_g_tilde: &[f64],
) -> Result<NoiseEstimates> {
    let eps = residuals(y, x, gamma, log_g_tilde)?;
    let (phi, degenerate) = match estimate_phi(&eps) {
        Ok(phi) => (phi, false),
        Err(Error::ZeroLagDenominator) => (0.0, true),
        Err(e) => return Err(e),
    };
    let sigma2 = estimate_sigma2(&eps, phi)?;
    Ok(NoiseEstimates {
        residuals: eps,
        phi_tilde: phi,
        sigma2_tilde: sigma2,
        degenerate,
        phi_outside_unit: !(phi > -1.0 && phi < 1.0),
    })
}
