//! Weighted least-squares regression onto nonincreasing sequences.
//!
//! The production path is a linear-time stack-based pool-adjacent-violators
//! pass. A direct min-max evaluation of the same minimizer is kept as a
//! cross-checking oracle; it is quadratic-to-cubic and only suitable for
//! short inputs.

use crate::error::{Error, Result};

/// Fitted nonincreasing values over strictly increasing knots, evaluated by
/// linear interpolation between knots and constant extrapolation outside.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneStepFn {
    knots: Vec<f64>,
    levels: Vec<f64>,
}

impl MonotoneStepFn {
    /// Wraps knot locations and fitted levels.
    ///
    /// Knots must be nondecreasing (duplicates tolerated for degenerate
    /// inputs) and levels nonincreasing.
    pub fn new(knots: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::EmptyInput);
        }
        if knots.len() != levels.len() {
            return Err(Error::LengthMismatch(knots.len(), levels.len()));
        }
        if let Some(i) = knots.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::NonMonotone {
                field: "knot",
                row: i + 2,
            });
        }
        if let Some(i) = levels.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::NonMonotone {
                field: "level (expected nonincreasing)",
                row: i + 2,
            });
        }
        Ok(Self { knots, levels })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Value at `z`: exact level at a knot, linear interpolation between
    /// knots, constant extrapolation beyond the ends.
    pub fn eval(&self, z: f64) -> f64 {
        let n = self.knots.len();
        let i = self.knots.partition_point(|k| *k < z);
        if i == n {
            return self.levels[n - 1];
        }
        if self.knots[i] == z {
            return self.levels[i];
        }
        if i == 0 {
            return self.levels[0];
        }
        let (z0, z1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.levels[i - 1], self.levels[i]);
        v0 + (v1 - v0) * (z - z0) / (z1 - z0)
    }
}

/// Projects `values` onto the nonincreasing cone, minimizing the weighted
/// sum of squares. Uniform weights when `weights` is `None`.
///
/// Single left-to-right pass over a stack of blocks: a new block is pooled
/// backwards (weighted mean) while it exceeds its predecessor.
pub fn pava_nonincreasing(values: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(Error::LengthMismatch(values.len(), w.len()));
        }
        if let Some(i) = w.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::NonPositiveWeight {
                index: i,
                value: w[i],
            });
        }
    }
    let n = values.len();
    // Blocks as (mean, weight, count).
    let mut mean: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    let mut count: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        mean.push(values[i]);
        weight.push(weights.map_or(1.0, |w| w[i]));
        count.push(1);
        while mean.len() > 1 && mean[mean.len() - 2] < mean[mean.len() - 1] {
            let (m1, w1, c1) = (mean.pop().unwrap(), weight.pop().unwrap(), count.pop().unwrap());
            let j = mean.len() - 1;
            let w_new = weight[j] + w1;
            mean[j] = (weight[j] * mean[j] + w1 * m1) / w_new;
            weight[j] = w_new;
            count[j] += c1;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (m, c) in mean.iter().zip(count.iter()) {
        out.extend(std::iter::repeat(*m).take(*c));
    }
    Ok(out)
}

/// Direct evaluation of the nonincreasing least-squares fit as, per index
/// `i`, the min over starts `j <= i` of the max over ends `l >= i` of the
/// segment mean of `values[j..=l]`. Unweighted; used as a test oracle.
pub fn minmax_nonincreasing(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let seg_mean = |j: usize, l: usize| (prefix[l + 1] - prefix[j]) / ((l - j + 1) as f64);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = f64::INFINITY;
        for j in 0..=i {
            let mut worst = f64::NEG_INFINITY;
            for l in i..n {
                worst = worst.max(seg_mean(j, l));
            }
            best = best.min(worst);
        }
        out.push(best);
    }
    Ok(out)
}
