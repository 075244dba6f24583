//! Log-log rate fitting and per-level estimates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Minimum number of usable levels for a fit.
pub const MIN_FIT_LEVELS: usize = 3;

/// Confidence level of reported slope intervals.
pub const CONFIDENCE: f64 = 0.95;

/// One resolution of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    /// Dyadic exponent: `h = L·2^{−level}` (or `dt = 2^{−level}`).
    pub level: i32,
    pub h: f64,
    pub error: f64,
    pub stderr: f64,
    pub usable: bool,
}

/// Weighted least-squares fit of `log error = c + slope·log h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub levels_used: usize,
}

/// Fit over the usable levels. Weights are `(error/stderr)²`, the inverse
/// delta-method variance of `log error`; all-deterministic data (zero
/// stderr) is fitted unweighted. The interval uses Student-t quantiles with
/// the residual variance, never narrower than the propagated MC variance.
pub fn fit_rate(levels: &[LevelEstimate]) -> Result<RateFit> {
    let pts: Vec<&LevelEstimate> = levels
        .iter()
        .filter(|l| l.usable && l.error > 0.0 && l.error.is_finite() && l.h > 0.0)
        .collect();
    if pts.len() < MIN_FIT_LEVELS {
        return Err(Error::InsufficientData { usable: pts.len(), needed: MIN_FIT_LEVELS });
    }
    let weighted = pts.iter().all(|l| l.stderr > 0.0);
    let x: Vec<f64> = pts.iter().map(|l| l.h.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|l| l.error.ln()).collect();
    let w: Vec<f64> = pts
        .iter()
        .map(|l| if weighted { (l.error / l.stderr).powi(2) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::arg("rate fit needs at least two distinct resolutions"));
    }
    let sxy: f64 = x.iter().zip(&y).zip(&w).map(|((x, y), w)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let n = pts.len();
    let dof = (n - 2) as f64;
    let chi2: f64 = x
        .iter()
        .zip(&y)
        .zip(&w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let scale = if weighted { (chi2 / dof).max(1.0) } else { chi2 / dof };
    let se = (scale / sxx).sqrt();
    let q = if n > 2 {
        StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .inverse_cdf(0.5 + 0.5 * CONFIDENCE)
    } else {
        f64::INFINITY
    };
    Ok(RateFit { slope, intercept, ci_lo: slope - q * se, ci_hi: slope + q * se, levels_used: n })
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean and standard error of the mean, summed in input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    n: usize,
    s1: NeumaierSum,
    s2: NeumaierSum,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1.add(x);
        self.s2.add(x * x);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.s1.value() / self.n as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        let var = ((self.s2.value() - n * m * m) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}
