//! Shift-stabilized softmin / log-mean-exp kernels and ordinary least squares.
//!
//! Nothing here forms `exp(-g / eps)` directly: every exponent is taken
//! relative to the minimum value, so the largest term is exactly 1 and the
//! normalizer is at least 1 even when `eps` is 1e-300.

use serde::Serialize;

use crate::error::{Error, Result};

fn checked_min(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    let mut m = f64::INFINITY;
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::InvalidEvaluation { index, value });
        }
        m = m.min(value);
    }
    Ok(m)
}

/// Writes `exp((min - v_j) / eps)` into `out` and returns its sum.
fn shifted_exponentials(values: &[f64], min: f64, epsilon: f64, out: &mut Vec<f64>) -> f64 {
    out.clear();
    out.extend(values.iter().map(|&v| ((min - v) / epsilon).exp()));
    out.iter().sum()
}

/// Normalized Gibbs weights `exp(-v_j / eps) / sum_k exp(-v_k / eps)`.
pub fn softmin_weights(values: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(values.len());
    softmin_weights_into(values, epsilon, &mut w)?;
    Ok(w)
}

/// As [`softmin_weights`], reusing `out`'s allocation.
pub fn softmin_weights_into(values: &[f64], epsilon: f64, out: &mut Vec<f64>) -> Result<()> {
    debug_assert!(epsilon > 0.0);
    let m = checked_min(values)?;
    let total = shifted_exponentials(values, m, epsilon, out);
    out.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

/// `-eps * ln(mean_j exp(-v_j / eps))`.
pub fn log_mean_exp(values: &[f64], epsilon: f64) -> Result<f64> {
    log_mean_exp_with_stderr(values, epsilon).map(|(v, _)| v)
}

/// Log-mean-exp together with its delta-method standard error.
///
/// With `u_j = exp((m - v_j)/eps)` and `ubar` their mean, the estimate is
/// `m - eps ln ubar` and the standard error is `eps * sd(u) / (sqrt(n) ubar)`.
pub fn log_mean_exp_with_stderr(values: &[f64], epsilon: f64) -> Result<(f64, f64)> {
    debug_assert!(epsilon > 0.0);
    let m = checked_min(values)?;
    let mut u = Vec::with_capacity(values.len());
    let total = shifted_exponentials(values, m, epsilon, &mut u);
    let n = values.len() as f64;
    let mean = total / n;
    let estimate = m - epsilon * mean.ln();
    let stderr = if values.len() < 2 {
        0.0
    } else {
        let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        epsilon * (var / n).sqrt() / mean
    };
    Ok((estimate, stderr))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rmse: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares `y ~ slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Empty("fit needs at least two points"));
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::SingularFit);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        rmse: (ss_res / n).sqrt(),
        r2,
    })
}
