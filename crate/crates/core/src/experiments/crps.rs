// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};

pub const QUANTILE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Quantile of sorted data by linear interpolation between order statistics
/// at position `(n - 1) q`.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn pinball(kappa: f64, q: f64, y: f64) -> f64 {
    let indicator = if y < q { 1.0 } else { 0.0 };
    (kappa - indicator) * (y - q)
}

/// Quantile-grid CRPS: twice the pinball loss averaged over coordinates and
/// the nine levels `0.1..0.9`.
pub fn crps(samples: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("at least one sample forecast is required"));
    }
    if samples.iter().any(|s| s.len() != y.len()) || y.is_empty() {
        return Err(Error::Shape("forecast and target lengths differ".into()));
    }
    let mut total = 0.0;
    let mut column = vec![0.0; samples.len()];
    for (j, &yj) in y.iter().enumerate() {
        for (c, s) in column.iter_mut().zip(samples) {
            *c = s[j];
        }
        column.sort_by(f64::total_cmp);
        for kappa in QUANTILE_LEVELS {
            total += 2.0 * pinball(kappa, empirical_quantile(&column, kappa), yj);
        }
    }
    Ok(total / (y.len() * QUANTILE_LEVELS.len()) as f64)
}
