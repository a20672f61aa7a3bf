//! Log-log least-squares power-law fits.

use std::collections::BTreeMap;
use std::path::Path;

use super::record::CsvTable;
use crate::error::{Error, Result};

/// `y ≈ e^intercept · x^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Coefficient of determination of the log-log regression.
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares on `(ln x, ln y)`.
///
/// A constant `y` has no variance to explain; it is reported as a perfect
/// fit with exponent 0.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(Error::dims("fit_power_law", xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::arg(format!(
            "power-law fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    if let Some(bad) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::arg(format!(
            "power-law fit needs positive finite values, got {bad}"
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("power-law fit needs at least two distinct x values"));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        let ss_res: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - intercept - exponent * x).powi(2))
            .sum();
        1.0 - ss_res / syy
    };
    Ok(PowerFit {
        exponent,
        intercept,
        r2,
        points: xs.len(),
    })
}

/// Mean of `y` for each distinct `x`, in increasing `x`. Rows whose status
/// column (if present) marks a failure are skipped, as are non-finite values.
pub fn grouped_means(table: &CsvTable, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let xs = table.numeric(x)?;
    let ys = table.numeric(y)?;
    let status = table.column("status").ok();
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (i, (&xv, &yv)) in xs.iter().zip(&ys).enumerate() {
        let ok = status.map_or(true, |s| !table.rows[i][s].starts_with("failed"));
        if ok && xv.is_finite() && yv.is_finite() {
            // Order-preserving key for non-negative and negative floats alike.
            let bits = xv.to_bits();
            let key = if xv >= 0.0 { bits | (1 << 63) } else { !bits };
            let e = groups.entry(key).or_insert((xv, 0.0, 0));
            e.1 += yv;
            e.2 += 1;
        }
    }
    Ok(groups.into_values().map(|(x, s, n)| (x, s / n as f64)).collect())
}

/// Power-law fit of the per-`x` means of column `y` against column `x`.
pub fn fit_csv(path: &Path, x: &str, y: &str) -> Result<PowerFit> {
    let table = CsvTable::read(path)?;
    let means = grouped_means(&table, x, y)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = means.into_iter().unzip();
    fit_power_law(&xs, &ys)
}
