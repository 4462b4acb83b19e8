//! Log–log rate fitting over experiment tables.
//!
//! The fit regresses ln(mean distance) on ln(n), but only over grid points
//! whose signal clears three times the i.i.d.-normal baseline floor b(s):
//! below that, the measured distance is mostly the estimator's own bias at
//! sample size s, and including it flattens the slope toward zero.

use std::collections::BTreeMap;

use locdep::{Error, Result};

use crate::experiment::Table;

/// Result of a power-law fit distance ≈ C·n^slope.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Per-size baseline floor b(s) (mean control distance), in grid order.
    pub baseline_floor: Vec<(u32, f64)>,
    /// Sizes that entered the regression.
    pub used: Vec<u32>,
    /// Sizes filtered out for sitting within 3× the floor.
    pub dropped: Vec<u32>,
}

/// Plain least squares of ln y on ln x with the coefficient of
/// determination. Callers guarantee at least two points, positive values.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two points for a power-law fit".into(),
        ));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::Numerical(
            "power-law fit needs positive sizes and distances".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Numerical("all sizes coincide; slope undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r_squared))
}

/// Per-size mean distance and mean baseline from a table's rows.
pub fn grid_means(table: &Table) -> Vec<(u32, f64, f64)> {
    let mut acc: BTreeMap<u32, (f64, f64, u64)> = BTreeMap::new();
    for row in &table.rows {
        let e = acc.entry(row.n).or_insert((0.0, 0.0, 0));
        e.0 += row.distance;
        e.1 += row.baseline;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(n, (d, b, k))| (n, d / k as f64, b / k as f64))
        .collect()
}

/// Fits the convergence rate of the mean distance over the grid, after
/// dropping sizes whose signal is within 3× the baseline floor. Fails with
/// a below-floor error when fewer than three sizes survive.
pub fn fit_rate(table: &Table) -> Result<RateFit> {
    let means = grid_means(table);
    if means.is_empty() {
        return Err(Error::InvalidInput("empty table: nothing to fit".into()));
    }
    let baseline_floor: Vec<(u32, f64)> = means.iter().map(|&(n, _, b)| (n, b)).collect();
    let mut used = Vec::new();
    let mut dropped = Vec::new();
    let mut points = Vec::new();
    for &(n, d, b) in &means {
        if d >= 3.0 * b && d > 0.0 {
            used.push(n);
            points.push((n as f64, d));
        } else {
            dropped.push(n);
        }
    }
    if points.len() < 3 {
        return Err(Error::BelowFloor(format!(
            "only {} of {} grid sizes clear 3× the baseline floor",
            points.len(),
            means.len()
        )));
    }
    let (slope, intercept, r_squared) = fit_loglog(&points)?;
    Ok(RateFit { slope, intercept, r_squared, baseline_floor, used, dropped })
}
