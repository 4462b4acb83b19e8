//! Empirical distribution distances: transport (order p), sup (Kolmogorov),
//! and a smooth-test-function lower bound.
//!
//! All distances here act on finite samples. Transport distances between two
//! equal-size samples reduce to the order-statistics coupling; distances to
//! the standard normal couple the sorted sample with the normal quantile
//! midpoint grid Φ⁻¹((i−½)/s). That grid carries an O(s^{-1/2}) sampling
//! floor for random inputs, which rate studies must stay above.

use crate::error::{Error, Result};
use crate::normal;
use crate::stein::TestFunction;
use std::cmp::Ordering;

/// A sorted sample of at least two finite values.
#[derive(Debug, Clone)]
pub struct EmpiricalSample {
    values: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "sample needs at least two values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sample contains non-finite values".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        Ok(EmpiricalSample { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor requires ≥ 2 values
    }

    pub fn sorted(&self) -> &[f64] {
        &self.values
    }
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("order p = {p} must be ≥ 1")));
    }
    Ok(())
}

/// Order-p transport distance between two samples of equal size:
/// the ℓ_p mean of gaps between order statistics.
pub fn empirical_wp(a: &EmpiricalSample, b: &EmpiricalSample, p: f64) -> Result<f64> {
    check_order(p)?;
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "sample sizes differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let s = a.len() as f64;
    let sum: f64 = a
        .sorted()
        .iter()
        .zip(b.sorted())
        .map(|(&x, &y)| (x - y).abs().powf(p))
        .sum();
    Ok((sum / s).powf(1.0 / p))
}

/// Order-p transport distance from a sample to the standard normal,
/// via the quantile midpoint grid. Requires at least 100 values so the grid
/// bias stays below the sampling noise it accompanies.
pub fn wp_vs_normal(a: &EmpiricalSample, p: f64) -> Result<f64> {
    check_order(p)?;
    let s = a.len();
    if s < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 values for the normal quantile grid, got {s}"
        )));
    }
    let sf = s as f64;
    let sum: f64 = a
        .sorted()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let q = normal::quantile((i as f64 + 0.5) / sf);
            (x - q).abs().powf(p)
        })
        .sum();
    Ok((sum / sf).powf(1.0 / p))
}

/// Kolmogorov (sup-CDF) distance from a sample to the standard normal:
/// the classic one-sample statistic evaluated at the jump points.
pub fn kolmogorov_vs_normal(a: &EmpiricalSample) -> Result<f64> {
    let s = a.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in a.sorted().iter().enumerate() {
        let phi = normal::cdf(x);
        let hi = ((i + 1) as f64 / s - phi).abs();
        let lo = (i as f64 / s - phi).abs();
        sup = sup.max(hi).max(lo);
    }
    Ok(sup)
}

/// Lower bound on the order-p smooth-function (Zolotarev-type) distance to
/// the standard normal: the largest |mean h(sample) − E h(Z)| over the
/// test functions declared to lie in the order-p class.
///
/// Errors when no supplied function carries the declaration — an empty
/// family bounds nothing.
pub fn zolotarev_lower_bound(
    a: &EmpiricalSample,
    p: u32,
    family: &[TestFunction],
) -> Result<f64> {
    let members: Vec<&TestFunction> = family.iter().filter(|t| t.in_lambda(p)).collect();
    if members.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no test function declared for order {p}"
        )));
    }
    let s = a.len() as f64;
    let mut best: f64 = 0.0;
    for t in members {
        let mean: f64 = a.sorted().iter().map(|&x| t.eval(x)).sum::<f64>() / s;
        let nh = crate::stein::normal_functional(t, 1e-10)?;
        best = best.max((mean - nh).abs());
    }
    Ok(best)
}
