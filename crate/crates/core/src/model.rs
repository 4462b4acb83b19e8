//! A locally dependent model: summand sampler + neighborhood structure +
//! standardization state, with optional exact-law and fast-sum attachments.

use crate::error::{Error, Result};
use crate::exact::{to_f64, ExactSupport, Rat};
use crate::neighborhoods::{NeighborhoodSystem, ValidationReport};
use crate::rng::Purpose;
use num_traits::{One, Zero};
use std::sync::Arc;

/// Draws one realization of the unscaled summand vector. Implementations
/// derive their generator from `(seed, purpose, stream)` via
/// [`crate::rng::stream_rng`] so that distinct purposes and streams never
/// share randomness.
pub type SamplerFn = Arc<dyn Fn(u64, Purpose, u64) -> Vec<f64> + Send + Sync>;
/// Draws the standardized sum directly, bypassing the summand vector.
pub type SumFn = Arc<dyn Fn(u64, Purpose, u64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct LocalModel {
    pub name: String,
    /// Reported model parameter (window width, degeneracy scale, skewness
    /// target, … — whatever knob the builder varies).
    pub param: f64,
    pub neighborhoods: Arc<NeighborhoodSystem>,
    sampler: SamplerFn,
    fast_sum: Option<SumFn>,
    /// Exact finite-support law of the unscaled summands, when representable.
    pub exact: Option<Arc<ExactSupport>>,
    /// Standardization factor: W = scale · Σᵢ Xᵢ.
    pub scale: f64,
    /// Exact squared scale (1 / Var Σ Xᵢ) when known in closed form.
    pub scale_sq: Option<Rat>,
}

#[derive(Debug, Clone)]
pub struct StandardizeInfo {
    pub scale: f64,
    /// Standard error of the estimated summand-sum standard deviation
    /// (None for exact standardization).
    pub std_error: Option<f64>,
    pub replicates: u64,
}

#[derive(Debug, Clone)]
pub struct IndependenceCheck {
    /// Studentized sample covariance between X_i and the sum over indices
    /// outside A_i; None when the statistic is degenerate.
    pub z: Option<f64>,
    /// Exact covariance (unscaled), when an exact law is attached.
    pub exact_cov: Option<Rat>,
    pub degenerate: bool,
    pub replicates: u64,
}

impl LocalModel {
    pub fn new(
        name: impl Into<String>,
        neighborhoods: NeighborhoodSystem,
        sampler: SamplerFn,
    ) -> Self {
        LocalModel {
            name: name.into(),
            param: 0.0,
            neighborhoods: Arc::new(neighborhoods),
            sampler,
            fast_sum: None,
            exact: None,
            scale: 1.0,
            scale_sq: None,
        }
    }

    pub fn with_param(mut self, param: f64) -> Self {
        self.param = param;
        self
    }

    pub fn with_exact(mut self, exact: ExactSupport) -> Self {
        assert_eq!(exact.n_summands() as u32, self.n());
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_fast_sum(mut self, f: SumFn) -> Self {
        self.fast_sum = Some(f);
        self
    }

    /// Install an exact squared scale; `scale` is set to its square root.
    pub fn with_exact_scale_sq(mut self, scale_sq: Rat) -> Self {
        self.scale = to_f64(&scale_sq).sqrt();
        self.scale_sq = Some(scale_sq);
        self
    }

    pub fn n(&self) -> u32 {
        self.neighborhoods.n()
    }

    pub fn draw_unscaled(&self, seed: u64, purpose: Purpose, stream: u64) -> Vec<f64> {
        (self.sampler)(seed, purpose, stream)
    }

    /// One realization of the standardized sum W.
    pub fn draw_sum(&self, seed: u64, purpose: Purpose, stream: u64) -> f64 {
        match &self.fast_sum {
            Some(f) => f(seed, purpose, stream),
            None => {
                let x = self.draw_unscaled(seed, purpose, stream);
                self.scale * x.iter().sum::<f64>()
            }
        }
    }

    /// `count` independent realizations of W on consecutive streams.
    pub fn sample_sums(&self, seed: u64, purpose: Purpose, first_stream: u64, count: u64) -> Vec<f64> {
        (0..count)
            .map(|k| self.draw_sum(seed, purpose, first_stream + k))
            .collect()
    }

    pub fn validate_neighborhoods(&self, budget: u64, seed: u64) -> ValidationReport {
        self.neighborhoods.validate(budget, seed)
    }

    /// Set `scale` so that Var W = 1, exactly from the attached law.
    ///
    /// Idempotent: the factor is recomputed from the unscaled law each call.
    pub fn standardize_exact(&mut self) -> Result<StandardizeInfo> {
        let exact = self
            .exact
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("no exact law attached".into()))?;
        let var = exact.sum_variance()?;
        if var.is_zero() {
            return Err(Error::Degenerate("summand sum has zero variance".into()));
        }
        if var < Rat::zero() {
            return Err(Error::Numerical("negative variance".into()));
        }
        let scale_sq = Rat::one() / var;
        self.scale = to_f64(&scale_sq).sqrt();
        self.scale_sq = Some(scale_sq);
        self.fast_sum = None; // any attached fast sum baked in the old scale
        Ok(StandardizeInfo {
            scale: self.scale,
            std_error: None,
            replicates: 0,
        })
    }

    /// Estimate Var W under the current scale and fold the correction into
    /// `scale`. `precision` is the target relative accuracy of the factor;
    /// applying the method twice moves `scale` by at most ~`precision`.
    pub fn standardize_mc(&mut self, seed: u64, precision: f64) -> Result<StandardizeInfo> {
        if !(precision > 0.0) {
            return Err(Error::InvalidInput("precision must be positive".into()));
        }
        // Relative SE of a variance estimate is ≈ √((κ₄+2)/R); budget for
        // κ₄ ≈ 1 and note SD error is half the variance error.
        let replicates = ((3.0 / (precision * precision)) as u64).clamp(10_000, 10_000_000);
        let batches = 32u64;
        let per = replicates / batches;
        let mut batch_vars = Vec::with_capacity(batches as usize);
        for b in 0..batches {
            let (mut s, mut s2) = (0.0f64, 0.0f64);
            for k in 0..per {
                let w = self.draw_sum(seed, Purpose::Standardize, b * per + k);
                s += w;
                s2 += w * w;
            }
            let mean = s / per as f64;
            batch_vars.push(s2 / per as f64 - mean * mean);
        }
        let var = batch_vars.iter().sum::<f64>() / batches as f64;
        if !(var > 0.0) {
            return Err(Error::Degenerate("estimated variance not positive".into()));
        }
        let se_var = {
            let m = var;
            let v = batch_vars.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                / (batches as f64 - 1.0);
            (v / batches as f64).sqrt()
        };
        let sd = var.sqrt();
        self.scale /= sd;
        self.scale_sq = None; // exactness lost once an MC factor is folded in
        if let Some(f) = self.fast_sum.take() {
            let inv = 1.0 / sd;
            self.fast_sum = Some(Arc::new(move |seed, purpose, stream| {
                inv * f(seed, purpose, stream)
            }));
        }
        Ok(StandardizeInfo {
            scale: self.scale,
            std_error: Some(se_var / (2.0 * sd)),
            replicates: per * batches,
        })
    }

    /// Empirical check that X_i is uncorrelated with the sum of summands
    /// outside A_i (a consequence of the dependency structure). Returns a
    /// studentized covariance; |z| ≲ 4 is consistent with independence.
    pub fn independence_check(
        &self,
        i: u32,
        replicates: u64,
        seed: u64,
    ) -> Result<IndependenceCheck> {
        if i >= self.n() {
            return Err(Error::InvalidInput(format!(
                "index {i} out of range for {} summands",
                self.n()
            )));
        }
        if replicates < 16 {
            return Err(Error::InvalidInput("need at least 16 replicates".into()));
        }
        let a_i = self.neighborhoods.neighbors(&[i]);
        let outside: Vec<usize> = (0..self.n())
            .filter(|j| !a_i.contains(j))
            .map(|j| j as usize)
            .collect();
        let exact_cov = match self.exact.as_ref() {
            Some(exact) => {
                let mut c = Rat::zero();
                let mi = exact.mixed_moment(&[i], false)?;
                for &j in &outside {
                    let mj = exact.mixed_moment(&[j as u32], false)?;
                    c += exact.mixed_moment(&[i, j as u32], false)? - &mi * mj;
                }
                Some(c)
            }
            None => None,
        };
        if outside.is_empty() {
            return Ok(IndependenceCheck {
                z: Some(0.0),
                exact_cov,
                degenerate: false,
                replicates: 0,
            });
        }
        let mut u = Vec::with_capacity(replicates as usize);
        let mut v = Vec::with_capacity(replicates as usize);
        for r in 0..replicates {
            let x = self.draw_unscaled(seed, Purpose::Independence, r);
            u.push(x[i as usize]);
            v.push(outside.iter().map(|&j| x[j]).sum::<f64>());
        }
        let r = replicates as f64;
        let (um, vm) = (
            u.iter().sum::<f64>() / r,
            v.iter().sum::<f64>() / r,
        );
        let prods: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(&a, &b)| (a - um) * (b - vm))
            .collect();
        let cov = prods.iter().sum::<f64>() / r;
        let s2 = prods.iter().map(|p| (p - cov) * (p - cov)).sum::<f64>() / (r - 1.0);
        if s2 <= 0.0 || u.iter().all(|&a| a == u[0]) || v.iter().all(|&b| b == v[0]) {
            return Ok(IndependenceCheck {
                z: None,
                exact_cov,
                degenerate: true,
                replicates,
            });
        }
        Ok(IndependenceCheck {
            z: Some(cov / (s2 / r).sqrt()),
            exact_cov,
            degenerate: false,
            replicates,
        })
    }
}
