//! Builders for the three application models: moving-average (m-dependent)
//! sums, U-statistics, and subgraph counts in G(n, p).
//!
//! Each builder returns a standardized [`LocalModel`] whose neighborhood
//! system is the one its dependency structure dictates, with an exact joint
//! law attached whenever the inputs are finitely supported.

pub mod graphs;

use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::exact::{rat, to_f64, ExactSupport, Rat, Summand};
use crate::model::LocalModel;
use crate::neighborhoods::{window_rule, NeighborhoodSystem};
use crate::rng::{fill_rademacher, sample_index, stream_rng, Purpose};

/// Distribution of one i.i.d. input variable.
///
/// Finitely supported laws carry exact atoms and probabilities so models
/// built on them can expose exact joint moments; the standard normal is the
/// continuous option.
#[derive(Clone)]
pub struct BaseLaw {
    name: String,
    kind: Kind,
}

#[derive(Clone)]
enum Kind {
    Finite {
        atoms: Vec<(Rat, Rat)>,
        vals: Vec<f64>,
        cum: Vec<f64>,
        // ±1 with probability 1/2 each: sampled one bit per draw, which the
        // popcount fast paths rely on.
        rademacher: bool,
    },
    StandardNormal,
}

impl BaseLaw {
    pub fn finite(name: impl Into<String>, atoms: Vec<(Rat, Rat)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("finite law needs at least one atom".into()));
        }
        let mut total = Rat::zero();
        for (i, (a, p)) in atoms.iter().enumerate() {
            if !p.is_positive() {
                return Err(Error::InvalidInput(format!("atom {a} has non-positive mass")));
            }
            if atoms[..i].iter().any(|(b, _)| b == a) {
                return Err(Error::InvalidInput(format!("duplicate atom {a}")));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::InvalidInput("atom masses do not sum to one".into()));
        }
        let vals: Vec<f64> = atoms.iter().map(|(a, _)| to_f64(a)).collect();
        let cum: Vec<f64> = {
            let mut acc = Rat::zero();
            atoms
                .iter()
                .map(|(_, p)| {
                    acc += p;
                    to_f64(&acc)
                })
                .collect()
        };
        let half = rat(1, 2);
        let rademacher = atoms.len() == 2
            && atoms.iter().all(|(_, p)| *p == half)
            && {
                let mut v: Vec<&Rat> = atoms.iter().map(|(a, _)| a).collect();
                v.sort();
                *v[0] == rat(-1, 1) && *v[1] == rat(1, 1)
            };
        Ok(BaseLaw {
            name: name.into(),
            kind: Kind::Finite { atoms, vals, cum, rademacher },
        })
    }

    pub fn rademacher() -> Self {
        Self::finite("rademacher", vec![(rat(-1, 1), rat(1, 2)), (rat(1, 1), rat(1, 2))])
            .expect("static law is valid")
    }

    pub fn standard_normal() -> Self {
        BaseLaw { name: "normal".into(), kind: Kind::StandardNormal }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Exact support, when the law is finite.
    pub fn finite_atoms(&self) -> Option<&[(Rat, Rat)]> {
        match &self.kind {
            Kind::Finite { atoms, .. } => Some(atoms),
            Kind::StandardNormal => None,
        }
    }

    fn is_rademacher(&self) -> bool {
        matches!(&self.kind, Kind::Finite { rademacher: true, .. })
    }

    pub fn mean(&self) -> Rat {
        match &self.kind {
            Kind::Finite { atoms, .. } => {
                atoms.iter().map(|(a, p)| a * p).fold(Rat::zero(), |s, t| s + t)
            }
            Kind::StandardNormal => Rat::zero(),
        }
    }

    pub fn variance(&self) -> Rat {
        match &self.kind {
            Kind::Finite { atoms, .. } => {
                let mu = self.mean();
                atoms
                    .iter()
                    .map(|(a, p)| (a - &mu) * (a - &mu) * p)
                    .fold(Rat::zero(), |s, t| s + t)
            }
            Kind::StandardNormal => Rat::one(),
        }
    }

    /// Fills `out` with independent draws. Rademacher laws consume one bit
    /// per draw (batched 64 per word); other finite laws one uniform each.
    pub fn fill(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        match &self.kind {
            Kind::Finite { rademacher: true, .. } => fill_rademacher(rng, out),
            Kind::Finite { vals, cum, .. } => {
                for x in out.iter_mut() {
                    *x = vals[sample_index(cum, rng.gen::<f64>())];
                }
            }
            Kind::StandardNormal => {
                for x in out.iter_mut() {
                    *x = rand_distr::StandardNormal.sample(rng);
                }
            }
        }
    }
}

/// Number of bits set among bit positions [lo, hi) of a packed word array.
fn popcount_range(words: &[u64], lo: usize, hi: usize) -> u32 {
    let mut count = 0u32;
    let mut w = lo / 64;
    let mut bit = lo;
    while bit < hi {
        let upto = ((w + 1) * 64).min(hi);
        let mut word = words[w];
        let drop_low = bit - w * 64;
        word >>= drop_low;
        word <<= drop_low;
        let keep = upto - w * 64;
        if keep < 64 {
            word &= (1u64 << keep) - 1;
        }
        count += word.count_ones();
        bit = upto;
        w += 1;
    }
    count
}

/// Moving-average model: X_i = Σ_{r=0}^m c_r ε_{i−r} over i.i.d. centered
/// innovations ε, an m-dependent sequence. Neighborhoods are the unions of
/// ±m windows. The model comes back standardized, with an exact squared
/// scale computed from the innovation variance and boundary-corrected
/// weights (no sampling involved).
pub fn mdep_model(n: u32, m: u32, base: &BaseLaw, coefficients: &[Rat]) -> Result<LocalModel> {
    if m >= n {
        return Err(Error::InvalidInput(format!(
            "dependence range m = {m} must be smaller than n = {n}"
        )));
    }
    if coefficients.len() != (m + 1) as usize {
        return Err(Error::InvalidInput(format!(
            "need m + 1 = {} coefficients, got {}",
            m + 1,
            coefficients.len()
        )));
    }
    if !base.mean().is_zero() {
        return Err(Error::InvalidInput("innovation law must be centered".into()));
    }

    let len = (n + m) as usize;
    // Innovation e_k = ε_{k−m}, so X_i = Σ_j c_{m−j} e_{i+j}; w_k is the total
    // coefficient mass landing on e_k, boundary-truncated.
    let weight_of = |k: usize| -> Rat {
        let mut w = Rat::zero();
        for (j, c) in coefficients.iter().rev().enumerate() {
            let i = k as i64 - j as i64;
            if (0..n as i64).contains(&i) {
                w += c;
            }
        }
        w
    };
    let var: Rat = (0..len)
        .map(|k| {
            let w = weight_of(k);
            &w * &w
        })
        .fold(Rat::zero(), |s, t| s + t)
        * base.variance();
    if var.is_zero() {
        return Err(Error::Degenerate("sum has zero variance".into()));
    }
    let scale_sq = Rat::one() / var;
    let scale = to_f64(&scale_sq).sqrt();

    let ns = NeighborhoodSystem::from_rule(n, 5, window_rule(n, m));
    let rev_coeffs: Vec<f64> = coefficients.iter().rev().map(to_f64).collect();
    let coeff_total: f64 = rev_coeffs.iter().sum();
    let sampler_base = base.clone();
    let (sn, sm) = (n as usize, m as usize);
    let sampler = Arc::new(move |seed: u64, purpose: Purpose, stream: u64| {
        let mut rng = stream_rng(seed, purpose, stream);
        let mut eps = vec![0.0; sn + sm];
        sampler_base.fill(&mut rng, &mut eps);
        (0..sn)
            .map(|i| {
                rev_coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * eps[i + j])
                    .sum()
            })
            .collect::<Vec<f64>>()
    });

    let mut model = LocalModel::new("mdep", ns, sampler)
        .with_param(m as f64)
        .with_exact_scale_sq(scale_sq);

    if base.is_rademacher() {
        // Interior innovations (positions m..n) all carry the full coefficient
        // sum, so their contribution collapses to a popcount.
        let total = coeff_total;
        let boundary: Vec<(usize, f64)> = (0..sm)
            .chain(sn..sn + sm)
            .map(|k| (k, to_f64(&weight_of(k))))
            .collect();
        let interior = (sn - sm) as f64;
        let nwords = (sn + sm + 63) / 64;
        let fast = Arc::new(move |seed: u64, purpose: Purpose, stream: u64| {
            let mut rng = stream_rng(seed, purpose, stream);
            let words: Vec<u64> = (0..nwords).map(|_| rng.gen::<u64>()).collect();
            let pop = popcount_range(&words, sm, sn) as f64;
            let mut w = total * (2.0 * pop - interior);
            for &(k, wk) in &boundary {
                let bit = (words[k / 64] >> (k % 64)) & 1;
                w += wk * if bit == 1 { 1.0 } else { -1.0 };
            }
            scale * w
        });
        model = model.with_fast_sum(fast);
    }

    if let Some(atoms) = base.finite_atoms() {
        let components = vec![atoms.to_vec(); len];
        let coeffs: Arc<Vec<Rat>> = Arc::new(coefficients.iter().rev().cloned().collect());
        let summands = (0..n)
            .map(|i| {
                let coeffs = Arc::clone(&coeffs);
                Summand {
                    deps: (i..=i + m).collect(),
                    value: Arc::new(move |vs: &[Rat]| {
                        vs.iter()
                            .zip(coeffs.iter())
                            .map(|(v, c)| v * c)
                            .fold(Rat::zero(), |s, t| s + t)
                    }),
                }
            })
            .collect();
        model = model.with_exact(ExactSupport::new(components, summands)?);
    }
    Ok(model)
}

/// Sum of n i.i.d. centered variables: the m = 0 moving average.
pub fn iid_model(n: u32, base: &BaseLaw) -> Result<LocalModel> {
    let mut model = mdep_model(n, 0, base, &[Rat::one()])?;
    model.name = "iid".into();
    model.param = 0.0;
    Ok(model)
}

/// Parameters of a U-statistic model: the sum of a symmetric kernel over
/// all m-subsets of n i.i.d. base variables.
#[derive(Clone)]
pub struct UStatSpec {
    pub name: String,
    pub n: u32,
    pub m: u32,
    pub kernel: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    /// Exact kernel on rational inputs; enables the exact joint law when the
    /// base is finite.
    pub exact_kernel: Option<Arc<dyn Fn(&[Rat]) -> Rat + Send + Sync>>,
    pub base: BaseLaw,
    /// Seed for the builder's internal checks and Monte Carlo scaling.
    pub seed: u64,
}

/// All m-subsets of {0..n−1} in lexicographic order.
pub(crate) fn combinations(n: u32, m: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (0..m).collect();
    loop {
        out.push(cur.clone());
        // advance to the next combination
        let mut i = m as i64 - 1;
        while i >= 0 && cur[i as usize] == n - m + i as u32 {
            i -= 1;
        }
        if i < 0 {
            break;
        }
        let i = i as usize;
        cur[i] += 1;
        for j in i + 1..m as usize {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

// Stream offsets for the builder's internal Purpose::Aux draws.
const SYM_STREAM: u64 = 0;
const MEAN_STREAM: u64 = 1 << 20;
const DEGEN_STREAM: u64 = 2 << 20;

/// E h over an i.i.d. finite-base m-tuple, by enumeration (f64 values,
/// exact probabilities).
fn kernel_mean_finite(
    kernel: &dyn Fn(&[f64]) -> f64,
    atoms: &[(Rat, Rat)],
    m: usize,
) -> f64 {
    let vals: Vec<f64> = atoms.iter().map(|(a, _)| to_f64(a)).collect();
    let ps: Vec<f64> = atoms.iter().map(|(_, p)| to_f64(p)).collect();
    let mut idx = vec![0usize; m];
    let mut xs = vec![0.0; m];
    let mut acc = 0.0;
    loop {
        let mut prob = 1.0;
        for (slot, &i) in idx.iter().enumerate() {
            xs[slot] = vals[i];
            prob *= ps[i];
        }
        acc += prob * kernel(&xs);
        let mut carry = m;
        while carry > 0 {
            idx[carry - 1] += 1;
            if idx[carry - 1] < atoms.len() {
                break;
            }
            idx[carry - 1] = 0;
            carry -= 1;
        }
        if carry == 0 {
            break;
        }
    }
    acc
}

/// Variance of the full subset sum via the covariance decomposition by
/// overlap size: Var = Σ_{q=1}^m C(n,m)·C(m,q)·C(n−m,m−q)·ζ_q with
/// ζ_q = E[h₀(S)h₀(T)] over |S∩T| = q. Exact enumeration per ζ_q, so the
/// cost is independent of n.
fn ustat_variance_finite(
    kernel: &dyn Fn(&[f64]) -> f64,
    mu: f64,
    atoms: &[(Rat, Rat)],
    n: u64,
    m: usize,
) -> f64 {
    let vals: Vec<f64> = atoms.iter().map(|(a, _)| to_f64(a)).collect();
    let ps: Vec<f64> = atoms.iter().map(|(_, p)| to_f64(p)).collect();
    let mut var = 0.0;
    for q in 1..=m {
        let vars_needed = 2 * m - q;
        // S reads slots 0..m; T reads slots 0..q then m..2m−q.
        let mut idx = vec![0usize; vars_needed];
        let mut zeta = 0.0;
        let mut xs = vec![0.0; m];
        let mut ys = vec![0.0; m];
        loop {
            let mut prob = 1.0;
            for &i in &idx {
                prob *= ps[i];
            }
            for slot in 0..m {
                xs[slot] = vals[idx[slot]];
            }
            for slot in 0..q {
                ys[slot] = vals[idx[slot]];
            }
            for slot in q..m {
                ys[slot] = vals[idx[m + slot - q]];
            }
            zeta += prob * (kernel(&xs) - mu) * (kernel(&ys) - mu);
            let mut carry = vars_needed;
            while carry > 0 {
                idx[carry - 1] += 1;
                if idx[carry - 1] < atoms.len() {
                    break;
                }
                idx[carry - 1] = 0;
                carry -= 1;
            }
            if carry == 0 {
                break;
            }
        }
        let pairs = binom(n, m as u64) as f64
            * binom(m as u64, q as u64) as f64
            * binom(n - m as u64, (m - q) as u64) as f64;
        var += pairs * zeta;
    }
    var
}

/// Builds the U-statistic model: index set = m-subsets, ξ_S = σ⁻¹·h₀(X_S),
/// neighborhoods by subset intersection (a chain's neighborhood is every
/// subset meeting the union of the chain's subsets).
///
/// The builder spot-checks kernel symmetry, centers the kernel, rejects
/// empirically degenerate kernels (the variance of ĝ(X₁) = E[h₀ | X₁] must
/// clear five standard errors), and standardizes: exactly when the base is
/// finite (covariance decomposition, or the attached exact law), by Monte
/// Carlo otherwise.
pub fn ustat_model(spec: UStatSpec) -> Result<LocalModel> {
    let UStatSpec { name, n, m, kernel, exact_kernel, base, seed } = spec;
    if m == 0 || n < 2 * m {
        return Err(Error::InvalidInput(format!(
            "need kernel order m ≥ 1 and n ≥ 2m, got n = {n}, m = {m}"
        )));
    }

    // Symmetry spot-check on random permutations of random inputs.
    {
        let mut rng = stream_rng(seed, Purpose::Aux, SYM_STREAM);
        for _ in 0..8 {
            let xs: Vec<f64> = (0..m)
                .map(|_| rand_distr::StandardNormal.sample(&mut rng))
                .collect();
            let mut perm = xs.clone();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let (a, b) = (kernel(&xs), kernel(&perm));
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Err(Error::InvalidInput(
                    "kernel is not symmetric under argument permutation".into(),
                ));
            }
        }
    }

    // Center the kernel.
    let mu = match base.finite_atoms() {
        Some(atoms) => kernel_mean_finite(kernel.as_ref(), atoms, m as usize),
        None => {
            let mut rng = stream_rng(seed, Purpose::Aux, MEAN_STREAM);
            let reps = 100_000;
            let mut acc = 0.0;
            let mut xs = vec![0.0; m as usize];
            for _ in 0..reps {
                base.fill(&mut rng, &mut xs);
                acc += kernel(&xs);
            }
            acc / reps as f64
        }
    };

    // Non-degeneracy: the conditional expectation given one coordinate must
    // carry real variance.
    {
        let outer = 10_000usize;
        let mut gs = Vec::with_capacity(outer);
        match base.finite_atoms() {
            Some(atoms) => {
                // ĝ at each atom by enumeration over the other m−1 slots.
                let g_at: Vec<f64> = atoms
                    .iter()
                    .map(|(a, _)| {
                        let x1 = to_f64(a);
                        let kernel = &kernel;
                        kernel_mean_finite(
                            &move |rest: &[f64]| {
                                let mut xs = vec![x1];
                                xs.extend_from_slice(rest);
                                kernel(&xs) - mu
                            },
                            atoms,
                            (m - 1) as usize,
                        )
                    })
                    .collect();
                let mut rng = stream_rng(seed, Purpose::Aux, DEGEN_STREAM);
                let mut x = [0.0];
                for _ in 0..outer {
                    base.fill(&mut rng, &mut x);
                    let i = atoms
                        .iter()
                        .position(|(a, _)| to_f64(a) == x[0])
                        .expect("drawn value is an atom");
                    gs.push(g_at[i]);
                }
            }
            None => {
                let inner = 256usize;
                for k in 0..outer {
                    let mut rng = stream_rng(seed, Purpose::Aux, DEGEN_STREAM + 1 + k as u64);
                    let mut x1 = [0.0];
                    base.fill(&mut rng, &mut x1);
                    let mut rest = vec![0.0; (m - 1) as usize];
                    let mut acc = 0.0;
                    let mut xs = vec![0.0; m as usize];
                    for _ in 0..inner {
                        base.fill(&mut rng, &mut rest);
                        xs[0] = x1[0];
                        xs[1..].copy_from_slice(&rest);
                        acc += kernel(&xs) - mu;
                    }
                    gs.push(acc / inner as f64);
                }
            }
        }
        let k = gs.len() as f64;
        let mean = gs.iter().sum::<f64>() / k;
        let v = gs.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let m4 = gs.iter().map(|g| (g - mean).powi(4)).sum::<f64>() / k;
        let se = ((m4 - v * v).max(0.0) / k).sqrt();
        if !(v > 5.0 * se) || v == 0.0 {
            return Err(Error::Degenerate(format!(
                "kernel conditional expectation is degenerate: variance {v:.3e} vs SE {se:.3e}"
            )));
        }
    }

    let subsets = Arc::new(combinations(n, m));
    let count = subsets.len() as u32;
    let words = ((n as usize) + 63) / 64;
    let masks: Arc<Vec<Vec<u64>>> = Arc::new(
        subsets
            .iter()
            .map(|s| {
                let mut mask = vec![0u64; words];
                for &v in s {
                    mask[(v / 64) as usize] |= 1u64 << (v % 64);
                }
                mask
            })
            .collect(),
    );
    let rule_masks = Arc::clone(&masks);
    let rule = Arc::new(move |prefix: &[u32]| {
        let mut acc = vec![0u64; words];
        for &i in prefix {
            for (a, b) in acc.iter_mut().zip(&rule_masks[i as usize]) {
                *a |= b;
            }
        }
        (0..rule_masks.len() as u32)
            .filter(|&j| {
                rule_masks[j as usize]
                    .iter()
                    .zip(&acc)
                    .any(|(a, b)| a & b != 0)
            })
            .collect::<Vec<u32>>()
    });
    let ns = NeighborhoodSystem::from_rule(count, 5, rule);

    let sampler_base = base.clone();
    let sampler_kernel = Arc::clone(&kernel);
    let sampler_subsets = Arc::clone(&subsets);
    let sn = n as usize;
    let sampler = Arc::new(move |seed: u64, purpose: Purpose, stream: u64| {
        let mut rng = stream_rng(seed, purpose, stream);
        let mut xs = vec![0.0; sn];
        sampler_base.fill(&mut rng, &mut xs);
        let mut args = vec![0.0; sampler_subsets[0].len()];
        sampler_subsets
            .iter()
            .map(|s| {
                for (slot, &i) in args.iter_mut().zip(s.iter()) {
                    *slot = xs[i as usize];
                }
                sampler_kernel(&args) - mu
            })
            .collect::<Vec<f64>>()
    });

    let mut model = LocalModel::new(name, ns, sampler).with_param(m as f64);

    match base.finite_atoms() {
        Some(atoms) => {
            let var =
                ustat_variance_finite(kernel.as_ref(), mu, atoms, n as u64, m as usize);
            if !(var > 0.0) {
                return Err(Error::Degenerate("subset sum has zero variance".into()));
            }
            model.scale = 1.0 / var.sqrt();

            if let Some(hk) = exact_kernel {
                let mu_rat = {
                    // exact kernel mean over an m-tuple of atoms
                    let mut idx = vec![0usize; m as usize];
                    let mut acc = Rat::zero();
                    loop {
                        let mut prob = Rat::one();
                        let mut xs = Vec::with_capacity(m as usize);
                        for &i in &idx {
                            prob *= &atoms[i].1;
                            xs.push(atoms[i].0.clone());
                        }
                        acc += prob * hk(&xs);
                        let mut carry = m as usize;
                        while carry > 0 {
                            idx[carry - 1] += 1;
                            if idx[carry - 1] < atoms.len() {
                                break;
                            }
                            idx[carry - 1] = 0;
                            carry -= 1;
                        }
                        if carry == 0 {
                            break;
                        }
                    }
                    acc
                };
                let summands = subsets
                    .iter()
                    .map(|s| {
                        let hk = Arc::clone(&hk);
                        let mu_rat = mu_rat.clone();
                        Summand {
                            deps: s.clone(),
                            value: Arc::new(move |vs: &[Rat]| hk(vs) - &mu_rat),
                        }
                    })
                    .collect();
                let components = vec![atoms.to_vec(); sn];
                model = model.with_exact(ExactSupport::new(components, summands)?);
                // Exact scale agrees with the f64 decomposition value; install
                // it before any fast path captures the final factor.
                model.standardize_exact()?;
            }

            // Atom-count fast path for pair kernels: group the C(n,2) kernel
            // evaluations by the (unordered) pair of atom indices.
            if m == 2 {
                let vals: Vec<f64> = atoms.iter().map(|(a, _)| to_f64(a)).collect();
                let cum: Vec<f64> = {
                    let mut acc = Rat::zero();
                    atoms
                        .iter()
                        .map(|(_, p)| {
                            acc += &p.clone();
                            to_f64(&acc)
                        })
                        .collect()
                };
                let na = vals.len();
                let table: Vec<f64> = (0..na * na)
                    .map(|t| kernel(&[vals[t / na], vals[t % na]]) - mu)
                    .collect();
                let rademacher = base.is_rademacher();
                let scale = model.scale;
                let fast = Arc::new(move |seed: u64, purpose: Purpose, stream: u64| {
                    let mut rng = stream_rng(seed, purpose, stream);
                    let mut counts = vec![0u64; na];
                    if rademacher {
                        // same bit order as fill_rademacher: atom 1 (= +1) on a set bit
                        let mut left = 0u32;
                        let mut bits = 0u64;
                        for _ in 0..sn {
                            if left == 0 {
                                bits = rng.gen::<u64>();
                                left = 64;
                            }
                            counts[(bits & 1) as usize] += 1;
                            bits >>= 1;
                            left -= 1;
                        }
                    } else {
                        for _ in 0..sn {
                            counts[sample_index(&cum, rng.gen::<f64>())] += 1;
                        }
                    }
                    let mut w = 0.0;
                    for a in 0..na {
                        w += (counts[a] * counts[a].saturating_sub(1) / 2) as f64
                            * table[a * na + a];
                        for b in a + 1..na {
                            w += (counts[a] * counts[b]) as f64 * table[a * na + b];
                        }
                    }
                    scale * w
                });
                model = model.with_fast_sum(fast);
            }
        }
        None => {
            // Monte Carlo standardization at 10⁵ replicates.
            model.standardize_mc(seed, (3.0f64 / 1e5).sqrt())?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds;
    use crate::matching;
    use crate::moments::{self, Mode};

    #[test]
    fn mdep_neighborhoods_are_window_unions() {
        let model = mdep_model(10, 2, &BaseLaw::rademacher(), &vec![rat(1, 1); 3]).unwrap();
        let report = model.validate_neighborhoods(100_000, 0);
        assert!(report.is_empty(), "{:?}", report.violations);
        assert_eq!(model.neighborhoods.neighbors(&[0]), vec![0, 1, 2]);
        assert_eq!(model.neighborhoods.neighbors(&[4]), vec![2, 3, 4, 5, 6]);
        // union with a gap: windows of 0 and 7 do not meet
        assert_eq!(
            model.neighborhoods.neighbors(&[0, 7]),
            vec![0, 1, 2, 5, 6, 7, 8, 9]
        );
    }

    #[test]
    fn mdep_scale_matches_exact_joint_variance() {
        let model = mdep_model(6, 1, &BaseLaw::rademacher(), &[rat(1, 1), rat(1, 1)]).unwrap();
        let exact = model.exact.as_ref().unwrap();
        assert_eq!(exact.joint_outcomes(), 128);
        assert_eq!(exact.sum_variance().unwrap(), rat(22, 1));
        assert_eq!(model.scale_sq.clone().unwrap(), rat(1, 22));
        // MA(2): Var = 9n − 8 for the all-ones coefficient window.
        let model = mdep_model(16, 2, &BaseLaw::rademacher(), &vec![rat(1, 1); 3]).unwrap();
        assert_eq!(model.scale_sq.clone().unwrap(), rat(1, 9 * 16 - 8));
    }

    #[test]
    fn iid_model_reduces_to_singleton_neighborhoods() {
        let atoms = vec![(rat(-1, 5), rat(4, 5)), (rat(4, 5), rat(1, 5))];
        let base = BaseLaw::finite("centered-bernoulli-0.2", atoms).unwrap();
        let model = iid_model(100, &base).unwrap();
        assert_eq!(model.name, "iid");
        assert_eq!(model.neighborhoods.neighbors(&[17]), vec![17]);
        // β = Σ E X_i³ for independent summands: npq(q−p)·scale³.
        let report = bounds::bound_terms(&model, Mode::Exact).unwrap();
        let beta = report.beta.exact.as_ref().unwrap();
        assert_eq!(beta.unscaled, rat(48, 5));
        assert_eq!(beta.degree, 3);
        assert!((report.beta.value - 0.15).abs() < 1e-12);
    }

    #[test]
    fn mdep_rejects_bad_shapes() {
        let base = BaseLaw::rademacher();
        assert!(mdep_model(3, 3, &base, &vec![rat(1, 1); 4]).is_err());
        assert!(mdep_model(8, 1, &base, &vec![rat(1, 1); 3]).is_err());
        let uncentered =
            BaseLaw::finite("shifted", vec![(rat(0, 1), rat(1, 2)), (rat(1, 1), rat(1, 2))])
                .unwrap();
        assert!(mdep_model(8, 1, &uncentered, &vec![rat(1, 1); 2]).is_err());
        assert!(mdep_model(8, 1, &base, &[rat(0, 1), rat(0, 1)]).is_err());
    }

    #[test]
    fn fast_lattice_sum_equals_plain_summation() {
        // n crosses a word boundary; integer coefficients make both paths
        // exact in f64, so equality is bitwise.
        let model = mdep_model(
            70,
            2,
            &BaseLaw::rademacher(),
            &[rat(1, 1), rat(2, 1), rat(1, 1)],
        )
        .unwrap();
        for k in 0..64 {
            let fast = model.draw_sum(5, Purpose::Model, k);
            let plain: f64 = model
                .draw_unscaled(5, Purpose::Model, k)
                .iter()
                .sum::<f64>()
                * model.scale;
            assert_eq!(fast, plain, "stream {k}");
        }
    }

    #[test]
    fn mdep_bound_matches_hand_formula_at_scale() {
        // All-ones MA(2) over ±1 innovations: every X_i is uniform on
        // {±3, ±1}, so Σ E|X|³ = 7.5n·s³ and Σ E X⁴ = 21n·s⁴ with
        // s² = 1/(9n−8).
        let n = 1024u32;
        let model = mdep_model(n, 2, &BaseLaw::rademacher(), &vec![rat(1, 1); 3]).unwrap();
        let exact = model.exact.as_ref().unwrap();
        let s = model.scale;
        let third: Vec<f64> = (0..n)
            .map(|i| to_f64(&exact.mixed_moment(&[i, i, i], true).unwrap()) * s.powi(3))
            .collect();
        let fourth: Vec<f64> = (0..n)
            .map(|i| to_f64(&exact.mixed_moment(&[i, i, i, i], false).unwrap()) * s.powi(4))
            .collect();
        let bound = bounds::mdep_bound(&third, &fourth, 2).unwrap();
        assert!(!bound.degenerate);
        let nf = n as f64;
        let var = 9.0 * nf - 8.0;
        let hand = 4.0 * 7.5 * nf / var.powf(1.5) + 8f64.sqrt() * (21.0 * nf).sqrt() / var;
        assert!((bound.value - hand).abs() <= 1e-12 * hand);
    }

    #[test]
    fn ustat_rejects_degenerate_product_kernel() {
        let spec = UStatSpec {
            name: "ustat-product".into(),
            n: 10,
            m: 2,
            kernel: Arc::new(|xs: &[f64]| xs[0] * xs[1]),
            exact_kernel: None,
            base: BaseLaw::rademacher(),
            seed: 3,
        };
        match ustat_model(spec) {
            Err(Error::Degenerate(_)) => {}
            Err(other) => panic!("expected degeneracy rejection, got {other:?}"),
            Ok(_) => panic!("expected degeneracy rejection, got a model"),
        }
    }

    #[test]
    fn ustat_rejects_asymmetric_kernel() {
        let spec = UStatSpec {
            name: "ustat-bad".into(),
            n: 8,
            m: 2,
            kernel: Arc::new(|xs: &[f64]| xs[0] - 2.0 * xs[1]),
            exact_kernel: None,
            base: BaseLaw::standard_normal(),
            seed: 3,
        };
        assert!(matches!(ustat_model(spec), Err(Error::InvalidInput(_))));
    }

    fn mean_pair_spec(n: u32, base: BaseLaw, exact: bool) -> UStatSpec {
        UStatSpec {
            name: "ustat-mean-pair".into(),
            n,
            m: 2,
            kernel: Arc::new(|xs: &[f64]| 0.5 * (xs[0] + xs[1])),
            exact_kernel: exact
                .then(|| -> Arc<dyn Fn(&[Rat]) -> Rat + Send + Sync> {
                    Arc::new(|xs: &[Rat]| (&xs[0] + &xs[1]) * rat(1, 2))
                }),
            base,
            seed: 11,
        }
    }

    #[test]
    fn ustat_structure_and_exact_standardization() {
        let model = ustat_model(mean_pair_spec(6, BaseLaw::rademacher(), true)).unwrap();
        assert_eq!(model.n(), 15);
        // pair-overlap neighborhoods: 2(n−2) + self = 2n − 3
        assert_eq!(model.neighborhoods.neighbors(&[0]).len(), 2 * 6 - 3);
        let report = model.validate_neighborhoods(1_000_000, 0);
        assert!(report.is_empty(), "{:?}", report.violations);
        let c = moments::sum_cumulants(&model, Mode::Exact).unwrap();
        assert!((c.variance.value - 1.0).abs() < 1e-12);
        let v = c.variance.exact.as_ref().unwrap();
        // Var(S) = n(n−1)²/4 = 75/2 for the pair-mean kernel on ±1 inputs.
        assert_eq!(v.unscaled, rat(75, 2));
        assert_eq!(
            model.scale_sq.clone().unwrap(),
            rat(2, 75),
            "exact scale from the joint law"
        );
    }

    #[test]
    fn ustat_covariance_decomposition_matches_exact_law() {
        for n in [6u32, 8, 11] {
            let model = ustat_model(mean_pair_spec(n, BaseLaw::rademacher(), true)).unwrap();
            let exact_var = to_f64(&model.exact.as_ref().unwrap().sum_variance().unwrap());
            let decomposed = ustat_variance_finite(
                &|xs: &[f64]| 0.5 * (xs[0] + xs[1]),
                0.0,
                &[(rat(-1, 1), rat(1, 2)), (rat(1, 1), rat(1, 2))],
                n as u64,
                2,
            );
            assert!(
                (exact_var - decomposed).abs() <= 1e-9 * exact_var,
                "n = {n}: {exact_var} vs {decomposed}"
            );
        }
    }

    #[test]
    fn ustat_normal_base_standardizes_by_monte_carlo() {
        let model = ustat_model(mean_pair_spec(8, BaseLaw::standard_normal(), false)).unwrap();
        // S = (n−1)/2 · ΣX_i, so σ² = n(n−1)²/4 = 98 and scale ≈ 1/√98.
        let expected = 1.0 / 98f64.sqrt();
        assert!(
            (model.scale - expected).abs() < 0.05 * expected,
            "scale {} vs {expected}",
            model.scale
        );
        let ws = model.sample_sums(21, Purpose::Model, 0, 20_000);
        let m2 = ws.iter().map(|w| w * w).sum::<f64>() / ws.len() as f64;
        assert!((m2 - 1.0).abs() < 0.05, "E W² = {m2}");
    }

    #[test]
    fn ustat_fast_path_matches_plain_summation() {
        let model = ustat_model(mean_pair_spec(12, BaseLaw::rademacher(), false)).unwrap();
        for k in 0..32 {
            let fast = model.draw_sum(9, Purpose::Model, k);
            let plain: f64 = model
                .draw_unscaled(9, Purpose::Model, k)
                .iter()
                .sum::<f64>()
                * model.scale;
            assert!(
                (fast - plain).abs() <= 1e-12,
                "stream {k}: {fast} vs {plain}"
            );
        }
    }

    #[test]
    fn ustat_neighborhood_growth_is_linear_in_n_for_pairs() {
        // |A_i| = 2n − 3 for m = 2: the ratio to n^{m−1} stays bounded.
        for n in [6u32, 10, 16, 24] {
            let model = ustat_model(mean_pair_spec(n, BaseLaw::rademacher(), false)).unwrap();
            let size = model.neighborhoods.neighbors(&[0]).len() as f64;
            let ratio = size / n as f64;
            assert!(ratio <= 2.0, "n = {n}: |A_i|/n = {ratio}");
            assert_eq!(size as u32, 2 * n - 3);
        }
    }

    #[test]
    fn ustat_independence_check_passes_on_random_indices() {
        let model = ustat_model(mean_pair_spec(7, BaseLaw::rademacher(), true)).unwrap();
        for i in [0u32, 5, 11, 17, 20] {
            let check = model.independence_check(i, 4096, 33).unwrap();
            assert_eq!(check.exact_cov, Some(Rat::zero()), "index {i}");
            if let Some(z) = check.z {
                assert!(z.abs() <= 4.0, "index {i}: z = {z}");
            }
        }
    }

    #[test]
    fn single_draw_of_matching_law_reproduces_its_cumulants() {
        // The β = 1/10 four-point law has rational probabilities (n = 25 is
        // a perfect square), so it doubles as a finite base law; a single
        // scaled draw is the law itself and the model's exact third cumulant
        // must equal the law's.
        let law = matching::four_point_law(&rat(1, 10)).unwrap();
        let atoms: Vec<(Rat, Rat)> = law
            .atoms()
            .iter()
            .zip(law.probs())
            .map(|(a, p)| (a.clone(), p.as_rat().unwrap().clone()))
            .collect();
        let base = BaseLaw::finite("four-point", atoms).unwrap();
        let model = iid_model(1, &base).unwrap();
        let c = moments::sum_cumulants(&model, Mode::Exact).unwrap();
        let k3 = c.k3.exact.as_ref().unwrap();
        assert_eq!(Some(&k3.unscaled), matching::law_cumulants(&law).k3.as_rat());
        assert_eq!(k3.unscaled, rat(1, 2));
    }

    #[test]
    fn combination_enumeration_is_lexicographic_and_complete() {
        let c = combinations(5, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 1, 2]);
        assert_eq!(c[1], vec![0, 1, 3]);
        assert_eq!(c[9], vec![2, 3, 4]);
        assert_eq!(binom(5, 3), 10);
        assert_eq!(binom(52, 5), 2_598_960);
    }
}
