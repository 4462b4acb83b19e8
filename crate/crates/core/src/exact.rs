//! Exact rational arithmetic: big rationals, the quadratic extension Q[√d],
//! and finitely supported joint laws with enumerated mixed moments.
//!
//! Everything the crate proves by identity (rather than estimates by Monte
//! Carlo) runs through this module: chain-sum identities, cumulant matching,
//! and the brute-force oracles that pin the samplers down.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

pub type Rat = BigRational;

/// num/den as an exact rational.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

/// ⌊r⌋ as u64 for r ≥ 0; None if negative or too large.
pub fn floor_u64(r: &Rat) -> Option<u64> {
    if r.is_negative() {
        return None;
    }
    r.floor().to_integer().to_u64()
}

/// √r when r is the square of a rational, else None.
pub fn sqrt_if_square(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    let num = r.numer().sqrt();
    let den = r.denom().sqrt();
    if &(&num * &num) == r.numer() && &(&den * &den) == r.denom() {
        Some(Rat::new(num, den))
    } else {
        None
    }
}

/// `base^k` for small k.
pub fn rat_pow(base: &Rat, k: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= base;
    }
    acc
}

/// Element a + b·√d of Q[√d], exact.
///
/// Canonical form: a perfect-square radicand is folded into the rational
/// part, and a vanishing irrational part resets d to 0. All values mixed in
/// one computation must share the same radicand (they do: d is the selected
/// n of one law construction); mixing distinct nonzero radicands panics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqrtExt {
    a: Rat,
    b: Rat,
    d: u64,
}

impl SqrtExt {
    pub fn new(a: Rat, b: Rat, d: u64) -> Self {
        if b.is_zero() {
            return SqrtExt { a, b, d: 0 };
        }
        let s = d.sqrt();
        if s * s == d {
            SqrtExt {
                a: a + b * Rat::from_integer(BigInt::from(s)),
                b: Rat::zero(),
                d: 0,
            }
        } else {
            SqrtExt { a, b, d }
        }
    }

    pub fn from_rat(a: Rat) -> Self {
        SqrtExt { a, b: Rat::zero(), d: 0 }
    }

    pub fn zero() -> Self {
        Self::from_rat(Rat::zero())
    }

    /// √d itself.
    pub fn root(d: u64) -> Self {
        Self::new(Rat::zero(), Rat::one(), d)
    }

    pub fn rational_part(&self) -> &Rat {
        &self.a
    }

    pub fn root_part(&self) -> &Rat {
        &self.b
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Some(a) iff the value is rational.
    pub fn as_rat(&self) -> Option<&Rat> {
        self.is_rational().then_some(&self.a)
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    fn join_d(&self, other: &Self) -> u64 {
        match (self.d, other.d) {
            (0, d) | (d, 0) => d,
            (x, y) if x == y => x,
            (x, y) => panic!("mixed radicands √{x} and √{y}"),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let d = self.join_d(other);
        Self::new(&self.a + &other.a, &self.b + &other.b, d)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let d = self.join_d(other);
        Self::new(&self.a - &other.a, &self.b - &other.b, d)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let d = self.join_d(other);
        let dr = Rat::from_integer(BigInt::from(d));
        Self::new(
            &self.a * &other.a + &self.b * &other.b * dr,
            &self.a * &other.b + &self.b * &other.a,
            d,
        )
    }

    pub fn neg(&self) -> Self {
        SqrtExt {
            a: -self.a.clone(),
            b: -self.b.clone(),
            d: self.d,
        }
    }

    pub fn scale(&self, c: &Rat) -> Self {
        Self::new(&self.a * c, &self.b * c, self.d)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::from_rat(Rat::one());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Exact sign test: a + b√d ≥ 0.
    pub fn is_nonneg(&self) -> bool {
        if self.b.is_zero() {
            return !self.a.is_negative();
        }
        let a_sq = &self.a * &self.a;
        let b_sq_d = &self.b * &self.b * Rat::from_integer(BigInt::from(self.d));
        if self.b.is_positive() {
            !self.a.is_negative() || a_sq <= b_sq_d
        } else {
            !self.a.is_negative() && a_sq >= b_sq_d
        }
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.a) + to_f64(&self.b) * (self.d as f64).sqrt()
    }
}

/// A finitely supported joint law for the (unscaled) summands X_0..X_{N−1}.
///
/// The randomness is factored into independent scalar `components`; each
/// summand is a function of a small subset of them. This is exactly how the
/// shipped models arise (noise variables, base samples, edge indicators), and
/// it makes mixed moments cheap: E[X_{i₁}⋯X_{i_k}] only enumerates the
/// components the participating summands actually touch.
pub struct ExactSupport {
    components: Vec<Vec<(Rat, Rat)>>,
    summands: Vec<Summand>,
    moment_cache: Mutex<HashMap<(bool, Vec<u32>), Rat>>,
}

pub type ValueFn = Arc<dyn Fn(&[Rat]) -> Rat + Send + Sync>;

pub struct Summand {
    /// Component ids this summand reads, in the order its closure expects.
    pub deps: Vec<u32>,
    pub value: ValueFn,
}

impl ExactSupport {
    /// `components[c]` lists the atoms (value, probability) of independent
    /// source c; every summand reads a duplicate-free subset of sources.
    pub fn new(components: Vec<Vec<(Rat, Rat)>>, summands: Vec<Summand>) -> Result<Self> {
        for (c, atoms) in components.iter().enumerate() {
            if atoms.is_empty() {
                return Err(Error::InvalidInput(format!("component {c} has no atoms")));
            }
            let mut total = Rat::zero();
            for (_, p) in atoms {
                if p.is_negative() {
                    return Err(Error::InvalidInput(format!(
                        "component {c} has a negative probability"
                    )));
                }
                total += p;
            }
            if !total.is_one() {
                return Err(Error::InvalidInput(format!(
                    "component {c} probabilities sum to {total}, not 1"
                )));
            }
        }
        for (i, s) in summands.iter().enumerate() {
            let mut seen = s.deps.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != s.deps.len() {
                return Err(Error::InvalidInput(format!(
                    "summand {i} lists a component twice"
                )));
            }
            if s.deps.iter().any(|&c| c as usize >= components.len()) {
                return Err(Error::InvalidInput(format!(
                    "summand {i} references a missing component"
                )));
            }
        }
        Ok(ExactSupport {
            components,
            summands,
            moment_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_summands(&self) -> usize {
        self.summands.len()
    }

    pub fn components(&self) -> &[Vec<(Rat, Rat)>] {
        &self.components
    }

    pub fn deps_of(&self, i: usize) -> &[u32] {
        &self.summands[i].deps
    }

    /// Total number of joint outcomes, saturating at u128::MAX.
    pub fn joint_outcomes(&self) -> u128 {
        self.components
            .iter()
            .fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128))
    }

    /// E[Π X_i] over `indices` (a multiset; order is irrelevant), or
    /// E[Π |X_i|] with `absolute`.
    pub fn mixed_moment(&self, indices: &[u32], absolute: bool) -> Result<Rat> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty index list".into()));
        }
        if indices.iter().any(|&i| i as usize >= self.summands.len()) {
            return Err(Error::InvalidInput("moment index out of range".into()));
        }
        let mut key: Vec<u32> = indices.to_vec();
        key.sort_unstable();
        if let Some(v) = self.moment_cache.lock().unwrap().get(&(absolute, key.clone())) {
            return Ok(v.clone());
        }
        let v = self.moment_uncached(&key, absolute);
        self.moment_cache
            .lock()
            .unwrap()
            .insert((absolute, key), v.clone());
        Ok(v)
    }

    fn moment_uncached(&self, sorted: &[u32], absolute: bool) -> Rat {
        // Distinct summands with multiplicities.
        let mut mult: Vec<(u32, u32)> = Vec::new();
        for &i in sorted {
            match mult.last_mut() {
                Some((j, k)) if *j == i => *k += 1,
                _ => mult.push((i, 1)),
            }
        }
        // Union of touched components.
        let mut comps: Vec<u32> = mult
            .iter()
            .flat_map(|&(i, _)| self.summands[i as usize].deps.iter().copied())
            .collect();
        comps.sort_unstable();
        comps.dedup();
        let slot_of: HashMap<u32, usize> =
            comps.iter().enumerate().map(|(s, &c)| (c, s)).collect();
        let arg_slots: Vec<Vec<usize>> = mult
            .iter()
            .map(|&(i, _)| {
                self.summands[i as usize]
                    .deps
                    .iter()
                    .map(|c| slot_of[c])
                    .collect()
            })
            .collect();

        let sizes: Vec<usize> = comps
            .iter()
            .map(|&c| self.components[c as usize].len())
            .collect();
        let mut odo = vec![0usize; comps.len()];
        let mut acc = Rat::zero();
        let mut args: Vec<Rat> = Vec::new();
        loop {
            let mut term = Rat::one();
            for (slot, &c) in comps.iter().enumerate() {
                term *= &self.components[c as usize][odo[slot]].1;
            }
            if !term.is_zero() {
                for (slots, &(i, k)) in arg_slots.iter().zip(&mult) {
                    args.clear();
                    args.extend(slots.iter().map(|&s| {
                        self.components[comps[s] as usize][odo[s]].0.clone()
                    }));
                    let mut v = (self.summands[i as usize].value)(&args);
                    if absolute {
                        v = v.abs();
                    }
                    term *= rat_pow(&v, k);
                }
                acc += term;
            }
            // Odometer increment.
            let mut slot = 0;
            loop {
                if slot == odo.len() {
                    return acc;
                }
                odo[slot] += 1;
                if odo[slot] < sizes[slot] {
                    break;
                }
                odo[slot] = 0;
                slot += 1;
            }
        }
    }

    /// All E X_i, in order.
    pub fn means(&self) -> Result<Vec<Rat>> {
        (0..self.summands.len() as u32)
            .map(|i| self.mixed_moment(&[i], false))
            .collect()
    }

    /// Var(Σ X_i), exploiting that summands with disjoint components are
    /// independent (zero covariance).
    pub fn sum_variance(&self) -> Result<Rat> {
        let n = self.summands.len();
        let means = self.means()?;
        // component -> summands using it
        let mut users: Vec<Vec<u32>> = vec![Vec::new(); self.components.len()];
        for (i, s) in self.summands.iter().enumerate() {
            for &c in &s.deps {
                users[c as usize].push(i as u32);
            }
        }
        let mut dependent: Vec<Vec<u32>> = vec![Vec::new(); n];
        for list in &users {
            for &i in list {
                for &j in list {
                    if j >= i {
                        dependent[i as usize].push(j);
                    }
                }
            }
        }
        let mut acc = Rat::zero();
        for i in 0..n as u32 {
            let list = &mut dependent[i as usize];
            list.sort_unstable();
            list.dedup();
            for &j in list.iter() {
                let cov = self.mixed_moment(&[i, j], false)?
                    - &means[i as usize] * &means[j as usize];
                if i == j {
                    acc += cov;
                } else {
                    acc += cov * rat(2, 1);
                }
            }
        }
        Ok(acc)
    }

    /// E (Σ X_i)^k by expanding into mixed moments (k ≤ 4 in practice).
    pub fn sum_moment(&self, k: u32) -> Result<Rat> {
        let n = self.summands.len() as u32;
        let mut acc = Rat::zero();
        let mut tuple = vec![0u32; k as usize];
        loop {
            acc += self.mixed_moment(&tuple, false)?;
            let mut pos = 0;
            loop {
                if pos == tuple.len() {
                    return Ok(acc);
                }
                tuple[pos] += 1;
                if tuple[pos] < n {
                    break;
                }
                tuple[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Exact law of S = Σ X_i as sorted (value, probability) pairs.
    ///
    /// Uses summand-by-summand convolution when the summands read pairwise
    /// disjoint components (independence), otherwise enumerates the full
    /// joint, which must stay within 2²⁵ outcomes.
    pub fn sum_pmf(&self) -> Result<Vec<(Rat, Rat)>> {
        let disjoint = {
            let mut seen: HashMap<u32, ()> = HashMap::new();
            self.summands
                .iter()
                .flat_map(|s| s.deps.iter())
                .all(|&c| seen.insert(c, ()).is_none())
        };
        let mut dist: BTreeMap<Rat, Rat> = BTreeMap::new();
        if disjoint {
            dist.insert(Rat::zero(), Rat::one());
            for s in &self.summands {
                let own = self.marginal_of(s)?;
                let mut next: BTreeMap<Rat, Rat> = BTreeMap::new();
                for (v, p) in &dist {
                    for (w, q) in &own {
                        *next.entry(v + w).or_insert_with(Rat::zero) += p * q;
                    }
                }
                dist = next;
            }
        } else {
            if self.joint_outcomes() > 1 << 25 {
                return Err(Error::InvalidInput(
                    "joint support too large to enumerate the sum law".into(),
                ));
            }
            let sizes: Vec<usize> = self.components.iter().map(Vec::len).collect();
            let mut odo = vec![0usize; sizes.len()];
            let mut args: Vec<Rat> = Vec::new();
            loop {
                let mut prob = Rat::one();
                for (c, &ix) in odo.iter().enumerate() {
                    prob *= &self.components[c][ix].1;
                }
                if !prob.is_zero() {
                    let mut total = Rat::zero();
                    for s in &self.summands {
                        args.clear();
                        args.extend(
                            s.deps.iter().map(|&c| self.components[c as usize][odo[c as usize]].0.clone()),
                        );
                        total += (s.value)(&args);
                    }
                    *dist.entry(total).or_insert_with(Rat::zero) += prob;
                }
                let mut c = 0;
                loop {
                    if c == odo.len() {
                        return Ok(dist.into_iter().collect());
                    }
                    odo[c] += 1;
                    if odo[c] < sizes[c] {
                        break;
                    }
                    odo[c] = 0;
                    c += 1;
                }
            }
        }
        Ok(dist.into_iter().collect())
    }

    /// Marginal law of one summand.
    fn marginal_of(&self, s: &Summand) -> Result<Vec<(Rat, Rat)>> {
        let sizes: Vec<usize> = s
            .deps
            .iter()
            .map(|&c| self.components[c as usize].len())
            .collect();
        let mut odo = vec![0usize; sizes.len()];
        let mut out: BTreeMap<Rat, Rat> = BTreeMap::new();
        let mut args: Vec<Rat> = Vec::new();
        loop {
            let mut prob = Rat::one();
            args.clear();
            for (k, &c) in s.deps.iter().enumerate() {
                let (v, p) = &self.components[c as usize][odo[k]];
                prob *= p;
                args.push(v.clone());
            }
            if !prob.is_zero() {
                *out.entry((s.value)(&args)).or_insert_with(Rat::zero) += prob;
            }
            let mut k = 0;
            loop {
                if k == odo.len() {
                    return Ok(out.into_iter().collect());
                }
                odo[k] += 1;
                if odo[k] < sizes[k] {
                    break;
                }
                odo[k] = 0;
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqx(a: Rat, b: Rat, d: u64) -> SqrtExt {
        SqrtExt::new(a, b, d)
    }

    #[test]
    fn sqrt_ext_arithmetic() {
        // (1 + 2√5)(3 − √5) = 3 − √5 + 6√5 − 2·5 = −7 + 5√5
        let x = sqx(rat(1, 1), rat(2, 1), 5);
        let y = sqx(rat(3, 1), rat(-1, 1), 5);
        let z = x.mul(&y);
        assert_eq!(z, sqx(rat(-7, 1), rat(5, 1), 5));
        assert!((z.to_f64() - (-7.0 + 5.0 * 5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn perfect_square_radicand_folds() {
        // 2 + 3√9 = 11
        let x = sqx(rat(2, 1), rat(3, 1), 9);
        assert!(x.is_rational());
        assert_eq!(x.as_rat(), Some(&rat(11, 1)));
        // √25 compares equal to the rational 5
        assert_eq!(SqrtExt::root(25), SqrtExt::from_rat(rat(5, 1)));
    }

    #[test]
    fn exact_sign_tests() {
        // 7 − 4√3 > 0 (49 > 48), 7 − 5√2 < 0 (49 < 50)
        assert!(sqx(rat(7, 1), rat(-4, 1), 3).is_nonneg());
        assert!(!sqx(rat(7, 1), rat(-5, 1), 2).is_nonneg());
        assert!(sqx(rat(-7, 1), rat(5, 1), 2).is_nonneg());
        assert!(!sqx(rat(-7, 1), rat(4, 1), 3).is_nonneg());
        assert!(SqrtExt::zero().is_nonneg());
    }

    #[test]
    fn floor_and_square_helpers() {
        assert_eq!(floor_u64(&rat(25, 4)), Some(6));
        assert_eq!(floor_u64(&rat(-1, 4)), None);
        assert_eq!(sqrt_if_square(&rat(9, 16)), Some(rat(3, 4)));
        assert_eq!(sqrt_if_square(&rat(2, 1)), None);
    }

    fn centered_bernoulli(q: Rat) -> Vec<(Rat, Rat)> {
        let one = Rat::one();
        vec![(one.clone() - &q, q.clone()), (-q.clone(), one - q)]
    }

    fn identity_summand(c: u32) -> Summand {
        Summand {
            deps: vec![c],
            value: Arc::new(|args: &[Rat]| args[0].clone()),
        }
    }

    #[test]
    fn bernoulli_third_moment_and_independence() {
        // X_i = B_i − q, q = 1/5: E X³ = q(1−q)(1−2q) = (1/5)(4/5)(3/5)
        let q = rat(1, 5);
        let comps = vec![centered_bernoulli(q.clone()); 3];
        let s = ExactSupport::new(comps, (0..3).map(identity_summand).collect()).unwrap();
        assert_eq!(s.mixed_moment(&[0, 0, 0], false).unwrap(), rat(12, 125));
        assert_eq!(s.mixed_moment(&[0, 1], false).unwrap(), Rat::zero());
        assert_eq!(s.sum_variance().unwrap(), rat(3 * 4, 25));
        assert!(s.means().unwrap().iter().all(|m| m.is_zero()));
        // permutation invariance through the cache
        assert_eq!(
            s.mixed_moment(&[2, 0, 2], false).unwrap(),
            s.mixed_moment(&[0, 2, 2], false).unwrap()
        );
    }

    #[test]
    fn duplicated_summands_correlate() {
        // X_0 and X_1 read the same Rademacher component: E X_0 X_1 = 1.
        let comp = vec![vec![(rat(1, 1), rat(1, 2)), (rat(-1, 1), rat(1, 2))]];
        let s = ExactSupport::new(
            comp,
            vec![identity_summand(0), identity_summand(0)],
        )
        .unwrap();
        assert_eq!(s.mixed_moment(&[0, 1], false).unwrap(), Rat::one());
        assert_eq!(s.mixed_moment(&[0, 0, 1], false).unwrap(), Rat::zero());
        assert_eq!(s.mixed_moment(&[0, 0, 1], true).unwrap(), Rat::one());
        assert_eq!(s.sum_variance().unwrap(), rat(4, 1));
    }

    #[test]
    fn sum_pmf_matches_binomial() {
        let comps = vec![vec![(rat(1, 1), rat(1, 2)), (rat(0, 1), rat(1, 2))]; 8];
        let s = ExactSupport::new(comps, (0..8).map(identity_summand).collect()).unwrap();
        let pmf = s.sum_pmf().unwrap();
        assert_eq!(pmf.len(), 9);
        for (k, (v, p)) in pmf.iter().enumerate() {
            assert_eq!(v, &rat(k as i64, 1));
            let binom = [1i64, 8, 28, 56, 70, 56, 28, 8, 1][k];
            assert_eq!(p, &rat(binom, 256));
        }
    }

    #[test]
    fn overlapping_sum_pmf_uses_joint_enumeration() {
        // S = ε₀ + 2ε₁ + ε₂ with ε Rademacher, via X_0 = ε₀ + ε₁, X_1 = ε₁ + ε₂.
        let comp = vec![(rat(1, 1), rat(1, 2)), (rat(-1, 1), rat(1, 2))];
        let pair = |a: u32, b: u32| Summand {
            deps: vec![a, b],
            value: Arc::new(|args: &[Rat]| &args[0] + &args[1]),
        };
        let s = ExactSupport::new(vec![comp; 3], vec![pair(0, 1), pair(1, 2)]).unwrap();
        let pmf = s.sum_pmf().unwrap();
        let expect = [
            (rat(-4, 1), rat(1, 8)),
            (rat(-2, 1), rat(2, 8)),
            (rat(0, 1), rat(2, 8)),
            (rat(2, 1), rat(2, 8)),
            (rat(4, 1), rat(1, 8)),
        ];
        assert_eq!(pmf, expect);
        assert_eq!(s.sum_moment(2).unwrap(), rat(6, 1));
        assert_eq!(s.sum_variance().unwrap(), rat(6, 1));
    }

    #[test]
    fn rejects_bad_probabilities() {
        let bad = vec![vec![(rat(1, 1), rat(1, 2)), (rat(-1, 1), rat(1, 3))]];
        assert!(ExactSupport::new(bad, vec![identity_summand(0)]).is_err());
    }
}
