//! Discrete laws with prescribed low-order cumulants.
//!
//! Each construction picks a replication count n and a small finitely
//! supported law for ξ so that V_n = n^{−1/2}(ξ_1 + … + ξ_n) carries the
//! requested third (and, for the five-point law, fourth) cumulant: by
//! cumulant homogeneity κ₃(V_n) = κ₃(ξ)/√n and κ₄(V_n) = κ₄(ξ)/n, so the
//! single-variable targets are κ₃(ξ) = √n·β and κ₄(ξ) = n·κ₄. Probabilities
//! live in Q[√n], keeping every moment identity exact.

use num_traits::{One, Signed, Zero};

use crate::distances::EmpiricalSample;
use crate::error::{Error, Result};
use crate::exact::{floor_u64, rat, rat_pow, to_f64, Rat, SqrtExt};
use crate::rng::{sample_index, stream_rng, Purpose};

/// Finitely supported law with exact atoms and probabilities.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    atoms: Vec<Rat>,
    probs: Vec<SqrtExt>,
    n_selected: u64,
    c2: Rat,
    degenerate: bool,
}

impl DiscreteLaw {
    /// Validates: equal nonempty lengths, distinct atoms, probabilities in
    /// [0, 1] summing to exactly 1, and a positive replication count.
    pub fn new(
        atoms: Vec<Rat>,
        probs: Vec<SqrtExt>,
        n_selected: u64,
        c2: Rat,
        degenerate: bool,
    ) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::InvalidInput(
                "atoms and probabilities must be nonempty lists of equal length".into(),
            ));
        }
        if n_selected == 0 {
            return Err(Error::InvalidInput(
                "replication count must be positive".into(),
            ));
        }
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].contains(a) {
                return Err(Error::InvalidInput(format!("duplicate atom {a}")));
            }
        }
        let one = SqrtExt::from_rat(Rat::one());
        let mut total = SqrtExt::zero();
        for p in &probs {
            if !p.is_nonneg() || !one.sub(p).is_nonneg() {
                return Err(Error::InvalidInput(
                    "probability outside [0, 1]".into(),
                ));
            }
            total = total.add(p);
        }
        if !total.sub(&one).is_zero() {
            return Err(Error::InvalidInput(
                "probabilities do not sum to one".into(),
            ));
        }
        Ok(DiscreteLaw { atoms, probs, n_selected, c2, degenerate })
    }

    pub fn atoms(&self) -> &[Rat] {
        &self.atoms
    }

    pub fn probs(&self) -> &[SqrtExt] {
        &self.probs
    }

    /// The replication count n in V_n.
    pub fn n_selected(&self) -> u64 {
        self.n_selected
    }

    /// Tuning constant actually used for the n = ⌊c₂ …⌋ selection.
    pub fn c2(&self) -> &Rat {
        &self.c2
    }

    /// True when the targets were all zero: the law is the symmetric base
    /// law and V_n carries no cumulant signal (callers wanting an exact
    /// match should substitute N(0,1) itself).
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Raw moment E ξ^k, exact.
    pub fn raw_moment(&self, k: u32) -> SqrtExt {
        let mut acc = SqrtExt::zero();
        for (a, p) in self.atoms.iter().zip(&self.probs) {
            acc = acc.add(&p.scale(&rat_pow(a, k)));
        }
        acc
    }
}

fn four_point_atoms() -> Vec<Rat> {
    vec![rat(-3, 2), rat(-1, 2), rat(1, 2), rat(3, 2)]
}

/// Four-atom law on {±3/2, ±1/2} whose replicated sum V_n has third
/// cumulant exactly β.
///
/// n = ⌊β⁻²/4⌋, so √n·|β| ≤ 1/2 and every probability stays inside [0, 1].
/// β = 0 returns the symmetric base law (n = 1, degenerate). |β| > 1 or a
/// selection n = 0 (i.e. |β| > 1/2) is outside the regime where the
/// construction makes sense.
pub fn four_point_law(beta: &Rat) -> Result<DiscreteLaw> {
    let c2 = rat(1, 4);
    if beta.abs() > Rat::one() {
        return Err(Error::Construction(
            "outside construction regime: |β| exceeds 1".into(),
        ));
    }
    if beta.is_zero() {
        let probs = vec![
            SqrtExt::from_rat(rat(3, 16)),
            SqrtExt::from_rat(rat(5, 16)),
            SqrtExt::from_rat(rat(5, 16)),
            SqrtExt::from_rat(rat(3, 16)),
        ];
        return DiscreteLaw::new(four_point_atoms(), probs, 1, c2, true);
    }
    let n = floor_u64(&(&c2 / &(beta * beta))).unwrap_or(0);
    if n == 0 {
        return Err(Error::Construction(
            "outside construction regime: replication count ⌊β⁻²/4⌋ is zero".into(),
        ));
    }
    // s = √n·β; probabilities are base ± s-linear tilts.
    let s = SqrtExt::root(n).scale(beta);
    let base = |num: i64| SqrtExt::from_rat(rat(num, 16));
    let probs = vec![
        base(3).sub(&s.scale(&rat(1, 6))),
        base(5).add(&s.scale(&rat(1, 2))),
        base(5).sub(&s.scale(&rat(1, 2))),
        base(3).add(&s.scale(&rat(1, 6))),
    ];
    DiscreteLaw::new(four_point_atoms(), probs, n, c2, false)
}

fn five_point_atoms() -> Vec<Rat> {
    (-2..=2).map(|a| rat(a, 1)).collect()
}

fn five_point_probs(s: &SqrtExt, nk4: &Rat) -> Vec<SqrtExt> {
    // s = √n·κ₃, nk4 = n·κ₄.
    let base = |num: i64, den: i64| SqrtExt::from_rat(rat(num, den));
    let nk4 = SqrtExt::from_rat(nk4.clone());
    vec![
        base(1, 12).add(&s.scale(&rat(-1, 12)).add(&nk4.scale(&rat(1, 24)))),
        base(1, 6).add(&s.scale(&rat(1, 6)).sub(&nk4.scale(&rat(1, 6)))),
        base(1, 2).add(&nk4.scale(&rat(1, 4))),
        base(1, 6).sub(&s.scale(&rat(1, 6)).add(&nk4.scale(&rat(1, 6)))),
        base(1, 12).add(&s.scale(&rat(1, 12)).add(&nk4.scale(&rat(1, 24)))),
    ]
}

/// Five-atom law on {−2,…,2} whose replicated sum V_n has third cumulant κ₃
/// and fourth cumulant κ₄.
///
/// n = ⌊c₂′ κ₃⁻²⌋ ∧ ⌊c₂′ |κ₄|⁻¹⌋ starting from c₂′ = 1/10; if any
/// probability left [0, 1] the constant would be halved and n reselected
/// (at 1/10 the tilts are provably too small for that to ever fire — the
/// loop is a guard, with a hard floor of 10⁻⁶). κ₃ = κ₄ = 0 returns the
/// symmetric base law (n = 1, degenerate).
pub fn five_point_law(kappa3: &Rat, kappa4: &Rat) -> Result<DiscreteLaw> {
    let start = rat(1, 10);
    if kappa3.is_zero() && kappa4.is_zero() {
        let s = SqrtExt::zero();
        let probs = five_point_probs(&s, &Rat::zero());
        return DiscreteLaw::new(five_point_atoms(), probs, 1, start, true);
    }
    let floor = rat(1, 1_000_000);
    let mut c2 = start;
    while c2 >= floor {
        let mut n = u64::MAX;
        if !kappa3.is_zero() {
            n = n.min(floor_u64(&(&c2 / &(kappa3 * kappa3))).unwrap_or(0));
        }
        if !kappa4.is_zero() {
            n = n.min(floor_u64(&(&c2 / &kappa4.abs())).unwrap_or(0));
        }
        if n == 0 {
            // Shrinking c₂′ only lowers n further; bail out now.
            return Err(Error::Construction(
                "outside construction regime: selected replication count is zero".into(),
            ));
        }
        let s = SqrtExt::root(n).scale(kappa3);
        let nk4 = Rat::from_integer(n.into()) * kappa4;
        let probs = five_point_probs(&s, &nk4);
        let one = SqrtExt::from_rat(Rat::one());
        if probs.iter().all(|p| p.is_nonneg() && one.sub(p).is_nonneg()) {
            return DiscreteLaw::new(five_point_atoms(), probs, n, c2, false);
        }
        c2 = c2 / rat(2, 1);
    }
    Err(Error::Construction(
        "no feasible replication count: tuning constant shrank below 1e-6".into(),
    ))
}

/// Exact mean, variance, and third/fourth cumulants of a law, in Q[√n].
#[derive(Debug, Clone)]
pub struct LawCumulants {
    pub mean: SqrtExt,
    pub variance: SqrtExt,
    pub k3: SqrtExt,
    pub k4: SqrtExt,
}

/// Cumulants up to order four from exact raw moments.
pub fn law_cumulants(law: &DiscreteLaw) -> LawCumulants {
    let m1 = law.raw_moment(1);
    let m2 = law.raw_moment(2);
    let m3 = law.raw_moment(3);
    let m4 = law.raw_moment(4);
    let variance = m2.sub(&m1.pow(2));
    // Central-cumulant expansions in raw moments.
    let k3 = m3.sub(&m1.mul(&m2).scale(&rat(3, 1))).add(&m1.pow(3).scale(&rat(2, 1)));
    let k4 = m4
        .sub(&m1.mul(&m3).scale(&rat(4, 1)))
        .sub(&m2.pow(2).scale(&rat(3, 1)))
        .add(&m2.mul(&m1.pow(2)).scale(&rat(12, 1)))
        .sub(&m1.pow(4).scale(&rat(6, 1)));
    LawCumulants { mean: m1, variance, k3, k4 }
}

/// `draws` independent realizations of V_n = n^{−1/2} Σ_{i≤n} ξ_i.
///
/// One stream per replicate under the law-sampling purpose, so the result
/// is a pure function of (law, draws, seed).
pub fn sample_vn(law: &DiscreteLaw, draws: u64, seed: u64) -> Result<EmpiricalSample> {
    sample_vn_streams(law, draws, seed, 0)
}

/// Same as [`sample_vn`] but starting at stream `first_stream`, so disjoint
/// batches (e.g. experiment replicates) never share randomness.
pub fn sample_vn_streams(
    law: &DiscreteLaw,
    draws: u64,
    seed: u64,
    first_stream: u64,
) -> Result<EmpiricalSample> {
    if draws < 2 {
        return Err(Error::InvalidInput(
            "need at least two draws for an empirical sample".into(),
        ));
    }
    let atoms: Vec<f64> = law.atoms.iter().map(to_f64).collect();
    let cum: Vec<f64> = {
        let mut acc = SqrtExt::zero();
        law.probs
            .iter()
            .map(|p| {
                acc = acc.add(p);
                acc.to_f64()
            })
            .collect()
    };
    let n = law.n_selected;
    let scale = 1.0 / (n as f64).sqrt();
    let mut values = Vec::with_capacity(draws as usize);
    for rep in 0..draws {
        let mut rng = stream_rng(seed, Purpose::Law, first_stream + rep);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += atoms[sample_index(&cum, rand::Rng::gen::<f64>(&mut rng))];
        }
        values.push(scale * sum);
    }
    EmpiricalSample::new(values)
}
