//! Normal-approximation error-bound terms built from chain sums over nested
//! neighborhoods.
//!
//! For a standardized sum W = Σᵢ Xᵢ with neighborhoods A_i ⊆ A_{ij} ⊆ …, the
//! quadratic-distance bound is assembled from
//!
//! * a signed third-moment term
//!   β = Σᵢ Σ_{j,k∈A_i} E XᵢXⱼXₖ + 2 Σᵢ Σ_{j∈A_i} Σ_{k∈A_{ij}∖A_i} E XᵢXⱼXₖ,
//!   which coincides with the third cumulant of W, and
//! * absolute fourth-order chain sums γ₁, γ₂, γ₃ over chains
//!   (i, j∈A_i, k∈A_{ij}, l∈A_{ijk}), with the expectation split across
//!   the four factors in all admissible ways.
//!
//! The higher-order remainders R_m generalize the γ sums: chains of length
//! m+2 with the absolute expectation split at any break pattern in which no
//! two cuts are adjacent and the first two factors stay together. R₂ equals
//! γ₁+γ₂+γ₃ chain by chain, which the tests pin down exactly.

use crate::error::{Error, Result};
use crate::exact::Rat;
use crate::model::LocalModel;
use crate::moments::{Mode, MomentEstimate, KahanSum, BATCHES};
use crate::neighborhoods::NeighborhoodSystem;
use crate::rng::Purpose;
use num_traits::Zero;
use std::collections::HashMap;

/// A way of splitting the absolute expectation of a product of `factors`
/// consecutive chain factors into independent-looking segments.
///
/// `breaks` lists cut positions: a cut at b ends a segment after factor b
/// (1-based). Valid patterns keep factors 1 and 2 together and never cut at
/// adjacent positions, so breaks ⊆ {2, …, factors−1} with gaps ≥ 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EPlacement {
    pub factors: u32,
    pub breaks: Vec<u32>,
}

impl EPlacement {
    /// Half-open 0-based factor ranges, in order.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.breaks.len() + 1);
        let mut start = 0usize;
        for &b in &self.breaks {
            out.push((start, b as usize));
            start = b as usize;
        }
        out.push((start, self.factors as usize));
        out
    }
}

/// All expectation placements for a chain of m+2 factors, in lexicographic
/// order of the break list. Their number is the Fibonacci number F(m+2)
/// (F(1) = F(2) = 1). Requires 1 ≤ m ≤ 12.
pub fn e_placements(m: u32) -> Result<Vec<EPlacement>> {
    if !(1..=12).contains(&m) {
        return Err(Error::InvalidInput(format!(
            "placement order m = {m} outside 1..=12"
        )));
    }
    let factors = m + 2;
    let mut out = Vec::new();
    let mut breaks = Vec::new();
    // Lexicographic: emit the prefix itself before any extension, extensions
    // in increasing cut position, next cut at least 2 past the previous one.
    fn gen(factors: u32, from: u32, breaks: &mut Vec<u32>, out: &mut Vec<EPlacement>) {
        out.push(EPlacement {
            factors,
            breaks: breaks.clone(),
        });
        for b in from..factors {
            breaks.push(b);
            gen(factors, b + 2, breaks, out);
            breaks.pop();
        }
    }
    gen(factors, 2, &mut breaks, &mut out);
    Ok(out)
}

/// Interned expectation atom: E[Π X over a sorted index multiset], signed or
/// absolute.
type AtomKey = (Vec<u32>, bool);

const NO_ATOM: u32 = u32::MAX;

/// One summed tuple: `coeff · Π_p atom(atoms[p])` added into `quantity`.
struct Term {
    quantity: u8,
    coeff: i64,
    atoms: [u32; 3],
    n_atoms: u8,
}

/// A chain-sum evaluation plan shared by the exact and Monte Carlo engines.
struct Program {
    quantity_degrees: Vec<u32>,
    atoms: Vec<AtomKey>,
    terms: Vec<Term>,
    /// Summed tuples across all quantities (reported as term_count).
    term_count: u64,
    /// Independent replicate slots the MC engine must maintain (the maximum
    /// number of segments in any term).
    slots: u64,
}

struct ProgramBuilder {
    intern: HashMap<AtomKey, u32>,
    program: Program,
}

impl ProgramBuilder {
    fn new(quantity_degrees: Vec<u32>) -> Self {
        ProgramBuilder {
            intern: HashMap::new(),
            program: Program {
                quantity_degrees,
                atoms: Vec::new(),
                terms: Vec::new(),
                term_count: 0,
                slots: 1,
            },
        }
    }

    fn atom(&mut self, mut indices: Vec<u32>, absolute: bool) -> u32 {
        indices.sort_unstable();
        let key = (indices, absolute);
        if let Some(&id) = self.intern.get(&key) {
            return id;
        }
        let id = self.program.atoms.len() as u32;
        self.program.atoms.push(key.clone());
        self.intern.insert(key, id);
        id
    }

    fn term(&mut self, quantity: u8, coeff: i64, atom_ids: &[u32]) {
        assert!(atom_ids.len() <= 3);
        let mut atoms = [NO_ATOM; 3];
        atoms[..atom_ids.len()].copy_from_slice(atom_ids);
        self.program.slots = self.program.slots.max(atom_ids.len() as u64);
        self.program.terms.push(Term {
            quantity,
            coeff,
            atoms,
            n_atoms: atom_ids.len() as u8,
        });
        self.program.term_count += 1;
    }
}

fn require_depth(ns: &NeighborhoodSystem, needed: u32) -> Result<()> {
    if ns.depth() < needed {
        return Err(Error::InvalidInput(format!(
            "neighborhood depth {} insufficient; need {needed}",
            ns.depth()
        )));
    }
    Ok(())
}

/// Quantities: 0 = β, 1 = γ₁, 2 = γ₂, 3 = γ₃.
fn build_bound_program(ns: &NeighborhoodSystem) -> Result<Program> {
    require_depth(ns, 3)?;
    let mut b = ProgramBuilder::new(vec![3, 4, 4, 4]);
    for i in 0..ns.n() {
        let a_i = ns.neighbors(&[i]);
        for &j in &a_i {
            for &k in &a_i {
                let a = b.atom(vec![i, j, k], false);
                b.term(0, 1, &[a]);
            }
        }
        for &j in &a_i {
            let a_ij = ns.neighbors(&[i, j]);
            for &k in &a_ij {
                if a_i.binary_search(&k).is_err() {
                    let a = b.atom(vec![i, j, k], false);
                    b.term(0, 2, &[a]);
                }
                let a_ijk = ns.neighbors(&[i, j, k]);
                for &l in &a_ijk {
                    let whole = b.atom(vec![i, j, k, l], true);
                    b.term(1, 1, &[whole]);
                    let left2 = b.atom(vec![i, j], true);
                    let right2 = b.atom(vec![k, l], true);
                    b.term(2, 1, &[left2, right2]);
                    let left3 = b.atom(vec![i, j, k], true);
                    let right1 = b.atom(vec![l], true);
                    b.term(3, 1, &[left3, right1]);
                }
            }
        }
    }
    Ok(b.program)
}

/// Single quantity 0 = R_m: every placement of the absolute expectation over
/// every chain of length m+2.
fn build_r_program(ns: &NeighborhoodSystem, m: u32) -> Result<Program> {
    require_depth(ns, m + 1)?;
    let placements = e_placements(m)?;
    let segs: Vec<Vec<(usize, usize)>> = placements.iter().map(|p| p.segments()).collect();
    let mut b = ProgramBuilder::new(vec![m + 2]);
    let mut chain: Vec<u32> = Vec::with_capacity(m as usize + 2);
    fn extend(
        ns: &NeighborhoodSystem,
        chain: &mut Vec<u32>,
        target: usize,
        segs: &[Vec<(usize, usize)>],
        b: &mut ProgramBuilder,
    ) {
        if chain.len() == target {
            for seg_list in segs {
                let ids: Vec<u32> = seg_list
                    .iter()
                    .map(|&(s, e)| b.atom(chain[s..e].to_vec(), true))
                    .collect();
                b.term(0, 1, &ids);
            }
            return;
        }
        for e in ns.neighbors(chain) {
            chain.push(e);
            extend(ns, chain, target, segs, b);
            chain.pop();
        }
    }
    for i in 0..ns.n() {
        chain.clear();
        chain.push(i);
        extend(ns, &mut chain, m as usize + 2, &segs, &mut b);
    }
    Ok(b.program)
}

fn eval_exact(program: &Program, model: &LocalModel) -> Result<Vec<MomentEstimate>> {
    let exact = model
        .exact
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no exact law attached".into()))?;
    let atom_values: Vec<Rat> = program
        .atoms
        .iter()
        .map(|(idx, abs)| exact.mixed_moment(idx, *abs))
        .collect::<Result<_>>()?;
    let mut acc: Vec<Rat> = program
        .quantity_degrees
        .iter()
        .map(|_| Rat::zero())
        .collect();
    for t in &program.terms {
        let mut v = Rat::from_integer(t.coeff.into());
        for p in 0..t.n_atoms as usize {
            v *= &atom_values[t.atoms[p] as usize];
        }
        acc[t.quantity as usize] += v;
    }
    Ok(acc
        .into_iter()
        .zip(&program.quantity_degrees)
        .map(|(v, &d)| MomentEstimate::from_exact(v, d, model.scale))
        .collect())
}

/// Batch-mean Monte Carlo evaluation.
///
/// Replicates are split into 32 batches × `slots` independent sub-streams.
/// A term with one segment uses the batch's pooled atom mean; a term with
/// several segments multiplies means taken from distinct sub-streams so the
/// product stays unbiased. All quantities share the same draws (common
/// random numbers).
fn eval_mc(
    program: &Program,
    model: &LocalModel,
    seed: u64,
    replicates: u64,
) -> Result<Vec<MomentEstimate>> {
    let slots = program.slots;
    let per = replicates / (BATCHES * slots);
    if per == 0 {
        return Err(Error::InvalidInput(format!(
            "need at least {} replicates",
            BATCHES * slots
        )));
    }
    let n_atoms = program.atoms.len();
    let nq = program.quantity_degrees.len();
    // scale^|atom| folded into each atom mean so products compose.
    let atom_scale: Vec<f64> = program
        .atoms
        .iter()
        .map(|(idx, _)| model.scale.powi(idx.len() as i32))
        .collect();
    let mut batch_values = vec![Vec::with_capacity(BATCHES as usize); nq];
    let mut mu = vec![vec![0.0f64; n_atoms]; slots as usize];
    for b in 0..BATCHES {
        for (t, row) in mu.iter_mut().enumerate() {
            let mut acc = vec![KahanSum::default(); n_atoms];
            for k in 0..per {
                let stream = (b * slots + t as u64) * per + k;
                let x = model.draw_unscaled(seed, Purpose::Moment, stream);
                for (a, (indices, absolute)) in program.atoms.iter().enumerate() {
                    let mut p = 1.0;
                    for &i in indices {
                        p *= x[i as usize];
                    }
                    acc[a].add(if *absolute { p.abs() } else { p });
                }
            }
            for (a, s) in acc.iter().enumerate() {
                row[a] = atom_scale[a] * s.value() / per as f64;
            }
        }
        let pooled: Vec<f64> = (0..n_atoms)
            .map(|a| mu.iter().map(|row| row[a]).sum::<f64>() / slots as f64)
            .collect();
        let mut v = vec![KahanSum::default(); nq];
        for t in &program.terms {
            let val = if t.n_atoms == 1 {
                pooled[t.atoms[0] as usize]
            } else {
                (0..t.n_atoms as usize)
                    .map(|p| mu[p][t.atoms[p] as usize])
                    .product::<f64>()
            };
            v[t.quantity as usize].add(t.coeff as f64 * val);
        }
        for (q, s) in v.iter().enumerate() {
            batch_values[q].push(s.value());
        }
    }
    let total = BATCHES * slots * per;
    Ok(batch_values
        .iter()
        .map(|bv| MomentEstimate::from_batches(bv, total))
        .collect())
}

fn eval(program: &Program, model: &LocalModel, mode: Mode) -> Result<Vec<MomentEstimate>> {
    match mode {
        Mode::Exact => eval_exact(program, model),
        Mode::Mc { seed, replicates } => eval_mc(program, model, seed, replicates),
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub beta: MomentEstimate,
    pub gamma1: MomentEstimate,
    pub gamma2: MomentEstimate,
    pub gamma3: MomentEstimate,
    /// Summed index tuples across all four sums.
    pub term_count: u64,
}

impl BoundReport {
    pub fn gamma_sum(&self) -> f64 {
        self.gamma1.value + self.gamma2.value + self.gamma3.value
    }

    /// The quadratic-distance bound |β| + √(γ₁+γ₂+γ₃), constant-free.
    pub fn w2(&self) -> f64 {
        self.beta.value.abs() + self.gamma_sum().max(0.0).sqrt()
    }
}

/// β and γ₁, γ₂, γ₃ for a standardized locally dependent model.
pub fn bound_terms(model: &LocalModel, mode: Mode) -> Result<BoundReport> {
    let program = build_bound_program(&model.neighborhoods)?;
    let mut vals = eval(&program, model, mode)?;
    let gamma3 = vals.pop().unwrap();
    let gamma2 = vals.pop().unwrap();
    let gamma1 = vals.pop().unwrap();
    let beta = vals.pop().unwrap();
    Ok(BoundReport {
        beta,
        gamma1,
        gamma2,
        gamma3,
        term_count: program.term_count,
    })
}

/// The order-m remainder R_m (m ≤ 4): chains of m+2 factors, absolute
/// expectations split at every admissible break pattern.
pub fn r_m(model: &LocalModel, m: u32, mode: Mode) -> Result<MomentEstimate> {
    if !(1..=4).contains(&m) {
        return Err(Error::InvalidInput(format!("remainder order {m} outside 1..=4")));
    }
    let program = build_r_program(&model.neighborhoods, m)?;
    let mut vals = eval(&program, model, mode)?;
    Ok(vals.pop().unwrap())
}

#[derive(Debug, Clone)]
pub struct WpReport {
    /// Σ_{m=1}^{p} R_m^{1/m}.
    pub total: f64,
    pub terms: Vec<MomentEstimate>,
}

/// Constant-free p-th order bound functional Σ_{m≤p} R_m^{1/m}, p ∈ 1..=4.
pub fn wp_functional(model: &LocalModel, p: u32, mode: Mode) -> Result<WpReport> {
    if !(1..=4).contains(&p) {
        return Err(Error::InvalidInput(format!("order p = {p} outside 1..=4")));
    }
    let mut terms = Vec::with_capacity(p as usize);
    let mut total = 0.0;
    for m in 1..=p {
        let r = r_m(model, m, mode)?;
        total += r.value.max(0.0).powf(1.0 / m as f64);
        terms.push(r);
    }
    Ok(WpReport { total, terms })
}

#[derive(Debug, Clone, Copy)]
pub struct MdepBound {
    pub value: f64,
    /// Set when the window is 0 (an independent sum): the bound degenerates
    /// to 0 and says nothing.
    pub degenerate: bool,
}

/// Closed-form bound for an m-dependent standardized sum:
/// m²·Σ E|Xᵢ|³ + m^{3/2}·(Σ E Xᵢ⁴)^{1/2}.
pub fn mdep_bound(third_abs: &[f64], fourth: &[f64], m: u32) -> Result<MdepBound> {
    if third_abs.is_empty() || third_abs.len() != fourth.len() {
        return Err(Error::InvalidInput(
            "moment lists must be nonempty and of equal length".into(),
        ));
    }
    if third_abs.iter().chain(fourth).any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput(
            "absolute/even moments must be nonnegative".into(),
        ));
    }
    let mf = m as f64;
    let value = mf * mf * third_abs.iter().sum::<f64>()
        + mf.powf(1.5) * fourth.iter().sum::<f64>().sqrt();
    Ok(MdepBound {
        value,
        degenerate: m == 0,
    })
}

/// Bound for a standardized i.i.d.-type sum at order p:
/// (Σᵢ E|ξᵢ|^{p+2})^{1/p}. `abs_moments` lists the E|ξᵢ|^{p+2}.
pub fn iid_wp_bound(abs_moments: &[f64], p: f64) -> Result<f64> {
    if abs_moments.is_empty() {
        return Err(Error::InvalidInput("empty moment list".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("order p = {p} must be ≥ 1")));
    }
    if abs_moments.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput("absolute moments must be nonnegative".into()));
    }
    Ok(abs_moments.iter().sum::<f64>().powf(1.0 / p))
}
