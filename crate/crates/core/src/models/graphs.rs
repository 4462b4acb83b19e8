//! Motif (small subgraph) counts in dense random graphs: motif description,
//! copy enumeration, count statistics, exact and sampled variances, and the
//! standardized count-deviation model.

use std::collections::HashSet;
use std::sync::Arc;

use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::exact::{rat, rat_pow, to_f64, ExactSupport, Rat, Summand};
use crate::model::LocalModel;
use crate::neighborhoods::NeighborhoodSystem;
use crate::rng::{stream_rng, Purpose};

use super::combinations;

/// Cap on materialized copies when building a per-copy model.
const MODEL_COPY_CAP: u64 = 1_000_000;
/// Cap on materialized copies for the exact pairwise variance sum.
const VARIANCE_COPY_CAP: u64 = 100_000;

/// A connected-or-not small graph shape on at most 8 vertices, stored with
/// canonical vertex labels 0..v−1 and edges as ordered (low, high) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif {
    name: String,
    vertex_count: u32,
    edges: Vec<(u32, u32)>,
}

impl Motif {
    /// Parses one edge per line, two 0-based vertex labels separated by
    /// whitespace. Labels are compacted to 0..v−1 preserving order.
    pub fn from_edge_list(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut raw: Vec<(u32, u32)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (a, b) = match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "line {}: expected two vertex labels, got {line:?}",
                        lineno + 1
                    )))
                }
            };
            let parse = |tok: &str| -> Result<u32> {
                tok.parse::<u32>().map_err(|_| {
                    Error::InvalidInput(format!("line {}: bad vertex label {tok:?}", lineno + 1))
                })
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if a == b {
                return Err(Error::InvalidInput(format!(
                    "line {}: self-loop at vertex {a}",
                    lineno + 1
                )));
            }
            raw.push((a.min(b), a.max(b)));
        }
        if raw.is_empty() {
            return Err(Error::InvalidInput("motif needs at least one edge".into()));
        }
        // compact labels
        let mut labels: Vec<u32> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() > 8 {
            return Err(Error::InvalidInput(format!(
                "motif touches {} vertices; at most 8 supported",
                labels.len()
            )));
        }
        let rank = |v: u32| labels.binary_search(&v).unwrap() as u32;
        let mut edges: Vec<(u32, u32)> = raw.iter().map(|&(a, b)| (rank(a), rank(b))).collect();
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(Error::InvalidInput("duplicate edge in motif".into()));
        }
        Ok(Motif {
            name: name.into(),
            vertex_count: labels.len() as u32,
            edges,
        })
    }

    pub fn edge() -> Self {
        Motif { name: "edge".into(), vertex_count: 2, edges: vec![(0, 1)] }
    }

    pub fn triangle() -> Self {
        Motif {
            name: "triangle".into(),
            vertex_count: 3,
            edges: vec![(0, 1), (0, 2), (1, 2)],
        }
    }

    /// Path on three vertices (two incident edges).
    pub fn path3() -> Self {
        Motif {
            name: "path3".into(),
            vertex_count: 3,
            edges: vec![(0, 1), (0, 2)],
        }
    }

    pub fn complete(k: u32) -> Result<Self> {
        if !(2..=8).contains(&k) {
            return Err(Error::InvalidInput(format!(
                "complete motif needs 2 ≤ k ≤ 8, got {k}"
            )));
        }
        let edges = (0..k)
            .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
            .collect();
        Ok(Motif { name: format!("k{k}"), vertex_count: k, edges })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertex_count(&self) -> u32 {
        self.vertex_count
    }

    pub fn edge_count(&self) -> u32 {
        self.edges.len() as u32
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    fn is_complete(&self) -> bool {
        let v = self.vertex_count as usize;
        self.edges.len() == v * (v - 1) / 2
    }

    fn is_triangle(&self) -> bool {
        self.vertex_count == 3 && self.edges.len() == 3
    }

    fn is_path3(&self) -> bool {
        self.vertex_count == 3 && self.edges.len() == 2
    }

    /// Adjacency bitmask per vertex.
    fn adjacency(&self) -> [u8; 8] {
        let mut adj = [0u8; 8];
        for &(a, b) in &self.edges {
            adj[a as usize] |= 1 << b;
            adj[b as usize] |= 1 << a;
        }
        adj
    }

    /// Number of vertex permutations mapping the edge set onto itself.
    pub fn automorphism_count(&self) -> u64 {
        let v = self.vertex_count as usize;
        let edge_set: HashSet<(u32, u32)> = self.edges.iter().copied().collect();
        let mut perm: Vec<u32> = (0..v as u32).collect();
        let mut count = 0u64;
        // Heap's algorithm over all v! permutations (v ≤ 8).
        fn heap(k: usize, perm: &mut Vec<u32>, visit: &mut dyn FnMut(&[u32])) {
            if k == 1 {
                visit(perm);
                return;
            }
            for i in 0..k {
                heap(k - 1, perm, visit);
                if k % 2 == 0 {
                    perm.swap(i, k - 1);
                } else {
                    perm.swap(0, k - 1);
                }
            }
        }
        heap(v, &mut perm, &mut |p: &[u32]| {
            let ok = edge_set.iter().all(|&(a, b)| {
                let (x, y) = (p[a as usize], p[b as usize]);
                edge_set.contains(&(x.min(y), x.max(y)))
            });
            if ok {
                count += 1;
            }
        });
        count
    }
}

/// Identifier of the unordered pair (a, b), a < b < n, in lexicographic
/// order: 0 ↦ (0,1), 1 ↦ (0,2), …
pub fn edge_id(n: u32, a: u32, b: u32) -> u32 {
    debug_assert!(a < b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

pub fn edge_total(n: u32) -> u32 {
    n * (n - 1) / 2
}

/// All copies of `motif` in the complete graph on n vertices, a copy being a
/// distinct edge set; each copy is the sorted list of its edge ids. Errors
/// beyond `cap` copies (per-copy models stop scaling long before the plain
/// count statistic does — use [`count_copies`], which never materializes
/// copies, when only the count is needed).
pub fn copies_in_complete(n: u32, motif: &Motif, cap: u64) -> Result<Vec<Vec<u32>>> {
    let v = motif.vertex_count;
    if n < v {
        return Ok(Vec::new());
    }
    let over_cap = |count: u64| {
        Err(Error::InvalidInput(format!(
            "{count} copies of {} in a {n}-vertex graph exceed the cap of {cap}; \
             for plain counting use the streaming counter instead",
            motif.name
        )))
    };
    if motif.is_complete() {
        // one copy per vertex subset
        let count = (0..v as u64).fold(1u64, |acc, i| acc * (n as u64 - i) / (i + 1));
        if count > cap {
            return over_cap(count);
        }
        return Ok(combinations(n, v)
            .into_iter()
            .map(|vs| {
                let mut ids: Vec<u32> = (0..v as usize)
                    .flat_map(|i| {
                        let vs = &vs;
                        (i + 1..v as usize).map(move |j| edge_id(n, vs[i], vs[j]))
                    })
                    .collect();
                ids.sort_unstable();
                ids
            })
            .collect());
    }
    // Backtracking over injective vertex maps, deduplicated by edge set.
    let adj = motif.adjacency();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut assign = vec![0u32; v as usize];
    let mut used = vec![false; n as usize];
    fn rec(
        depth: u32,
        v: u32,
        n: u32,
        adj: &[u8; 8],
        assign: &mut Vec<u32>,
        used: &mut Vec<bool>,
        seen: &mut HashSet<Vec<u32>>,
        cap: u64,
    ) -> bool {
        if depth == v {
            let mut ids: Vec<u32> = Vec::with_capacity(8);
            for a in 0..v {
                for b in a + 1..v {
                    if adj[a as usize] & (1 << b) != 0 {
                        let (x, y) = (assign[a as usize], assign[b as usize]);
                        ids.push(edge_id(n, x.min(y), x.max(y)));
                    }
                }
            }
            ids.sort_unstable();
            seen.insert(ids);
            return seen.len() as u64 <= cap;
        }
        for cand in 0..n {
            if used[cand as usize] {
                continue;
            }
            assign[depth as usize] = cand;
            used[cand as usize] = true;
            let ok = rec(depth + 1, v, n, adj, assign, used, seen, cap);
            used[cand as usize] = false;
            if !ok {
                return false;
            }
        }
        true
    }
    if !rec(0, v, n, &adj, &mut assign, &mut used, &mut seen, cap) {
        return over_cap(seen.len() as u64);
    }
    let mut copies: Vec<Vec<u32>> = seen.into_iter().collect();
    copies.sort_unstable();
    Ok(copies)
}

/// An undirected simple graph on n vertices as row bitsets.
#[derive(Clone)]
pub struct SampledGraph {
    n: u32,
    words: usize,
    rows: Vec<u64>,
}

impl SampledGraph {
    pub fn empty(n: u32) -> Self {
        let words = ((n as usize) + 63) / 64;
        SampledGraph { n, words, rows: vec![0u64; n as usize * words] }
    }

    /// Each potential edge present independently with probability `p`; one
    /// 32-bit draw per pair (a, b), a < b, in lexicographic order.
    pub fn sample(n: u32, p: f64, rng: &mut ChaCha12Rng) -> Self {
        let thresh = (p * 4294967296.0).round() as u64;
        let mut g = SampledGraph::empty(n);
        for a in 0..n {
            for b in a + 1..n {
                if (rng.gen::<u32>() as u64) < thresh {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn add_edge(&mut self, a: u32, b: u32) {
        assert!(a != b && a < self.n && b < self.n);
        self.rows[a as usize * self.words + (b / 64) as usize] |= 1u64 << (b % 64);
        self.rows[b as usize * self.words + (a / 64) as usize] |= 1u64 << (a % 64);
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.rows[a as usize * self.words + (b / 64) as usize] & (1u64 << (b % 64)) != 0
    }

    pub fn degree(&self, v: u32) -> u32 {
        self.row(v).iter().map(|w| w.count_ones()).sum()
    }

    pub fn edge_count(&self) -> u64 {
        (0..self.n).map(|v| self.degree(v) as u64).sum::<u64>() / 2
    }

    fn row(&self, v: u32) -> &[u64] {
        &self.rows[v as usize * self.words..(v as usize + 1) * self.words]
    }

    /// popcount of (row_a ∧ row_b) restricted to vertices > lo.
    fn common_above(&self, a: u32, b: u32, lo: u32) -> u32 {
        let ra = self.row(a);
        let rb = self.row(b);
        let start = ((lo + 1) / 64) as usize;
        let mut count = 0u32;
        for w in start..self.words {
            let mut x = ra[w] & rb[w];
            if w == start {
                // (lo + 1) % 64 < 64, so the shifts are in range
                let drop = (lo + 1) as usize - start * 64;
                x = x >> drop << drop;
            }
            count += x.count_ones();
        }
        count
    }
}

/// Number of copies of `motif` in `g` (copies = distinct edge subsets
/// isomorphic to the motif). Triangles stream over edges with bitset
/// intersections; three-vertex paths reduce to degrees; everything else
/// backtracks over injective maps and divides by the automorphism count.
pub fn count_copies(g: &SampledGraph, motif: &Motif) -> u64 {
    if motif.is_triangle() {
        let mut count = 0u64;
        for a in 0..g.n {
            for b in a + 1..g.n {
                if g.has_edge(a, b) {
                    count += g.common_above(a, b, b) as u64;
                }
            }
        }
        return count;
    }
    if motif.is_path3() {
        return (0..g.n)
            .map(|v| {
                let d = g.degree(v) as u64;
                d * d.saturating_sub(1) / 2
            })
            .sum();
    }
    let v = motif.vertex_count;
    let adj = motif.adjacency();
    let mut assign = vec![0u32; v as usize];
    let mut used = vec![false; g.n as usize];
    fn rec(
        depth: u32,
        v: u32,
        g: &SampledGraph,
        adj: &[u8; 8],
        assign: &mut Vec<u32>,
        used: &mut Vec<bool>,
        maps: &mut u64,
    ) {
        if depth == v {
            *maps += 1;
            return;
        }
        'cand: for cand in 0..g.n {
            if used[cand as usize] {
                continue;
            }
            for prev in 0..depth {
                if adj[depth as usize] & (1 << prev) != 0
                    && !g.has_edge(assign[prev as usize], cand)
                {
                    continue 'cand;
                }
            }
            assign[depth as usize] = cand;
            used[cand as usize] = true;
            rec(depth + 1, v, g, adj, assign, used, maps);
            used[cand as usize] = false;
        }
    }
    let mut maps = 0u64;
    rec(0, v, g, &adj, &mut assign, &mut used, &mut maps);
    maps / motif.automorphism_count()
}

/// min over subgraph shapes H of the motif (e(H) ≥ 1) of n^{v(H)} · p^{e(H)}.
///
/// Enumerates vertex subsets rather than edge subsets: for a fixed touched
/// vertex set, taking every available edge minimizes the product (p ≤ 1), so
/// the minimum over edge subsets is attained on a vertex subset with all its
/// internal edges.
pub fn psi(n: u32, p: f64, motif: &Motif) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} outside (0, 1)")));
    }
    let v = motif.vertex_count;
    let mut best = f64::INFINITY;
    for subset in 1u32..(1 << v) {
        let mut e_in = 0u32;
        let mut touched = 0u32;
        for &(a, b) in &motif.edges {
            if subset & (1 << a) != 0 && subset & (1 << b) != 0 {
                e_in += 1;
                touched |= (1 << a) | (1 << b);
            }
        }
        if e_in == 0 {
            continue;
        }
        let cand = (n as f64).powi(touched.count_ones() as i32) * p.powi(e_in as i32);
        best = best.min(cand);
    }
    Ok(best)
}

pub enum VarianceMode {
    Exact,
    Mc { replicates: u64 },
}

/// Exact variance of the motif count via the pairwise covariance sum
/// Σ_{i,j} (p^{2e − e(G_i ∩ G_j)} − p^{2e}) over ordered copy pairs sharing
/// at least one edge (the diagonal included).
fn pair_sum_variance(copies: &[Vec<u32>], inverted: &[Vec<u32>], e: u32, p: &Rat) -> Rat {
    // shared-edge-count histogram over ordered dependent pairs
    let mut pair_counts = vec![0u64; e as usize + 1];
    let mut mark = vec![false; copies.len()];
    let mut touched: Vec<u32> = Vec::new();
    for (i, ids) in copies.iter().enumerate() {
        for &edge in ids {
            for &j in &inverted[edge as usize] {
                if !mark[j as usize] {
                    mark[j as usize] = true;
                    touched.push(j);
                }
            }
        }
        for &j in &touched {
            if j as usize == i {
                continue;
            }
            let shared = copies[j as usize]
                .iter()
                .filter(|id| ids.binary_search(id).is_ok())
                .count();
            pair_counts[shared] += 1;
            mark[j as usize] = false;
        }
        mark[i] = false;
        touched.clear();
    }
    pair_counts[e as usize] += copies.len() as u64; // diagonal shares all e edges
    let p2e = rat_pow(p, 2 * e);
    let mut var = Rat::zero();
    for (shared, &count) in pair_counts.iter().enumerate().skip(1) {
        if count == 0 {
            continue;
        }
        let term = rat_pow(p, 2 * e - shared as u32) - &p2e;
        var += term * rat(count as i64, 1);
    }
    var
}

/// Var of the triangle count in closed form, valid for every n:
/// C(n,3)·[(p³ − p⁶) + 3(n−3)(p⁵ − p⁶)].
fn triangle_variance_rat(n: u32, p: &Rat) -> Rat {
    let n = n as i64;
    let triples = rat(n * (n - 1) * (n - 2) / 6, 1);
    let p3 = rat_pow(p, 3);
    let p5 = rat_pow(p, 5);
    let p6 = rat_pow(p, 6);
    triples * ((&p3 - &p6) + (&p5 - &p6) * rat(3 * (n - 3), 1))
}

fn exact_count_variance(n: u32, p: &Rat, motif: &Motif) -> Result<Rat> {
    if motif.is_triangle() {
        return Ok(triangle_variance_rat(n, p));
    }
    let copies = copies_in_complete(n, motif, VARIANCE_COPY_CAP)?;
    let inverted = invert_copies(n, &copies);
    Ok(pair_sum_variance(&copies, &inverted, motif.edge_count(), p))
}

/// Variance of the motif count in the n-vertex random graph, exactly (copy
/// pair sum, capped; triangles in closed form at any n) or by Monte Carlo.
pub fn subgraph_variance(
    n: u32,
    p: &Rat,
    motif: &Motif,
    mode: VarianceMode,
    seed: u64,
) -> Result<f64> {
    if !(p > &Rat::zero() && p < &Rat::one()) {
        return Err(Error::InvalidInput("edge probability outside (0, 1)".into()));
    }
    match mode {
        VarianceMode::Exact => Ok(to_f64(&exact_count_variance(n, p, motif)?)),
        VarianceMode::Mc { replicates } => {
            if replicates < 2 {
                return Err(Error::InvalidInput("need at least 2 replicates".into()));
            }
            let pf = to_f64(p);
            let counts: Vec<f64> = (0..replicates)
                .map(|k| {
                    let mut rng = stream_rng(seed, Purpose::Aux, k);
                    count_copies(&SampledGraph::sample(n, pf, &mut rng), motif) as f64
                })
                .collect();
            let r = replicates as f64;
            let mean = counts.iter().sum::<f64>() / r;
            Ok(counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (r - 1.0))
        }
    }
}

/// The count-variance control: ψ^{−1/2} in the sparse/moderate regime
/// p ≤ 1/2, and n⁻¹(1−p)^{−1/2} in the dense regime.
pub fn graph_bound_functional(n: u32, p: f64, motif: &Motif) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} outside (0, 1)")));
    }
    if p <= 0.5 {
        Ok(psi(n, p, motif)?.powf(-0.5))
    } else {
        Ok(1.0 / (n as f64) / (1.0 - p).sqrt())
    }
}

fn invert_copies(n: u32, copies: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut inverted: Vec<Vec<u32>> = vec![Vec::new(); edge_total(n) as usize];
    for (i, ids) in copies.iter().enumerate() {
        for &e in ids {
            inverted[e as usize].push(i as u32);
        }
    }
    inverted
}

pub struct GraphSpec {
    pub motif: Motif,
    pub n: u32,
    /// Edge probability, exact.
    pub p: Rat,
    /// Seed for Monte Carlo standardization (only consulted when the exact
    /// variance is out of reach).
    pub seed: u64,
}

/// Builds the standardized motif-count deviation model: one summand per copy
/// G_i, X_i = 1{G_i present} − p^e, with A-neighborhoods of a chain being
/// every copy sharing an edge with the chain's union.
///
/// The scale comes from the exact count variance whenever the pair sum (or
/// the triangle closed form) is available, else from Monte Carlo. Small
/// systems get the exact joint law attached.
pub fn erg_model(spec: &GraphSpec) -> Result<LocalModel> {
    let GraphSpec { motif, n, p, seed } = spec;
    let (n, seed) = (*n, *seed);
    if !(p > &Rat::zero() && p < &Rat::one()) {
        return Err(Error::InvalidInput("edge probability outside (0, 1)".into()));
    }
    if n < motif.vertex_count() {
        return Err(Error::InvalidInput(format!(
            "graph on {n} vertices cannot host a {}-vertex motif",
            motif.vertex_count()
        )));
    }
    let copies = Arc::new(copies_in_complete(n, motif, MODEL_COPY_CAP)?);
    assert!(!copies.is_empty());
    let inverted = Arc::new(invert_copies(n, &copies));
    let count = copies.len() as u32;
    let e = motif.edge_count();
    let pe = rat_pow(p, e);
    let pe_f64 = to_f64(&pe);
    let pf = to_f64(p);

    let rule_copies = Arc::clone(&copies);
    let rule_inverted = Arc::clone(&inverted);
    let rule = Arc::new(move |prefix: &[u32]| {
        let mut mark = vec![false; rule_copies.len()];
        for &i in prefix {
            for &edge in &rule_copies[i as usize] {
                for &j in &rule_inverted[edge as usize] {
                    mark[j as usize] = true;
                }
            }
        }
        mark.iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j as u32))
            .collect::<Vec<u32>>()
    });
    let ns = NeighborhoodSystem::from_rule(count, 5, rule);

    let sampler_copies = Arc::clone(&copies);
    let total_edges = edge_total(n);
    let sampler = Arc::new(move |seed: u64, purpose: Purpose, stream: u64| {
        let mut rng = stream_rng(seed, purpose, stream);
        let thresh = (pf * 4294967296.0).round() as u64;
        // edge-indicator bitset in edge-id order (same draw order as
        // SampledGraph::sample)
        let mut bits = vec![0u64; (total_edges as usize + 63) / 64];
        for id in 0..total_edges {
            if (rng.gen::<u32>() as u64) < thresh {
                bits[(id / 64) as usize] |= 1u64 << (id % 64);
            }
        }
        sampler_copies
            .iter()
            .map(|ids| {
                let present = ids
                    .iter()
                    .all(|&id| bits[(id / 64) as usize] & (1u64 << (id % 64)) != 0);
                if present {
                    1.0 - pe_f64
                } else {
                    -pe_f64
                }
            })
            .collect::<Vec<f64>>()
    });

    let psi_value = psi(n, pf, motif)?;
    let mut model = LocalModel::new(format!("erg-{}", motif.name()), ns, sampler)
        .with_param(psi_value);

    // Exact joint law for small systems (cheap pairwise enumerations).
    if total_edges <= 28 {
        let atom = vec![(Rat::zero(), Rat::one() - p), (Rat::one(), p.clone())];
        let components = vec![atom; total_edges as usize];
        let summands = copies
            .iter()
            .map(|ids| {
                let pe = pe.clone();
                Summand {
                    deps: ids.clone(),
                    value: Arc::new(move |vs: &[Rat]| {
                        vs.iter().fold(Rat::one(), |acc, v| acc * v) - &pe
                    }),
                }
            })
            .collect();
        model = model.with_exact(ExactSupport::new(components, summands)?);
    }

    let exact_var = exact_count_variance(n, p, motif);
    match exact_var {
        Ok(var) => {
            if var.is_zero() {
                return Err(Error::Degenerate("count variance is zero".into()));
            }
            model = model.with_exact_scale_sq(Rat::one() / var);
        }
        Err(_) => {
            // copy count between the variance and model caps: fall back to a
            // sampled scale
            model.standardize_mc(seed, (3.0f64 / 1e5).sqrt())?;
        }
    }

    if motif.is_triangle() {
        let scale = model.scale;
        let mean = count as f64 * pe_f64;
        let tri = Motif::triangle();
        let fast = Arc::new(move |seed: u64, purpose: Purpose, stream: u64| {
            let mut rng = stream_rng(seed, purpose, stream);
            let g = SampledGraph::sample(n, pf, &mut rng);
            scale * (count_copies(&g, &tri) as f64 - mean)
        });
        model = model.with_fast_sum(fast);
    }
    Ok(model)
}
