//! Nested dependency neighborhoods over a finite index set.
//!
//! For indices i ∈ {0..N−1}, a system provides A_i (level 1), A_{ij} for
//! j ∈ A_i (level 2), A_{ijk} for k ∈ A_{ij} (level 3), and so on up to its
//! declared depth. The defining structural facts, checked by [`validate`]:
//! i ∈ A_i, and each set contains the previous one along any admissible
//! prefix chain. Chain sums in the bounds module walk exactly these chains.

use crate::rng::{stream_rng, Purpose};
use rand::Rng;
use std::collections::BTreeMap;
use std::sync::Arc;

type Rule = Arc<dyn Fn(&[u32]) -> Vec<u32> + Send + Sync>;

enum Source {
    /// `tables[k]` maps a prefix of length k+1 to its neighborhood.
    Tables(Vec<BTreeMap<Vec<u32>, Vec<u32>>>),
    /// Closure computing the neighborhood of an arbitrary prefix.
    Rule(Rule),
}

pub struct NeighborhoodSystem {
    n: u32,
    depth: u32,
    source: Source,
}

impl NeighborhoodSystem {
    /// Explicit tables, one level per prefix length; depth = tables.len().
    pub fn from_tables(n: u32, tables: Vec<BTreeMap<Vec<u32>, Vec<u32>>>) -> Self {
        assert!(!tables.is_empty());
        let depth = tables.len() as u32;
        NeighborhoodSystem {
            n,
            depth,
            source: Source::Tables(tables),
        }
    }

    /// Rule-backed system; `rule` must accept any prefix of length ≤ depth.
    pub fn from_rule(n: u32, depth: u32, rule: Rule) -> Self {
        assert!(depth >= 1);
        NeighborhoodSystem {
            n,
            depth,
            source: Source::Rule(rule),
        }
    }

    /// Independence structure: the neighborhood of a prefix is the prefix
    /// itself (as a set).
    pub fn singletons(n: u32, depth: u32) -> Self {
        Self::from_rule(
            n,
            depth,
            Arc::new(|prefix: &[u32]| {
                let mut v = prefix.to_vec();
                v.sort_unstable();
                v.dedup();
                v
            }),
        )
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Neighborhood of a prefix chain (sorted, duplicate-free).
    ///
    /// Panics on an empty or too-deep prefix, or (for table-backed systems)
    /// on a prefix the tables do not cover — both are construction bugs, not
    /// runtime conditions.
    pub fn neighbors(&self, prefix: &[u32]) -> Vec<u32> {
        assert!(
            !prefix.is_empty() && prefix.len() as u32 <= self.depth,
            "prefix length {} outside depth {}",
            prefix.len(),
            self.depth
        );
        let mut v = match &self.source {
            Source::Tables(tables) => tables[prefix.len() - 1]
                .get(prefix)
                .unwrap_or_else(|| panic!("no table entry for prefix {prefix:?}"))
                .clone(),
            Source::Rule(rule) => rule(prefix),
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Structural audit: walks prefix chains and records every violation of
    /// `i ∈ A_i`, range containment, and nesting A_prefix ⊆ A_{prefix·e}.
    ///
    /// Walks every chain when the system fits in `budget` visited prefixes;
    /// otherwise audits `budget` random chains (seeded, reproducible) and
    /// marks the report non-exhaustive.
    pub fn validate(&self, budget: u64, seed: u64) -> ValidationReport {
        let mut report = ValidationReport {
            checked: 0,
            exhaustive: true,
            violations: Vec::new(),
        };
        let mut remaining = budget;
        let mut prefix = Vec::new();
        for i in 0..self.n {
            prefix.clear();
            prefix.push(i);
            let a_i = self.neighbors(&prefix);
            if !a_i.contains(&i) {
                report.violations.push(Violation {
                    prefix: vec![i],
                    detail: format!("index {i} missing from its own neighborhood"),
                });
            }
            if !self.walk(&mut prefix, &a_i, &mut remaining, &mut report) {
                report.exhaustive = false;
                break;
            }
        }
        if !report.exhaustive {
            self.sample_chains(budget, seed, &mut report);
        }
        report
    }

    /// Exhaustive DFS; returns false when the budget runs out.
    fn walk(
        &self,
        prefix: &mut Vec<u32>,
        current: &[u32],
        remaining: &mut u64,
        report: &mut ValidationReport,
    ) -> bool {
        if *remaining == 0 {
            return false;
        }
        *remaining -= 1;
        report.checked += 1;
        self.check_range(prefix, current, report);
        if prefix.len() as u32 == self.depth {
            return true;
        }
        for &e in current {
            prefix.push(e);
            let next = self.neighbors(prefix);
            self.check_nesting(prefix, current, &next, report);
            let ok = self.walk(prefix, &next, remaining, report);
            prefix.pop();
            if !ok {
                return false;
            }
        }
        true
    }

    fn sample_chains(&self, budget: u64, seed: u64, report: &mut ValidationReport) {
        let mut rng = stream_rng(seed, Purpose::Aux, 0);
        for _ in 0..budget {
            let i = rng.gen_range(0..self.n);
            let mut prefix = vec![i];
            let mut current = self.neighbors(&prefix);
            report.checked += 1;
            if !current.contains(&i) {
                report.violations.push(Violation {
                    prefix: prefix.clone(),
                    detail: format!("index {i} missing from its own neighborhood"),
                });
            }
            self.check_range(&prefix, &current, report);
            while (prefix.len() as u32) < self.depth && !current.is_empty() {
                let e = current[rng.gen_range(0..current.len())];
                prefix.push(e);
                let next = self.neighbors(&prefix);
                report.checked += 1;
                self.check_range(&prefix, &next, report);
                self.check_nesting(&prefix, &current, &next, report);
                current = next;
            }
        }
    }

    fn check_range(&self, prefix: &[u32], set: &[u32], report: &mut ValidationReport) {
        if set.iter().any(|&e| e >= self.n) {
            report.violations.push(Violation {
                prefix: prefix.to_vec(),
                detail: "neighborhood contains an out-of-range index".into(),
            });
        }
    }

    fn check_nesting(
        &self,
        extended_prefix: &[u32],
        smaller: &[u32],
        larger: &[u32],
        report: &mut ValidationReport,
    ) {
        // Both sorted; subset check by merge walk.
        let mut it = larger.iter().peekable();
        for &e in smaller {
            while it.peek().is_some_and(|&&x| x < e) {
                it.next();
            }
            if it.peek() != Some(&&e) {
                report.violations.push(Violation {
                    prefix: extended_prefix.to_vec(),
                    detail: format!("neighborhood of {extended_prefix:?} is missing {e}"),
                });
                return;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The prefix chain at which the violation was observed.
    pub prefix: Vec<u32>,
    pub detail: String,
}

#[derive(Debug)]
pub struct ValidationReport {
    /// Prefixes visited.
    pub checked: u64,
    /// True when every chain was walked (small systems); false when sampled.
    pub exhaustive: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Interval windows: the neighborhood of a prefix is every index within `m`
/// of one of its members (the union of the members' windows). This is the
/// dependency structure of m-dependent sequences.
pub fn window_rule(n: u32, m: u32) -> Rule {
    Arc::new(move |prefix: &[u32]| {
        let mut v: Vec<u32> = prefix
            .iter()
            .flat_map(|&i| i.saturating_sub(m)..=(i + m).min(n - 1))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    })
}
