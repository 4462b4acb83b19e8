//! Experiment driver: per grid size, build the configured model, draw
//! replicate samples of the standardized sum, and score each sample against
//! N(0, 1) next to the model's bound functional and an i.i.d.-normal control
//! of the same size.
//!
//! Randomness is a pure function of (seed, purpose, stream): replicate r of
//! a sum sample uses streams r·s .. r·s + s under the model purpose, and the
//! control uses the same stream indices under the baseline purpose. Grid
//! points deliberately share streams (common random numbers), so distances
//! along the grid co-fluctuate rather than adding independent noise.

use std::sync::Arc;

use locdep::bounds::{iid_wp_bound, mdep_bound};
use locdep::distances::{kolmogorov_vs_normal, wp_vs_normal, zolotarev_lower_bound, EmpiricalSample};
use locdep::exact::{rat, to_f64, Rat};
use locdep::matching::{four_point_law, sample_vn_streams, DiscreteLaw};
use locdep::model::LocalModel;
use locdep::models::graphs::{erg_model, graph_bound_functional, GraphSpec, Motif};
use locdep::models::{iid_model, mdep_model, ustat_model, BaseLaw, UStatSpec};
use locdep::rng::{stream_rng, Purpose};
use locdep::stein::test_library;
use locdep::{Error, Result};

use crate::config::{default_coefficients, BaseKind, DistanceKind, ExperimentConfig, ModelKind};

/// One scored replicate.
#[derive(Debug, Clone)]
pub struct Row {
    pub model: String,
    pub n: u32,
    pub param: f64,
    pub replicate: u32,
    pub distance: f64,
    pub bound: f64,
    pub baseline: f64,
    pub seed: u64,
}

/// A grid point (or replicate) that failed; the run keeps going.
#[derive(Debug, Clone)]
pub struct ErrorRecord {
    pub n: u32,
    pub message: String,
}

/// Everything one run produced.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub rows: Vec<Row>,
    pub errors: Vec<ErrorRecord>,
}

/// A buildable target: either a dependency model or a replicated discrete
/// law (which is an i.i.d. sum and needs no neighborhood machinery).
pub enum Built {
    Model { model: LocalModel, bound: f64 },
    Law { law: DiscreteLaw, name: String, param: f64, bound: f64 },
}

impl Built {
    /// Size recorded in the output rows: the requested grid size for
    /// dependency models (whose summand count may grow much faster, e.g.
    /// one summand per motif copy), or the construction-selected
    /// replication count for a matching law.
    pub fn size(&self, requested: u32) -> u32 {
        match self {
            Built::Model { .. } => requested,
            Built::Law { law, .. } => law.n_selected() as u32,
        }
    }
}

/// Base law object for the configured innovation distribution.
pub fn base_law(kind: BaseKind) -> BaseLaw {
    match kind {
        BaseKind::Rademacher => BaseLaw::rademacher(),
        BaseKind::Normal => BaseLaw::standard_normal(),
    }
}

/// E|Z|^k for Z ~ N(0,1), k ∈ 3..=5 (the orders the bound columns need).
fn normal_abs_moment(k: u32) -> f64 {
    use std::f64::consts::PI;
    match k {
        3 => 2.0 * (2.0 / PI).sqrt(),
        4 => 3.0,
        5 => 8.0 * (2.0 / PI).sqrt(),
        _ => unreachable!("absolute moment order {k} not used by any bound"),
    }
}

/// E|ξ|^k of a finite law given as (atom, mass) pairs.
fn finite_abs_moment(atoms: &[(Rat, Rat)], k: u32) -> f64 {
    atoms
        .iter()
        .map(|(a, p)| to_f64(p) * to_f64(a).abs().powi(k as i32))
        .sum()
}

/// Marginal E|X₀|^k of an mdep summand before standardization: X₀ is the
/// weighted innovation sum, identical in law for every position.
fn mdep_marginal_abs_moment(model: &LocalModel, k: u32, base: BaseKind, coeffs: &[Rat]) -> Result<f64> {
    match base {
        BaseKind::Rademacher => {
            let exact = model
                .exact
                .as_ref()
                .ok_or_else(|| Error::Numerical("finite-base model lost its exact law".into()))?;
            let idx = vec![0u32; k as usize];
            let unscaled = exact.mixed_moment(&idx, true)?;
            Ok(to_f64(&unscaled) * model.scale.powi(k as i32))
        }
        BaseKind::Normal => {
            // X₀ ~ N(0, Σc²); fold in the standardization scale.
            let sigma2: f64 = coeffs.iter().map(|c| to_f64(c).powi(2)).sum();
            let sigma = model.scale * sigma2.sqrt();
            Ok(sigma.powi(k as i32) * normal_abs_moment(k))
        }
    }
}

/// Pair kernel used by the `ustat` model: h(x, y) = (x + y)/2 + (xy − ρ)/10
/// with ρ = E[XY] = 0 for centered independent inputs. The linear part keeps
/// the projection non-degenerate; the product part injects genuine pairwise
/// dependence.
pub fn pair_kernel() -> Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> {
    Arc::new(|xs: &[f64]| 0.5 * (xs[0] + xs[1]) + 0.1 * xs[0] * xs[1])
}

/// Exact-rational twin of [`pair_kernel`], for the small-n exact law.
pub fn pair_kernel_exact() -> Arc<dyn Fn(&[Rat]) -> Rat + Send + Sync> {
    Arc::new(|xs: &[Rat]| {
        let half = rat(1, 2);
        let tenth = rat(1, 10);
        &half * (&xs[0] + &xs[1]) + tenth * (&xs[0] * &xs[1])
    })
}

/// Enumerating the exact joint law costs Θ(|I|²) dependent-pair moments, so
/// it is only attached when the subset count stays tiny.
const USTAT_EXACT_LIMIT: u32 = 12;

/// Parses a motif argument: a named shape or `@path` to an edge-list file
/// (one `u v` pair per line, vertices 0-indexed).
pub fn parse_motif(arg: &str) -> Result<Motif> {
    if let Some(path) = arg.strip_prefix('@') {
        let text = std::fs::read_to_string(path)?;
        let name = std::path::Path::new(path)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom");
        return Motif::from_edge_list(name, &text);
    }
    match arg {
        "edge" => Ok(Motif::edge()),
        "path3" => Ok(Motif::path3()),
        "triangle" => Ok(Motif::triangle()),
        _ => {
            if let Some(k) = arg.strip_prefix('k') {
                if let Ok(k) = k.parse::<u32>() {
                    return Motif::complete(k);
                }
            }
            Err(Error::InvalidInput(format!(
                "unknown motif `{arg}` (expected edge, path3, triangle, k2..k8, or @file)"
            )))
        }
    }
}

/// Builds the configured model at size `n` together with the theoretical
/// bound column for the configured distance.
pub fn build(cfg: &ExperimentConfig, n: u32) -> Result<Built> {
    let order = cfg.distance.moment_order();
    match cfg.model {
        ModelKind::Mdep => {
            let base = base_law(cfg.base);
            let coeffs = cfg
                .coefficients
                .clone()
                .unwrap_or_else(|| default_coefficients(cfg.m));
            let model = mdep_model(n, cfg.m, &base, &coeffs)?;
            let t3 = mdep_marginal_abs_moment(&model, 3, cfg.base, &coeffs)?;
            let t4 = mdep_marginal_abs_moment(&model, 4, cfg.base, &coeffs)?;
            let bound = mdep_bound(
                &vec![t3; n as usize],
                &vec![t4; n as usize],
                cfg.m,
            )?
            .value;
            Ok(Built::Model { model, bound })
        }
        ModelKind::Iid => {
            let base = base_law(cfg.base);
            let model = iid_model(n, &base)?;
            let k = order + 2;
            let per = match cfg.base {
                BaseKind::Rademacher => {
                    let atoms = base
                        .finite_atoms()
                        .expect("rademacher base is finite")
                        .to_vec();
                    finite_abs_moment(&atoms, k) * model.scale.powi(k as i32)
                }
                BaseKind::Normal => model.scale.powi(k as i32) * normal_abs_moment(k),
            };
            let bound = iid_wp_bound(&vec![per; n as usize], order as f64)?;
            Ok(Built::Model { model, bound })
        }
        ModelKind::Ustat => {
            if cfg.m != 2 {
                return Err(Error::InvalidInput(format!(
                    "the built-in U-statistic kernel is a pair kernel; m must be 2, got {}",
                    cfg.m
                )));
            }
            let base = base_law(cfg.base);
            let exact_kernel = if cfg.base == BaseKind::Rademacher && n <= USTAT_EXACT_LIMIT {
                Some(pair_kernel_exact())
            } else {
                None
            };
            let model = ustat_model(UStatSpec {
                name: "ustat".into(),
                n,
                m: 2,
                kernel: pair_kernel(),
                exact_kernel,
                base,
                seed: cfg.seed,
            })?;
            // The projection bound for this family carries no computable
            // constant; the column records the bare decay rate.
            let bound = 1.0 / (n as f64).sqrt();
            Ok(Built::Model { model, bound })
        }
        ModelKind::Erg => {
            let motif = parse_motif(&cfg.motif)?;
            let bound = graph_bound_functional(n, to_f64(&cfg.p), &motif)?;
            let model = erg_model(&GraphSpec {
                motif,
                n,
                p: cfg.p.clone(),
                seed: cfg.seed,
            })?;
            Ok(Built::Model { model, bound })
        }
        ModelKind::MatchingLaw => {
            let law = four_point_law(&cfg.beta)?;
            let n_sel = law.n_selected();
            if n_sel > u32::MAX as u64 {
                return Err(Error::Construction(format!(
                    "replication count {n_sel} exceeds the supported grid range"
                )));
            }
            // V_n is an i.i.d. sum of n copies of ξ/√n with unit total
            // variance, so the independent-sum bound applies verbatim.
            let k = order + 2;
            let abs_k: f64 = law
                .atoms()
                .iter()
                .zip(law.probs())
                .map(|(a, p)| p.to_f64() * to_f64(a).abs().powi(k as i32))
                .sum();
            let per = abs_k / (n_sel as f64).powf(k as f64 / 2.0);
            let bound = iid_wp_bound(&vec![per; n_sel as usize], order as f64)?;
            Ok(Built::Law {
                law,
                name: "matching-law".into(),
                param: to_f64(&cfg.beta),
                bound,
            })
        }
    }
}

/// Scores one empirical sample against N(0, 1) with the configured distance.
pub fn eval_distance(kind: DistanceKind, sample: &EmpiricalSample) -> Result<f64> {
    match kind {
        DistanceKind::W1 => wp_vs_normal(sample, 1.0),
        DistanceKind::W2 => wp_vs_normal(sample, 2.0),
        DistanceKind::W3 => wp_vs_normal(sample, 3.0),
        DistanceKind::Kolmogorov => kolmogorov_vs_normal(sample),
        DistanceKind::Zolotarev => zolotarev_lower_bound(sample, 2, &test_library()),
    }
}

/// i.i.d. N(0, 1) control sample: one draw per stream, mirroring the stream
/// indexing of the model samples.
fn baseline_sample(seed: u64, first_stream: u64, s: u64) -> Result<EmpiricalSample> {
    let normal = BaseLaw::standard_normal();
    let mut values = vec![0.0f64; s as usize];
    let mut slot = [0.0f64];
    for (k, v) in values.iter_mut().enumerate() {
        let mut rng = stream_rng(seed, Purpose::Baseline, first_stream + k as u64);
        normal.fill(&mut rng, &mut slot);
        *v = slot[0];
    }
    EmpiricalSample::new(values)
}

/// Runs the full experiment: every grid size, every replicate. Build or
/// scoring failures become [`ErrorRecord`]s; the run continues. Rows come
/// back sorted by (n, replicate) and are a pure function of the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let mut table = Table::default();
    let s = cfg.sample_size;

    // matching-law picks its own size; everything else walks the grid.
    let targets: Vec<u32> = match cfg.model {
        ModelKind::MatchingLaw => vec![0],
        _ => cfg.grid.clone(),
    };

    for &target in &targets {
        let built = match build(cfg, target) {
            Ok(b) => b,
            Err(e) => {
                table.errors.push(ErrorRecord { n: target, message: e.to_string() });
                continue;
            }
        };
        let n = built.size(target);
        for r in 0..cfg.replicates {
            let first = r as u64 * s;
            let scored = (|| -> Result<(f64, f64)> {
                let sample = match &built {
                    Built::Model { model, .. } => {
                        EmpiricalSample::new(model.sample_sums(cfg.seed, Purpose::Model, first, s))?
                    }
                    Built::Law { law, .. } => sample_vn_streams(law, s, cfg.seed, first)?,
                };
                let distance = eval_distance(cfg.distance, &sample)?;
                let baseline = eval_distance(cfg.distance, &baseline_sample(cfg.seed, first, s)?)?;
                Ok((distance, baseline))
            })();
            match scored {
                Ok((distance, baseline)) => {
                    let (name, param, bound) = match &built {
                        Built::Model { model, bound } => (model.name.clone(), model.param, *bound),
                        Built::Law { name, param, bound, .. } => (name.clone(), *param, *bound),
                    };
                    table.rows.push(Row {
                        model: name,
                        n,
                        param,
                        replicate: r,
                        distance,
                        bound,
                        baseline,
                        seed: cfg.seed,
                    });
                }
                Err(e) => table.errors.push(ErrorRecord {
                    n,
                    message: format!("replicate {r}: {e}"),
                }),
            }
        }
    }

    table.rows.sort_by_key(|row| (row.n, row.replicate));
    Ok(table)
}
