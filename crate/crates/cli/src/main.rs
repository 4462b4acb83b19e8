//! `locdep` — normal-approximation error bounds for sums of locally
//! dependent random variables.
//!
//! Subcommands:
//! * `bound`       dependence-neighborhood bound terms for one model size
//! * `rate`        grid experiment + power-law rate fit, CSV/JSON output
//! * `stein-check` residual and smoothness checks for the equation solver
//! * `law`         discrete laws matching prescribed cumulants
//! * `wp`          transport distance for external sample files
//!
//! Exit codes: 0 on success, 2 for configuration/input errors, 3 for
//! numerical failures (including fits drowned by the sampling floor).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use locdep::bounds::bound_terms;
use locdep::distances::{empirical_wp, wp_vs_normal, EmpiricalSample};
use locdep::matching::{five_point_law, four_point_law, law_cumulants, sample_vn, DiscreteLaw};
use locdep::exact::to_f64;
use locdep::moments::{Mode, MomentEstimate};
use locdep::stein::{derivative_lipschitz_check, test_library, SteinSolver};
use locdep::{Error, Result};

use locdep_cli::config::{parse_rat, ExperimentConfig};
use locdep_cli::emit::{fmt_float, write_table};
use locdep_cli::experiment::{build, run_experiment, Built};
use locdep_cli::fit::fit_rate;

#[derive(Parser)]
#[command(
    name = "locdep",
    version,
    about = "Normal-approximation error bounds for sums of locally dependent random variables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Experiment settings; every flag overrides the same key in `--config`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file (`#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model family: mdep, iid, ustat, erg or matching-law.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated model sizes, strictly increasing, e.g. 256,512,1024.
    #[arg(long)]
    grid: Option<String>,
    /// Replicates per grid size.
    #[arg(long)]
    replicates: Option<u32>,
    /// Draws per replicate sample (config key `s`).
    #[arg(long = "sample-size")]
    sample_size: Option<u64>,
    /// Distance to N(0,1): w1, w2, w3, kolmogorov or zolotarev.
    #[arg(long)]
    distance: Option<String>,
    /// Root seed; all randomness is a pure function of it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Dependence window for mdep (the built-in ustat kernel pins m = 2).
    #[arg(long)]
    m: Option<u32>,
    /// Moving-average weights: m + 1 comma-separated rationals.
    #[arg(long)]
    coefficients: Option<String>,
    /// Innovation law: rademacher or normal.
    #[arg(long)]
    base: Option<String>,
    /// Edge probability for erg; rationals and decimals stay exact (0.3 = 3/10).
    #[arg(long)]
    p: Option<String>,
    /// Motif: edge, path3, triangle, k2..k8, or @FILE with one `u v` edge
    /// per line, vertices 0-indexed.
    #[arg(long)]
    motif: Option<String>,
    /// Third-cumulant target for matching-law.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                overrides.push((key.to_string(), v));
            }
        };
        push("model", self.model.clone());
        push("grid", self.grid.clone());
        push("replicates", self.replicates.map(|v| v.to_string()));
        push("s", self.sample_size.map(|v| v.to_string()));
        push("distance", self.distance.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|v| v.display().to_string()));
        push("format", self.format.clone());
        push("m", self.m.map(|v| v.to_string()));
        push("coefficients", self.coefficients.clone());
        push("base", self.base.clone());
        push("p", self.p.clone());
        push("motif", self.motif.clone());
        push("beta", self.beta.clone());
        ExperimentConfig::from_sources(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the neighborhood-chain bound terms for one model size.
    ///
    /// Exact mode enumerates every dependent index chain, so keep n small;
    /// Monte Carlo mode trades exactness for scale.
    Bound {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Model size (defaults to the first grid entry).
        #[arg(long)]
        n: Option<u32>,
        /// Moment evaluation: auto (exact when available), exact, or mc.
        #[arg(long, default_value = "auto")]
        mode: String,
        /// Replicates for mc moment evaluation.
        #[arg(long, default_value_t = 100_000)]
        mc_replicates: u64,
    },
    /// Run the grid experiment, fit the convergence rate, emit the table.
    Rate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Emit the table without fitting a rate.
        #[arg(long)]
        no_fit: bool,
    },
    /// Sweep the equation solver: residuals, branch agreement, smoothness.
    SteinCheck {
        /// Residual tolerance for declared test functions.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Sweep interval lower end.
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        lo: f64,
        /// Sweep interval upper end.
        #[arg(long, default_value_t = 4.0)]
        hi: f64,
        /// Number of sweep points.
        #[arg(long, default_value_t = 81)]
        points: u32,
    },
    /// Construct a discrete law with prescribed cumulants and print it.
    Law {
        /// Third cumulant for the four-atom construction.
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<String>,
        /// Third cumulant for the five-atom construction.
        #[arg(long, allow_hyphen_values = true)]
        kappa3: Option<String>,
        /// Fourth cumulant for the five-atom construction.
        #[arg(long, allow_hyphen_values = true)]
        kappa4: Option<String>,
        /// Also draw this many replicates of the normalized sum and report
        /// its empirical quadratic transport distance to N(0,1).
        #[arg(long)]
        sample: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Transport distance for external samples, one float per line.
    Wp {
        /// Sample file.
        file: PathBuf,
        /// Second sample; when omitted the first is compared to N(0,1).
        #[arg(long)]
        versus: Option<PathBuf>,
        /// Transport order p ≥ 1.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
}

fn fmt_estimate(est: &MomentEstimate) -> String {
    if est.std_error > 0.0 {
        format!("{} ± {}", fmt_float(est.value), fmt_float(est.std_error))
    } else {
        format!("{} (exact)", fmt_float(est.value))
    }
}

fn cmd_bound(cfg: &ConfigArgs, n: Option<u32>, mode: &str, mc_replicates: u64) -> Result<()> {
    let cfg = cfg.resolve()?;
    let n = n
        .or_else(|| cfg.grid.first().copied())
        .ok_or_else(|| Error::InvalidInput("no model size: pass --n or a grid".into()))?;
    let built = build(&cfg, n)?;
    let (model, functional) = match &built {
        Built::Model { model, bound } => (model, *bound),
        Built::Law { .. } => {
            return Err(Error::InvalidInput(
                "bound terms need a dependency model; use `law` for matching-law constructions"
                    .into(),
            ))
        }
    };
    let mode = match mode {
        "auto" => {
            if model.exact.is_some() {
                Mode::Exact
            } else {
                Mode::Mc { seed: cfg.seed, replicates: mc_replicates }
            }
        }
        "exact" => Mode::Exact,
        "mc" => Mode::Mc { seed: cfg.seed, replicates: mc_replicates },
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown mode `{other}` (expected auto, exact or mc)"
            )))
        }
    };
    let report = bound_terms(model, mode)?;
    println!("model       {}", model.name);
    println!("n           {}", model.n());
    println!("param       {}", fmt_float(model.param));
    println!("beta        {}", fmt_estimate(&report.beta));
    println!("gamma1      {}", fmt_estimate(&report.gamma1));
    println!("gamma2      {}", fmt_estimate(&report.gamma2));
    println!("gamma3      {}", fmt_estimate(&report.gamma3));
    println!("w2 term     {}", fmt_float(report.w2()));
    println!("model bound {}", fmt_float(functional));
    Ok(())
}

fn cmd_rate(cfg: &ConfigArgs, no_fit: bool) -> Result<()> {
    let cfg = cfg.resolve()?;
    let table = run_experiment(&cfg)?;
    let fit = if no_fit { None } else { Some(fit_rate(&table)) };
    let fit_ok = fit.as_ref().and_then(|r| r.as_ref().ok());
    write_table(&table, fit_ok, cfg.format, cfg.output.as_deref())?;
    for err in &table.errors {
        eprintln!("note: n = {}: {}", err.n, err.message);
    }
    match fit {
        None => Ok(()),
        Some(Ok(f)) => {
            eprintln!(
                "rate fit: slope {:.4}, r² {:.4}, used {:?}, dropped {:?}",
                f.slope, f.r_squared, f.used, f.dropped
            );
            Ok(())
        }
        Some(Err(e)) => Err(e),
    }
}

fn cmd_stein_check(tol: f64, lo: f64, hi: f64, points: u32) -> Result<()> {
    if !(points >= 3 && hi > lo && tol > 0.0) {
        return Err(Error::InvalidInput(
            "need at least 3 points, hi > lo, and a positive tolerance".into(),
        ));
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let mut failed = false;
    for h in test_library() {
        let declared: Vec<u32> = [2u32, 3].iter().copied().filter(|&p| h.in_lambda(p)).collect();
        let name = h.name;
        let solver = SteinSolver::new(h.clone(), (tol * 0.1).max(1e-9))?;
        let mut sup_residual = 0.0f64;
        let mut sup_gap = 0.0f64;
        for &w in &grid {
            sup_residual = sup_residual.max(solver.residual(w)?);
            // Off-branch tail integrals blow up for large |w|; compare the
            // two forms only where both are representable.
            if w.abs() <= 2.0 {
                let (a, b) = solver.solution_both_forms(w)?;
                sup_gap = sup_gap.max((a - b).abs());
            }
        }
        let mut notes = Vec::new();
        for &p in &declared {
            let lips = derivative_lipschitz_check(&h, p, &grid, 1e-3)?;
            notes.push(format!(
                "f^({p}) {} (sup quotient {:.3})",
                if lips.unstable { "UNSTABLE" } else { "stable" },
                lips.sup_quotient
            ));
            failed |= lips.unstable;
        }
        let gated = !declared.is_empty();
        let ok = sup_residual <= tol && sup_gap <= 2.0 * tol;
        if gated {
            failed |= !ok;
        }
        println!(
            "{} {:<12} Nh {:+.6e}  sup residual {:.3e}  branch gap {:.3e}  {}",
            if !gated {
                "  ctrl"
            } else if ok {
                "  pass"
            } else {
                "! FAIL"
            },
            name,
            solver.nh(),
            sup_residual,
            sup_gap,
            notes.join(", "),
        );
    }
    if failed {
        return Err(Error::Numerical(
            "solver invariants violated on the sweep grid".into(),
        ));
    }
    Ok(())
}

fn print_law(law: &DiscreteLaw) {
    println!("replication n {}", law.n_selected());
    println!("tuning c2     {}", to_f64(law.c2()));
    if law.is_degenerate() {
        println!("degenerate    yes (all cumulant targets zero)");
    }
    println!("atom          probability");
    for (a, p) in law.atoms().iter().zip(law.probs()) {
        println!("{:>+8}      {}", format!("{a}"), fmt_float(p.to_f64()));
    }
    let c = law_cumulants(law);
    println!("single-draw cumulants:");
    println!("  mean     {}", fmt_float(c.mean.to_f64()));
    println!("  variance {}", fmt_float(c.variance.to_f64()));
    println!("  k3       {}", fmt_float(c.k3.to_f64()));
    println!("  k4       {}", fmt_float(c.k4.to_f64()));
    let root_n = (law.n_selected() as f64).sqrt();
    println!("normalized-sum cumulants:");
    println!("  k3       {}", fmt_float(c.k3.to_f64() / root_n));
    println!("  k4       {}", fmt_float(c.k4.to_f64() / root_n.powi(2)));
}

fn cmd_law(
    beta: Option<&str>,
    kappa3: Option<&str>,
    kappa4: Option<&str>,
    sample: Option<u64>,
    seed: u64,
) -> Result<()> {
    let five = kappa3.is_some() || kappa4.is_some();
    if five && beta.is_some() {
        return Err(Error::InvalidInput(
            "pass either --beta (four-atom law) or --kappa3/--kappa4 (five-atom law)".into(),
        ));
    }
    let law = if five {
        let k3 = parse_rat(kappa3.unwrap_or("0"))?;
        let k4 = parse_rat(kappa4.unwrap_or("0"))?;
        println!("five-atom law: k3 = {}, k4 = {}", to_f64(&k3), to_f64(&k4));
        five_point_law(&k3, &k4)?
    } else {
        let beta = parse_rat(beta.ok_or_else(|| {
            Error::InvalidInput("pass --beta, or --kappa3/--kappa4 for the five-atom law".into())
        })?)?;
        println!("four-atom law: beta = {}", to_f64(&beta));
        four_point_law(&beta)?
    };
    print_law(&law);
    if let Some(draws) = sample {
        let sample = sample_vn(&law, draws, seed)?;
        let w2 = wp_vs_normal(&sample, 2.0)?;
        println!("empirical w2 vs N(0,1) at {draws} draws: {}", fmt_float(w2));
    }
    Ok(())
}

fn read_sample(path: &PathBuf) -> Result<EmpiricalSample> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: f64 = line.parse().map_err(|_| {
            Error::InvalidInput(format!(
                "{}:{}: `{line}` is not a number",
                path.display(),
                lineno + 1
            ))
        })?;
        values.push(x);
    }
    EmpiricalSample::new(values)
}

fn cmd_wp(file: &PathBuf, versus: Option<&PathBuf>, p: f64) -> Result<()> {
    let a = read_sample(file)?;
    let d = match versus {
        Some(other) => empirical_wp(&a, &read_sample(other)?, p)?,
        None => wp_vs_normal(&a, p)?,
    };
    println!("{}", fmt_float(d));
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Bound { cfg, n, mode, mc_replicates } => {
            cmd_bound(&cfg, n, &mode, mc_replicates)
        }
        Command::Rate { cfg, no_fit } => cmd_rate(&cfg, no_fit),
        Command::SteinCheck { tol, lo, hi, points } => cmd_stein_check(tol, lo, hi, points),
        Command::Law { beta, kappa3, kappa4, sample, seed } => cmd_law(
            beta.as_deref(),
            kappa3.as_deref(),
            kappa4.as_deref(),
            sample,
            seed,
        ),
        Command::Wp { file, versus, p } => cmd_wp(&file, versus.as_ref(), p),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
