//! Experiment configuration: a flat `key = value` file plus command-line
//! overrides, resolved into one validated [`ExperimentConfig`].
//!
//! Later sources win: defaults < config file < command-line flags. Every
//! value is plain text, so a run is reproducible from the file alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use locdep::exact::{rat, Rat};
use locdep::{Error, Result};
use num_traits::One;

/// Which model family a run draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Moving-average sum with a finite dependence window.
    Mdep,
    /// Independent sum (the zero-window special case).
    Iid,
    /// Pair-kernel U-statistic over i.i.d. base variables.
    Ustat,
    /// Centered motif counts in a G(n, p) random graph.
    Erg,
    /// Replicated discrete law matching a prescribed third cumulant.
    MatchingLaw,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdep" => Ok(ModelKind::Mdep),
            "iid" => Ok(ModelKind::Iid),
            "ustat" => Ok(ModelKind::Ustat),
            "erg" => Ok(ModelKind::Erg),
            "matching-law" => Ok(ModelKind::MatchingLaw),
            other => Err(Error::InvalidInput(format!(
                "unknown model `{other}` (expected mdep, iid, ustat, erg or matching-law)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Mdep => "mdep",
            ModelKind::Iid => "iid",
            ModelKind::Ustat => "ustat",
            ModelKind::Erg => "erg",
            ModelKind::MatchingLaw => "matching-law",
        };
        f.write_str(s)
    }
}

/// Which discrepancy is measured between the sample and N(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    W1,
    W2,
    W3,
    Kolmogorov,
    Zolotarev,
}

impl DistanceKind {
    /// Wasserstein order when the distance is a transport distance.
    pub fn wasserstein_order(self) -> Option<u32> {
        match self {
            DistanceKind::W1 => Some(1),
            DistanceKind::W2 => Some(2),
            DistanceKind::W3 => Some(3),
            _ => None,
        }
    }

    /// Order used for moment-based bound columns; transport distances keep
    /// their own order, the sup-norm style distances default to 2.
    pub fn moment_order(self) -> u32 {
        self.wasserstein_order().unwrap_or(2)
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w1" => Ok(DistanceKind::W1),
            "w2" => Ok(DistanceKind::W2),
            "w3" => Ok(DistanceKind::W3),
            "kolmogorov" => Ok(DistanceKind::Kolmogorov),
            "zolotarev" => Ok(DistanceKind::Zolotarev),
            other => Err(Error::InvalidInput(format!(
                "unknown distance `{other}` (expected w1, w2, w3, kolmogorov or zolotarev)"
            ))),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DistanceKind::W1 => "w1",
            DistanceKind::W2 => "w2",
            DistanceKind::W3 => "w3",
            DistanceKind::Kolmogorov => "kolmogorov",
            DistanceKind::Zolotarev => "zolotarev",
        };
        f.write_str(s)
    }
}

/// Base innovation law for the mdep/iid/ustat families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Rademacher,
    Normal,
}

impl FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(BaseKind::Rademacher),
            "normal" => Ok(BaseKind::Normal),
            other => Err(Error::InvalidInput(format!(
                "unknown base law `{other}` (expected rademacher or normal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidInput(format!(
                "unknown output format `{other}` (expected csv or json)"
            ))),
        }
    }
}

/// Full description of one experiment run.
///
/// `grid` is the list of model sizes; for `matching-law` the size is fixed
/// by the construction itself and the grid is ignored.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub grid: Vec<u32>,
    pub replicates: u32,
    pub sample_size: u64,
    pub distance: DistanceKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Dependence window for `mdep`.
    pub m: u32,
    /// Moving-average weights (length m + 1); defaults to all ones.
    pub coefficients: Option<Vec<Rat>>,
    pub base: BaseKind,
    /// Edge probability for `erg`, kept exact.
    pub p: Rat,
    /// Motif name (`edge`, `path3`, `triangle`, `k2`..`k8`) or `@file` with
    /// one `u v` edge per line, 0-indexed vertices.
    pub motif: String,
    /// Target third cumulant for `matching-law`.
    pub beta: Rat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Mdep,
            grid: Vec::new(),
            replicates: 20,
            sample_size: 10_000,
            distance: DistanceKind::W2,
            seed: 1,
            output: None,
            format: OutputFormat::Csv,
            m: 2,
            coefficients: None,
            base: BaseKind::Rademacher,
            p: rat(3, 10),
            motif: "triangle".into(),
            beta: rat(1, 10),
        }
    }
}

impl ExperimentConfig {
    /// Applies one key-value assignment. Keys match the config-file syntax.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "model" => self.model = value.parse()?,
            "grid" => self.grid = parse_grid(value)?,
            "replicates" => self.replicates = parse_int(value, "replicates")?,
            "s" => self.sample_size = parse_int(value, "s")?,
            "distance" => self.distance = value.parse()?,
            "seed" => self.seed = parse_int(value, "seed")?,
            "out" => self.output = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "m" => self.m = parse_int(value, "m")?,
            "coefficients" => self.coefficients = Some(parse_rat_list(value)?),
            "base" => self.base = value.parse()?,
            "p" => self.p = parse_rat(value)?,
            "motif" => self.motif = value.to_string(),
            "beta" => self.beta = parse_rat(value)?,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Reads a flat config file: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    /// Resolves defaults, an optional config file, and override pairs (in
    /// that order) into a validated configuration.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (key, value) in overrides {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the cross-field invariants that individual setters cannot see.
    pub fn validate(&self) -> Result<()> {
        if self.model != ModelKind::MatchingLaw {
            if self.grid.is_empty() {
                return Err(Error::InvalidInput("grid must not be empty".into()));
            }
            if self.grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(
                    "grid sizes must be strictly increasing".into(),
                ));
            }
        }
        if self.replicates < 1 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        if self.sample_size < 100 {
            return Err(Error::InvalidInput(format!(
                "sample size s must be at least 100, got {}",
                self.sample_size
            )));
        }
        if let Some(coeffs) = &self.coefficients {
            if coeffs.len() != (self.m + 1) as usize {
                return Err(Error::InvalidInput(format!(
                    "coefficients must have m + 1 = {} entries, got {}",
                    self.m + 1,
                    coeffs.len()
                )));
            }
        }
        Ok(())
    }
}

fn parse_int<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("{key}: `{value}` is not a valid integer")))
}

/// Comma-separated list of sizes, e.g. `20,40,80,160`.
pub fn parse_grid(value: &str) -> Result<Vec<u32>> {
    value
        .split(',')
        .map(|tok| parse_int(tok.trim(), "grid"))
        .collect()
}

/// Exact rational from `a/b`, an integer, or a finite decimal (`0.3` reads
/// as 3/10 exactly, not as the nearest float).
pub fn parse_rat(value: &str) -> Result<Rat> {
    let bad = || Error::InvalidInput(format!("`{value}` is not a valid rational"));
    let value = value.trim();
    if let Some((num, den)) = value.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad())?;
        let den: i64 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        return Ok(rat(num, den));
    }
    if let Some((int, frac)) = value.split_once('.') {
        let neg = int.starts_with('-');
        let int_part: i64 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let frac_num: i64 = frac.parse().map_err(|_| bad())?;
        let den = 10i64.pow(frac.len() as u32);
        let abs = rat(int_part.abs(), 1) + rat(frac_num, den);
        return Ok(if neg || int_part < 0 { -abs } else { abs });
    }
    let n: i64 = value.parse().map_err(|_| bad())?;
    Ok(rat(n, 1))
}

/// Comma-separated rationals, e.g. `1,2,1` or `1/2,1,1/2`.
pub fn parse_rat_list(value: &str) -> Result<Vec<Rat>> {
    value.split(',').map(parse_rat).collect()
}

/// All-ones fallback for the moving-average weights.
pub fn default_coefficients(m: u32) -> Vec<Rat> {
    vec![Rat::one(); (m + 1) as usize]
}
