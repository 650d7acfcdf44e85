//! Run configuration: CLI flags over a `key=value` file over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use halfwave::constants::ProblemParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Hwf1,
}

/// Flags shared by every subcommand. Unset flags fall back to `--config`,
/// then to the subcommand defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct CommonArgs {
    /// Spatial dimension N (>= 2)
    #[arg(long = "N", value_name = "N")]
    pub dim: Option<usize>,
    /// Subcritical exponent, 2 < q < 2 + 2/N
    #[arg(long)]
    pub q: Option<f64>,
    /// Coupling of the subcritical term (> 0)
    #[arg(long)]
    pub mu: Option<f64>,
    /// Prescribed mass ||u||_2 (> 0)
    #[arg(long)]
    pub a: Option<f64>,
    /// Box side length; defaults depend on the subcommand
    #[arg(long = "L", value_name = "L")]
    pub box_length: Option<f64>,
    /// Points per axis (even)
    #[arg(long)]
    pub n: Option<usize>,
    /// Convergence tolerance of the iterative solver
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap of the iterative solver
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Initial pseudo-time step
    #[arg(long)]
    pub tau: Option<f64>,
    /// Bubble width epsilon (sobolev, excited, bubble-scan, mp-bound)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// HWF1 field used as the initial iterate
    #[arg(long = "seed-file")]
    pub seed_file: Option<PathBuf>,
    /// Output path (HWF1 field, CSV table or JSON report)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Flat key=value file; keys are the long flag names
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fully resolved configuration, echoed into every output.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub problem: ProblemParams,
    /// `a` was not given and is set to `a_* / 2`.
    pub a_from_a_star: bool,
    pub box_length: Option<f64>,
    pub n: usize,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

const KEYS: [&str; 13] =
    ["N", "q", "mu", "a", "L", "n", "tol", "max-iter", "tau", "epsilon", "seed-file", "out", "format"];

pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim().trim_start_matches("--");
        if !KEYS.contains(&k) {
            return Err(UsageError(format!("config line {}: unknown key `{k}`", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn pick<T: std::str::FromStr>(
    cli: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, UsageError> {
    if cli.is_some() {
        return Ok(cli);
    }
    match file.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| UsageError(format!("config key `{key}`: cannot parse `{v}`"))),
    }
}

/// Per-subcommand fallbacks.
#[derive(Clone, Copy, Debug)]
pub struct Defaults {
    /// `None`: half of `a_*`, filled in by the subcommand.
    pub a: Option<f64>,
    pub n: usize,
    pub format: Format,
}

impl CommonArgs {
    pub fn resolve(&self, subcommand: &str, d: Defaults) -> Result<RunConfig, UsageError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let format = match self.format {
            Some(f) => f,
            None => match file.get("format") {
                Some(v) => Format::from_str(v, true).map_err(|_| UsageError(format!("unknown format `{v}`")))?,
                None => d.format,
            },
        };
        let dim = pick(self.dim, &file, "N")?.unwrap_or(2);
        let q = pick(self.q, &file, "q")?.unwrap_or(2.5);
        let mu = pick(self.mu, &file, "mu")?.unwrap_or(1.0);
        let a = pick(self.a, &file, "a")?.or(d.a);
        let problem = ProblemParams::new(dim, q, mu, a.unwrap_or(1.0)).map_err(|e| UsageError(e.to_string()))?;
        let n = pick(self.n, &file, "n")?.unwrap_or(d.n);
        if n < 4 || n % 2 != 0 {
            return Err(UsageError(format!("n must be even and at least 4, got {n}")));
        }
        let cfg = RunConfig {
            subcommand: subcommand.to_string(),
            problem,
            a_from_a_star: a.is_none(),
            box_length: pick(self.box_length, &file, "L")?,
            n,
            tol: pick(self.tol, &file, "tol")?,
            max_iter: pick(self.max_iter, &file, "max-iter")?,
            tau: pick(self.tau, &file, "tau")?,
            epsilon: pick(self.epsilon, &file, "epsilon")?,
            seed_file: pick(self.seed_file.clone(), &file, "seed-file")?,
            out: pick(self.out.clone(), &file, "out")?,
            format,
            config: self.config.clone(),
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }
}

impl RunConfig {
    fn check_ranges(&self) -> Result<(), UsageError> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(UsageError(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("L", self.box_length)?;
        positive("tol", self.tol)?;
        positive("tau", self.tau)?;
        positive("epsilon", self.epsilon)?;
        if self.max_iter == Some(0) {
            return Err(UsageError("max-iter must be at least 1".into()));
        }
        if let Some(p) = &self.seed_file {
            if !p.is_file() {
                return Err(UsageError(format!("seed file {} does not exist", p.display())));
            }
        }
        if let Some(p) = &self.out {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(UsageError(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }
}
