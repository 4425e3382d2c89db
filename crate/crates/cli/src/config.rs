//! Run configuration: defaults, a flat `key = value` file, then flag
//! overrides, applied in that order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use sdarb::backtest::Compounding;
use sdarb::diagnostics::{BlockScheme, BootstrapConfig};
use sdarb::solver::{Branching, NodeSelection};
use sdarb::state_probability::ReturnModel;
use sdarb::{CalibrationParams, FormulationTag, MoneynessFilter, SgtParams, SolverConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    Symmetric,
    Skewed,
}

impl GridSpec {
    pub fn as_str(self) -> &'static str {
        match self {
            GridSpec::Symmetric => "symmetric",
            GridSpec::Skewed => "skewed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub quotes: Option<PathBuf>,
    pub observables: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
    /// CSV of `expiry_date,index_level` realizations.
    pub realized: Option<PathBuf>,
    /// Solve output consumed by `backtest`; defaults to the file `solve`
    /// writes into the output directory.
    pub solutions: Option<PathBuf>,
    pub output: PathBuf,
    pub spec: GridSpec,
    pub sgt: SgtParams,
    pub calibration: CalibrationParams,
    pub moneyness: MoneynessFilter,
    pub scales: Vec<i64>,
    pub formulation: FormulationTag,
    pub zero_payoff_outside: bool,
    pub solver: SolverConfig,
    /// Premium materiality threshold as a fraction of the market investment.
    pub threshold: f64,
    pub seed: u64,
    pub compounding: Compounding,
    pub dividend_yield: f64,
    pub bootstrap: BootstrapConfig,
    /// Simulated expiry levels per month for model-implied moments.
    pub model_draws: usize,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// External MPS backend for a per-problem cross-check.
    pub backend: Option<PathBuf>,
    pub backend_args: Vec<String>,
    pub cross_check_tol: f64,
    pub verify_instances: usize,
    pub verify_sweep: usize,
    pub lattice_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            quotes: None,
            observables: None,
            exclusions: None,
            realized: None,
            solutions: None,
            output: PathBuf::from("out"),
            spec: GridSpec::Symmetric,
            sgt: SgtParams::default(),
            calibration: CalibrationParams::default(),
            moneyness: MoneynessFilter::default(),
            scales: vec![1, 10, 100, 1000],
            formulation: FormulationTag::Lp,
            zero_payoff_outside: true,
            solver: SolverConfig::default(),
            threshold: 0.001,
            seed: 0,
            compounding: Compounding::Continuous,
            dividend_yield: 0.0,
            bootstrap: BootstrapConfig::default(),
            model_draws: 20_000,
            jobs: 0,
            backend: None,
            backend_args: Vec::new(),
            cross_check_tol: 1e-6,
            verify_instances: 200,
            verify_sweep: 50,
            lattice_step: 0.25,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment. Later duplicates win.
pub fn parse_flat(text: &str, source: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Input {
            path: source.to_path_buf(),
            message: format!("line {}: expected key = value", i + 1),
        })?;
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = normalize_key(key);
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        match key.as_str() {
            "quotes" => self.quotes = path(),
            "observables" => self.observables = path(),
            "exclusions" => self.exclusions = path(),
            "realized" => self.realized = path(),
            "solutions" => self.solutions = path(),
            "output" => self.output = PathBuf::from(v),
            "spec" => {
                self.spec = match v.to_ascii_lowercase().as_str() {
                    "symmetric" => GridSpec::Symmetric,
                    "skewed" => GridSpec::Skewed,
                    _ => return Err(CliError::Config(format!("spec: expected symmetric or skewed, got {v:?}"))),
                }
            }
            "mrp" => self.calibration.market_risk_premium = parse(&key, v)?,
            "vrp" => self.calibration.vol_risk_premium = parse(&key, v)?,
            "trading_days" => self.calibration.trading_days_per_year = parse(&key, v)?,
            "grid_tick" => self.calibration.grid_tick = parse(&key, v)?,
            "sgt_shape" => self.sgt.shape = parse(&key, v)?,
            "sgt_df" => self.sgt.degrees_of_freedom = parse(&key, v)?,
            "sgt_asymmetry" => self.sgt.asymmetry = parse(&key, v)?,
            "moneyness_lower" => self.moneyness.lower = parse(&key, v)?,
            "moneyness_upper" => self.moneyness.upper = parse(&key, v)?,
            "scale" | "scales" => self.scales = parse_list(&key, v)?,
            "formulation" => self.formulation = v.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            "zero_payoff_outside" => self.zero_payoff_outside = parse_bool(&key, v)?,
            "time_limit" => self.solver.time_limit_secs = parse(&key, v)?,
            "mip_gap" => self.solver.mip_gap = parse(&key, v)?,
            "feasibility_tol" => self.solver.feasibility_tol = parse(&key, v)?,
            "optimality_tol" => self.solver.optimality_tol = parse(&key, v)?,
            "node_selection" => {
                self.solver.node_selection = match v {
                    "best_bound" => NodeSelection::BestBound,
                    "depth_first" => NodeSelection::DepthFirst,
                    _ => return Err(CliError::Config(format!("node_selection: unknown {v:?}"))),
                }
            }
            "branching" => {
                self.solver.branching = match v {
                    "most_fractional" => Branching::MostFractional,
                    "first_fractional" => Branching::FirstFractional,
                    _ => return Err(CliError::Config(format!("branching: unknown {v:?}"))),
                }
            }
            "threshold" => self.threshold = parse(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "compounding" => {
                self.compounding = match v {
                    "continuous" => Compounding::Continuous,
                    "simple" => Compounding::Simple,
                    _ => return Err(CliError::Config(format!("compounding: unknown {v:?}"))),
                }
            }
            "dividend_yield" => self.dividend_yield = parse(&key, v)?,
            "block_months" => self.bootstrap.block_months = parse(&key, v)?,
            "replications" => self.bootstrap.replications = parse(&key, v)?,
            "block_scheme" => {
                self.bootstrap.scheme = match v {
                    "fixed" => BlockScheme::Fixed,
                    "circular" => BlockScheme::Circular,
                    _ => return Err(CliError::Config(format!("block_scheme: unknown {v:?}"))),
                }
            }
            "model_draws" => self.model_draws = parse(&key, v)?,
            "jobs" => self.jobs = parse(&key, v)?,
            "backend" => self.backend = if v.is_empty() { None } else { path() },
            "backend_args" => self.backend_args = v.split_whitespace().map(String::from).collect(),
            "cross_check_tol" => self.cross_check_tol = parse(&key, v)?,
            "verify_instances" => self.verify_instances = parse(&key, v)?,
            "verify_sweep" => self.verify_sweep = parse(&key, v)?,
            "lattice_step" => self.lattice_step = parse(&key, v)?,
            _ => return Err(CliError::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            for (k, v) in parse_flat(&text, p)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.solver.seed = cfg.seed;
        cfg.bootstrap.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.threshold >= 0.0) {
            return Err(CliError::Config(format!("threshold must be nonnegative, got {}", self.threshold)));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| s <= 0) {
            return Err(CliError::Config(format!("depth scales must be positive, got {:?}", self.scales)));
        }
        let mut sorted = self.scales.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.scales.len() {
            return Err(CliError::Config(format!("duplicate depth scales in {:?}", self.scales)));
        }
        MoneynessFilter::new(self.moneyness.lower, self.moneyness.upper)?;
        self.calibration.validate()?;
        if self.spec == GridSpec::Skewed {
            sdarb::state_probability::Sgt::new(&self.sgt)?;
        }
        self.solver.validate()?;
        if self.bootstrap.block_months == 0 || self.bootstrap.replications == 0 {
            return Err(CliError::Config("block_months and replications must be positive".into()));
        }
        if self.model_draws == 0 {
            return Err(CliError::Config("model_draws must be positive".into()));
        }
        if !(self.lattice_step > 0.0) {
            return Err(CliError::Config("lattice_step must be positive".into()));
        }
        Ok(())
    }

    pub fn return_model(&self) -> ReturnModel {
        match self.spec {
            GridSpec::Symmetric => ReturnModel::Lognormal,
            GridSpec::Skewed => ReturnModel::Skewed(self.sgt),
        }
    }

    /// Fails unless `path` is set and exists.
    pub fn require(&self, name: &str, path: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let p = path
            .clone()
            .ok_or_else(|| CliError::Config(format!("missing required path `{name}`")))?;
        if !p.exists() {
            return Err(CliError::Config(format!("{name} path {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn solutions_path(&self) -> PathBuf {
        self.solutions
            .clone()
            .unwrap_or_else(|| self.output.join(format!("solve_{}.jsonl", self.formulation.as_str())))
    }
}
