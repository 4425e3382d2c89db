//! Atomic file output and input loading shared by the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use sdarb::backtest::{calendar_tau, impute_forward, ReturnContext};
use sdarb::market_data::{load_snapshots, read_exclusions};
use sdarb::state_probability::build_grid;
use sdarb::{MarketSnapshot, StateGrid};

use crate::config::RunConfig;
use crate::error::CliError;

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Input {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Snapshots in trade-date order, exclusions removed.
pub fn load_months(cfg: &RunConfig) -> Result<Vec<MarketSnapshot>, CliError> {
    let quotes = cfg.require("quotes", &cfg.quotes)?;
    let observables = cfg.require("observables", &cfg.observables)?;
    let exclusions = match &cfg.exclusions {
        Some(_) => {
            let p = cfg.require("exclusions", &cfg.exclusions)?;
            read_exclusions(std::fs::File::open(&p).map_err(|e| CliError::io(&p, e))?)?
        }
        None => Default::default(),
    };
    let snaps = load_snapshots(&quotes, &observables, &cfg.moneyness, &exclusions)?;
    log::info!("loaded {} month(s), {} excluded date(s)", snaps.len(), exclusions.len());
    Ok(snaps)
}

#[derive(Debug, Deserialize)]
struct RealizedRow {
    expiry_date: NaiveDate,
    index_level: f64,
}

/// Realized index level at each expiry date.
pub fn load_realized(path: &Path) -> Result<BTreeMap<NaiveDate, f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = BTreeMap::new();
    for rec in rdr.deserialize::<RealizedRow>() {
        let row = rec.map_err(|e| CliError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if !(row.index_level > 0.0) {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                message: format!("nonpositive realized level on {}", row.expiry_date),
            });
        }
        if out.insert(row.expiry_date, row.index_level).is_some() {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                message: format!("duplicate realized level for {}", row.expiry_date),
            });
        }
    }
    Ok(out)
}

pub fn state_grid(cfg: &RunConfig, snap: &MarketSnapshot) -> Result<StateGrid, CliError> {
    Ok(build_grid(snap, &cfg.calibration, &cfg.return_model())?)
}

/// Return context of one month. Without a put-call pair at a common strike
/// the forward falls back to the index grown at the risk-free rate.
pub fn return_context(cfg: &RunConfig, snap: &MarketSnapshot) -> Result<ReturnContext, CliError> {
    let forward = match impute_forward(snap, cfg.compounding) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("{}: {e}; using the index grown at the risk-free rate", snap.trade_date);
            snap.index_level * cfg.compounding.growth(snap.risk_free_rate, calendar_tau(snap))
        }
    };
    Ok(ReturnContext::new(forward, snap.risk_free_rate, calendar_tau(snap), cfg.compounding)?)
}

pub fn thread_pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

/// `date_scale_formulation` stem shared by per-task files.
pub fn task_stem(date: NaiveDate, scale: i64, cfg: &RunConfig) -> String {
    format!("{date}_{scale}_{}", cfg.formulation.as_str())
}

pub fn output_file(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.join(name)
}
