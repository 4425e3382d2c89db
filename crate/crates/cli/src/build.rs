//! `build`: one MPS file plus metadata per (month, depth scale).

use rayon::prelude::*;
use serde_json::json;

use sdarb::formulation::{build_problem, formulation_stats};
use sdarb::solver::write_problem_mps;
use sdarb::MarketSnapshot;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{load_months, state_grid, task_stem, thread_pool, write_atomic};

fn build_one(cfg: &RunConfig, snap: &MarketSnapshot, scale: i64) -> Result<String, CliError> {
    let grid = state_grid(cfg, snap)?;
    let problem = build_problem(snap, &grid, scale, cfg.zero_payoff_outside, cfg.formulation)?;
    let stem = task_stem(snap.trade_date, scale, cfg);
    let mut mps = Vec::new();
    write_problem_mps(&problem, &mut mps)?;
    write_atomic(&cfg.output.join(format!("{stem}.mps")), &mps)?;
    let stats = formulation_stats(&problem);
    let meta = json!({
        "trade_date": snap.trade_date,
        "expiry_date": snap.expiry_date,
        "scale": scale,
        "formulation": cfg.formulation,
        "spec": cfg.spec,
        "index_level": snap.index_level,
        "rows": stats.rows,
        "variables": stats.variables,
        "nonzeros": stats.nonzeros,
        "layout": problem.sidecar(),
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    write_atomic(&cfg.output.join(format!("{stem}.json")), text.as_bytes())?;
    Ok(stem)
}

/// Returns the stems written, in (date, scale) order.
pub fn run(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let months = load_months(cfg)?;
    let tasks: Vec<(&MarketSnapshot, i64)> = months
        .iter()
        .flat_map(|s| cfg.scales.iter().map(move |&k| (s, k)))
        .collect();
    let results: Vec<Result<String, CliError>> =
        thread_pool(cfg)?.install(|| tasks.par_iter().map(|&(s, k)| build_one(cfg, s, k)).collect());
    let mut written = Vec::new();
    let mut failures = 0;
    for ((snap, scale), r) in tasks.iter().zip(results) {
        match r {
            Ok(stem) => written.push(stem),
            Err(e) => {
                failures += 1;
                log::error!("{} scale {scale}: {e}", snap.trade_date);
            }
        }
    }
    log::info!("built {} problem(s), {failures} failure(s)", written.len());
    if failures > 0 {
        return Err(CliError::TaskFailures { count: failures });
    }
    Ok(written)
}
