//! `solve`: one record per (month, depth scale) and a per-scale summary.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sdarb::backtest::greeks;
use sdarb::formulation::build_problem;
use sdarb::solver::{cross_check, solve_problem, SolveResult, SolveStatus, SolverError};
use sdarb::{FormulationTag, MarketSnapshot, OptionKind, Portfolio};
use sdarb_lp::ExternalSolver;

use crate::config::{GridSpec, RunConfig};
use crate::error::CliError;
use crate::io::{csv_bytes, jsonl, load_months, return_context, state_grid, task_stem, thread_pool, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub trade_date: NaiveDate,
    pub scale: i64,
    pub formulation: FormulationTag,
    pub spec: GridSpec,
    pub status: SolveStatus,
    /// Premium in index points; absent without a portfolio.
    pub premium: Option<f64>,
    pub bound: Option<f64>,
    /// Market investment: the discounted forward.
    pub investment: f64,
    /// Option values at the traded prices as fractions of the investment.
    pub calls_bought: f64,
    pub calls_written: f64,
    pub puts_bought: f64,
    pub puts_written: f64,
    /// Portfolio Greeks divided by the depth scale.
    pub delta: f64,
    pub vega: f64,
    pub iterations: usize,
    pub nodes: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Premium found by the external backend, when one is configured.
    pub external_premium: Option<f64>,
    pub error: Option<String>,
    /// True when the error is a disagreement with the external backend.
    #[serde(default)]
    pub disagreement: bool,
}

impl SolveRecord {
    pub fn portfolio(&self) -> Portfolio {
        Portfolio {
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
        }
    }

    pub fn has_portfolio(&self) -> bool {
        self.status.has_portfolio() && self.error.is_none()
    }

    pub fn premium_fraction(&self) -> f64 {
        self.premium.unwrap_or(0.0) / self.investment
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn failed(cfg: &RunConfig, snap: &MarketSnapshot, scale: i64, investment: f64, message: String) -> SolveRecord {
    let m = snap.num_options();
    SolveRecord {
        trade_date: snap.trade_date,
        scale,
        formulation: cfg.formulation,
        spec: cfg.spec,
        status: SolveStatus::Error,
        premium: None,
        bound: None,
        investment,
        calls_bought: 0.0,
        calls_written: 0.0,
        puts_bought: 0.0,
        puts_written: 0.0,
        delta: 0.0,
        vega: 0.0,
        iterations: 0,
        nodes: 0,
        alpha: vec![0.0; m],
        beta: vec![0.0; m],
        external_premium: None,
        error: Some(message),
        disagreement: false,
    }
}

/// Solves one task. Validation problems (grid, formulation) are returned
/// as errors; solver problems are recorded in the returned record.
pub fn solve_one(cfg: &RunConfig, snap: &MarketSnapshot, scale: i64) -> Result<SolveRecord, CliError> {
    let ctx = return_context(cfg, snap)?;
    let investment = ctx.investment();
    let grid = state_grid(cfg, snap)?;
    let problem = build_problem(snap, &grid, scale, cfg.zero_payoff_outside, cfg.formulation)?;
    let (result, external): (SolveResult, Option<SolveResult>) = match &cfg.backend {
        None => match solve_problem(&problem, &cfg.solver) {
            Ok(r) => (r, None),
            Err(e) => return Ok(failed(cfg, snap, scale, investment, e.to_string())),
        },
        Some(cmd) => {
            let backend = ExternalSolver {
                command: cmd.clone(),
                args: cfg.backend_args.clone(),
                workdir: None,
            };
            match cross_check(&problem, &backend, &cfg.solver, cfg.cross_check_tol) {
                Ok(c) => (c.internal, Some(c.external)),
                Err(e) => {
                    let mut rec = failed(cfg, snap, scale, investment, e.to_string());
                    rec.disagreement = matches!(e, SolverError::CrossCheck { .. });
                    return Ok(rec);
                }
            }
        }
    };
    let mut rec = failed(cfg, snap, scale, investment, String::new());
    rec.status = result.status;
    rec.error = None;
    rec.iterations = result.iterations;
    rec.nodes = result.nodes;
    rec.bound = finite(result.bound);
    rec.external_premium = external.and_then(|r| finite(r.premium));
    if !result.status.has_portfolio() {
        rec.error = Some(format!("solver status {:?}", result.status));
        return Ok(rec);
    }
    rec.premium = finite(result.premium);
    let pf = result.portfolio();
    for (i, q) in snap.quotes.iter().enumerate() {
        let bought = pf.alpha[i] * q.ask / investment;
        let written = pf.beta[i] * q.bid / investment;
        match q.kind {
            OptionKind::Call => {
                rec.calls_bought += bought;
                rec.calls_written += written;
            }
            OptionKind::Put => {
                rec.puts_bought += bought;
                rec.puts_written += written;
            }
        }
    }
    let g = greeks(snap, &pf, scale as f64, cfg.dividend_yield)?;
    if g.fallbacks > 0 {
        log::debug!("{} scale {scale}: {} option(s) priced with the volatility index", snap.trade_date, g.fallbacks);
    }
    rec.delta = g.delta;
    rec.vega = g.vega;
    rec.alpha = pf.alpha;
    rec.beta = pf.beta;
    Ok(rec)
}

/// One row per depth scale; the row layout of the results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub formulation: FormulationTag,
    pub spec: GridSpec,
    pub scale: i64,
    pub months: usize,
    pub solved: usize,
    pub failed: usize,
    pub above_threshold: usize,
    /// Percentage of months whose premium exceeds the threshold.
    pub pct_above_threshold: f64,
    /// Average option values over solved months, percent of investment.
    pub calls_bought_pct: f64,
    pub calls_written_pct: f64,
    pub puts_bought_pct: f64,
    pub puts_written_pct: f64,
    pub avg_delta: f64,
    pub avg_vega: f64,
}

/// Folds records into per-scale rows. Records are put in (scale, date)
/// order first, so the result does not depend on the input order.
pub fn summarize(records: &[SolveRecord], threshold: f64) -> Vec<SummaryRow> {
    let mut sorted: Vec<&SolveRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.scale, r.trade_date));
    let mut rows = Vec::new();
    for chunk in sorted.chunk_by(|a, b| a.scale == b.scale) {
        let solved: Vec<&&SolveRecord> = chunk.iter().filter(|r| r.has_portfolio()).collect();
        let above = solved.iter().filter(|r| r.premium_fraction() > threshold).count();
        let avg = |f: &dyn Fn(&SolveRecord) -> f64| {
            if solved.is_empty() {
                0.0
            } else {
                solved.iter().map(|r| f(r)).sum::<f64>() / solved.len() as f64
            }
        };
        rows.push(SummaryRow {
            formulation: chunk[0].formulation,
            spec: chunk[0].spec,
            scale: chunk[0].scale,
            months: chunk.len(),
            solved: solved.len(),
            failed: chunk.len() - solved.len(),
            above_threshold: above,
            pct_above_threshold: 100.0 * above as f64 / chunk.len() as f64,
            calls_bought_pct: 100.0 * avg(&|r| r.calls_bought),
            calls_written_pct: 100.0 * avg(&|r| r.calls_written),
            puts_bought_pct: 100.0 * avg(&|r| r.puts_bought),
            puts_written_pct: 100.0 * avg(&|r| r.puts_written),
            avg_delta: avg(&|r| r.delta),
            avg_vega: avg(&|r| r.vega),
        });
    }
    rows
}

pub struct SolveOutcome {
    pub records: Vec<SolveRecord>,
    pub summary: Vec<SummaryRow>,
}

pub fn run(cfg: &RunConfig) -> Result<SolveOutcome, CliError> {
    let months = load_months(cfg)?;
    let tag = cfg.formulation.as_str();
    let part_dir = cfg.output.join(format!("solve_{tag}"));
    let tasks: Vec<(&MarketSnapshot, i64)> = months
        .iter()
        .flat_map(|s| cfg.scales.iter().map(move |&k| (s, k)))
        .collect();
    let results: Vec<Result<SolveRecord, CliError>> = thread_pool(cfg)?.install(|| {
        tasks
            .par_iter()
            .map(|&(snap, scale)| {
                let rec = solve_one(cfg, snap, scale)?;
                let line = serde_json::to_string(&rec).expect("record serializes") + "\n";
                write_atomic(&part_dir.join(format!("{}.json", task_stem(snap.trade_date, scale, cfg))), line.as_bytes())?;
                Ok(rec)
            })
            .collect()
    });
    // barrier: every task has finished before anything is aggregated
    let mut records = Vec::with_capacity(results.len());
    let mut invalid = 0;
    for ((snap, scale), r) in tasks.iter().zip(results) {
        match r {
            Ok(rec) => {
                if let Some(e) = &rec.error {
                    log::error!("{} scale {scale}: {e}", snap.trade_date);
                }
                records.push(rec);
            }
            Err(e) => {
                invalid += 1;
                log::error!("{} scale {scale}: {e}", snap.trade_date);
            }
        }
    }
    records.sort_by_key(|r| (r.trade_date, r.scale));
    let summary = summarize(&records, cfg.threshold);
    write_atomic(&cfg.output.join(format!("solve_{tag}.jsonl")), &jsonl(&records))?;
    write_atomic(&cfg.output.join(format!("solve_summary_{tag}.csv")), &csv_bytes(&summary))?;
    for row in &summary {
        log::info!(
            "scale {}: {}/{} month(s) above threshold ({:.1}%), {} failed",
            row.scale,
            row.above_threshold,
            row.months,
            row.pct_above_threshold,
            row.failed
        );
    }
    let disagreements = records.iter().filter(|r| r.disagreement).count();
    let solver_failures = records.iter().filter(|r| r.error.is_some()).count();
    if invalid > 0 {
        return Err(CliError::TaskFailures { count: invalid });
    }
    if disagreements > 0 {
        return Err(CliError::Disagreement(format!(
            "{disagreements} problem(s) disagree with the external backend"
        )));
    }
    if solver_failures > 0 {
        return Err(CliError::Solver(format!("{solver_failures} problem(s) failed")));
    }
    Ok(SolveOutcome { records, summary })
}
