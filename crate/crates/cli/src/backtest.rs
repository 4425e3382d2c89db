//! `backtest`: realized and model-implied performance of the solved
//! layovers against the market alone.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sdarb::backtest::{backtest_record, payoff_curves, BacktestRecord, MomentReport};
use sdarb::state_probability::{calibrate_location_scale, simulate_model_moments, LogLevelLaw};
use sdarb::{FormulationTag, MarketSnapshot, Portfolio};

use crate::config::{GridSpec, RunConfig};
use crate::error::CliError;
use crate::io::{csv_bytes, jsonl, load_months, load_realized, read_jsonl, return_context, thread_pool, write_atomic};
use crate::solve::SolveRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub formulation: FormulationTag,
    pub spec: GridSpec,
    pub scale: i64,
    /// `realized` or `model_median`.
    pub section: String,
    /// `market` or `enhanced`.
    pub portfolio: String,
    pub observations: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skew: f64,
    pub sortino: f64,
    pub cer2: f64,
    pub cer3: f64,
    pub cer4: f64,
}

impl MomentRow {
    fn new(cfg: &RunConfig, scale: i64, section: &str, portfolio: &str, r: &MomentReport) -> Self {
        Self {
            formulation: cfg.formulation,
            spec: cfg.spec,
            scale,
            section: section.into(),
            portfolio: portfolio.into(),
            observations: r.observations,
            mean: r.mean,
            std_dev: r.std_dev,
            skew: r.skew,
            sortino: r.sortino,
            cer2: r.cer2,
            cer3: r.cer3,
            cer4: r.cer4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMonth {
    pub trade_date: NaiveDate,
    pub scale: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub scale: i64,
    /// Expiry level as a fraction of the index on the trade date.
    pub moneyness: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffPoint {
    pub trade_date: NaiveDate,
    pub scale: i64,
    pub realized_moneyness: f64,
    pub payoff: f64,
}

/// Evaluation points of the payoff curves: 0.85 to 1.10 of the index.
pub fn curve_grid() -> Vec<f64> {
    (0..=100).map(|k| 0.85 + 0.0025 * k as f64).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Field-wise medians across months.
fn median_report(reports: &[MomentReport]) -> MomentReport {
    let pick = |f: fn(&MomentReport) -> f64| median(reports.iter().map(f).collect());
    MomentReport {
        mean: pick(|r| r.mean),
        std_dev: pick(|r| r.std_dev),
        skew: pick(|r| r.skew),
        sortino: pick(|r| r.sortino),
        cer2: pick(|r| r.cer2),
        cer3: pick(|r| r.cer3),
        cer4: pick(|r| r.cer4),
        observations: reports.len(),
    }
}

struct MonthResult {
    record: BacktestRecord,
    model_market: MomentReport,
    model_enhanced: MomentReport,
}

fn month_seed(seed: u64, date: NaiveDate) -> u64 {
    seed ^ (date.num_days_from_ce() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn evaluate(cfg: &RunConfig, snap: &MarketSnapshot, pf: &Portfolio, scale: i64, realized: f64) -> Result<MonthResult, CliError> {
    let record = backtest_record(snap, pf, scale, realized, cfg.compounding, cfg.dividend_yield)?;
    let ctx = return_context(cfg, snap)?;
    let (location, scale_param) = calibrate_location_scale(snap, &cfg.calibration)?;
    let law = LogLevelLaw {
        location,
        scale: scale_param,
        model: cfg.return_model(),
    };
    // common random numbers for the two legs
    let seed = month_seed(cfg.seed, snap.trade_date);
    let model_market = simulate_model_moments(&law, &ctx, |_| 0.0, 0.0, cfg.model_draws, seed)?;
    let premium = pf.premium(snap);
    let model_enhanced = simulate_model_moments(&law, &ctx, |x| pf.payoff_at(snap, x), premium, cfg.model_draws, seed)?;
    Ok(MonthResult {
        record,
        model_market,
        model_enhanced,
    })
}

pub struct BacktestOutcome {
    pub records: Vec<BacktestRecord>,
    pub moments: Vec<MomentRow>,
    pub skipped: Vec<SkippedMonth>,
}

pub fn run(cfg: &RunConfig) -> Result<BacktestOutcome, CliError> {
    let months = load_months(cfg)?;
    let realized_path = cfg.require("realized", &cfg.realized)?;
    let realized = load_realized(&realized_path)?;
    let solutions_path = cfg.solutions_path();
    let solutions: Vec<SolveRecord> = read_jsonl(&solutions_path)?;
    let by_date: BTreeMap<NaiveDate, &MarketSnapshot> = months.iter().map(|s| (s.trade_date, s)).collect();

    let mut skipped = Vec::new();
    let mut tasks = Vec::new();
    let mut sorted: Vec<&SolveRecord> = solutions.iter().collect();
    sorted.sort_by_key(|r| (r.trade_date, r.scale));
    for rec in sorted {
        let skip = |reason: String| SkippedMonth {
            trade_date: rec.trade_date,
            scale: rec.scale,
            reason,
        };
        let Some(&snap) = by_date.get(&rec.trade_date) else {
            skipped.push(skip("no quotes for the trade date".into()));
            continue;
        };
        let Some(&level) = realized.get(&snap.expiry_date) else {
            skipped.push(skip(format!("no realized level for expiry {}", snap.expiry_date)));
            continue;
        };
        if rec.alpha.len() != snap.num_options() {
            skipped.push(skip("portfolio does not match the quotes".into()));
            continue;
        }
        // a month without a solved portfolio holds the market alone
        let pf = if rec.has_portfolio() {
            rec.portfolio()
        } else {
            log::warn!("{} scale {}: no solved portfolio, holding the market alone", rec.trade_date, rec.scale);
            Portfolio::zero(snap.num_options())
        };
        tasks.push((snap, pf, rec.scale, level));
    }
    for s in &skipped {
        log::warn!("skipping {} scale {}: {}", s.trade_date, s.scale, s.reason);
    }

    let results: Vec<Result<MonthResult, CliError>> = thread_pool(cfg)?
        .install(|| tasks.par_iter().map(|(snap, pf, scale, level)| evaluate(cfg, snap, pf, *scale, *level)).collect());
    let mut done = Vec::new();
    for ((snap, pf, scale, _), r) in tasks.iter().zip(results) {
        match r {
            Ok(m) => done.push((*snap, pf, m)),
            Err(e) => skipped.push(SkippedMonth {
                trade_date: snap.trade_date,
                scale: *scale,
                reason: e.to_string(),
            }),
        }
    }
    skipped.sort_by(|a, b| (a.trade_date, a.scale).cmp(&(b.trade_date, b.scale)));

    let mut moments = Vec::new();
    let mut curves = Vec::new();
    let mut points = Vec::new();
    let scales: std::collections::BTreeSet<i64> = done.iter().map(|(_, _, m)| m.record.scale).collect();
    for scale in scales {
        let mine: Vec<&(&MarketSnapshot, &Portfolio, MonthResult)> =
            done.iter().filter(|(_, _, m)| m.record.scale == scale).collect();
        let market: Vec<f64> = mine.iter().map(|(_, _, m)| m.record.market_excess_return).collect();
        let enhanced: Vec<f64> = mine.iter().map(|(_, _, m)| m.record.enhanced_excess_return).collect();
        moments.push(MomentRow::new(cfg, scale, "realized", "market", &MomentReport::from_monthly(&market)?));
        moments.push(MomentRow::new(cfg, scale, "realized", "enhanced", &MomentReport::from_monthly(&enhanced)?));
        let mm: Vec<MomentReport> = mine.iter().map(|(_, _, m)| m.model_market).collect();
        let me: Vec<MomentReport> = mine.iter().map(|(_, _, m)| m.model_enhanced).collect();
        moments.push(MomentRow::new(cfg, scale, "model_median", "market", &median_report(&mm)));
        moments.push(MomentRow::new(cfg, scale, "model_median", "enhanced", &median_report(&me)));

        let items: Vec<(&MarketSnapshot, &Portfolio)> = mine.iter().map(|(s, pf, _)| (*s, *pf)).collect();
        let c = payoff_curves(&items, &curve_grid())?;
        for (k, &g) in c.grid.iter().enumerate() {
            curves.push(CurveRow {
                scale,
                moneyness: g,
                q1: c.q1[k],
                median: c.median[k],
                q3: c.q3[k],
            });
        }
        for (s, _, m) in &mine {
            points.push(PayoffPoint {
                trade_date: s.trade_date,
                scale,
                realized_moneyness: m.record.realized_index / s.index_level,
                payoff: m.record.realized_layover_payoff / s.index_level,
            });
        }
    }
    let records: Vec<BacktestRecord> = done.into_iter().map(|(_, _, m)| m.record).collect();
    let tag = cfg.formulation.as_str();
    let out = |name: &str| cfg.output.join(format!("{name}_{tag}.{}", if name == "backtest" { "jsonl" } else { "csv" }));
    write_atomic(&out("backtest"), &jsonl(&records))?;
    write_atomic(&out("backtest_moments"), &csv_bytes(&moments))?;
    write_atomic(&out("backtest_skipped"), &csv_bytes(&skipped))?;
    write_atomic(&out("payoff_curves"), &csv_bytes(&curves))?;
    write_atomic(&out("payoff_points"), &csv_bytes(&points))?;
    log::info!("backtested {} record(s), skipped {}", records.len(), skipped.len());
    Ok(BacktestOutcome {
        records,
        moments,
        skipped,
    })
}
