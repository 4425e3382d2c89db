//! `diagnose`: PIT calibration of the state-probability model and block
//! bootstrap dominance tests of the backtested returns.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use sdarb::backtest::BacktestRecord;
use sdarb::diagnostics::{block_bootstrap_pvalue, kolmogorov_uniform, pit_report, BlockScheme, PitBin};
use sdarb::dominance_oracle::DominanceOrder;
use sdarb::state_probability::{calibrate_location_scale, LogLevelLaw};
use sdarb::FormulationTag;

use crate::config::{GridSpec, RunConfig};
use crate::error::CliError;
use crate::io::{csv_bytes, load_months, load_realized, read_jsonl, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitRow {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub realized_index: f64,
    pub pit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdTestRow {
    pub formulation: FormulationTag,
    pub spec: GridSpec,
    pub scale: i64,
    pub months: usize,
    pub order: u8,
    pub statistic: f64,
    pub p_value: f64,
    pub replications: usize,
    pub block_months: usize,
    pub seed: u64,
    pub scheme: BlockScheme,
}

pub struct DiagnoseOutcome {
    pub pit: Vec<PitRow>,
    pub bins: Vec<PitBin>,
    pub kolmogorov: f64,
    pub tests: Vec<SdTestRow>,
}

pub fn run(cfg: &RunConfig) -> Result<DiagnoseOutcome, CliError> {
    let months = load_months(cfg)?;
    let realized = load_realized(&cfg.require("realized", &cfg.realized)?)?;
    let mut pit = Vec::new();
    for snap in &months {
        let Some(&level) = realized.get(&snap.expiry_date) else {
            log::warn!("{}: no realized level for expiry {}, left out of the PIT", snap.trade_date, snap.expiry_date);
            continue;
        };
        let (location, scale) = calibrate_location_scale(snap, &cfg.calibration)?;
        let law = LogLevelLaw {
            location,
            scale,
            model: cfg.return_model(),
        };
        pit.push(PitRow {
            trade_date: snap.trade_date,
            expiry_date: snap.expiry_date,
            realized_index: level,
            pit: law.cdf(level)?,
        });
    }
    let report = pit_report(pit.iter().map(|r| r.pit).collect())?;
    let kolmogorov = kolmogorov_uniform(&report.pit);
    log::info!(
        "PIT over {} month(s): {} of 10 deciles inside [{:.3}, {:.3}], Kolmogorov distance {:.4}",
        pit.len(),
        report.deciles_inside_band(),
        report.band_low,
        report.band_high,
        kolmogorov
    );
    let spec = cfg.spec.as_str();
    write_atomic(&cfg.output.join(format!("pit_{spec}.csv")), &csv_bytes(&pit))?;
    let bins = report.bins();
    write_atomic(&cfg.output.join(format!("pit_bins_{spec}.csv")), &csv_bytes(&bins))?;

    let tag = cfg.formulation.as_str();
    let backtest_path = cfg.output.join(format!("backtest_{tag}.jsonl"));
    let mut tests = Vec::new();
    if backtest_path.exists() {
        let records: Vec<BacktestRecord> = read_jsonl(&backtest_path)?;
        let mut by_scale: BTreeMap<i64, Vec<&BacktestRecord>> = BTreeMap::new();
        for r in &records {
            by_scale.entry(r.scale).or_default().push(r);
        }
        for (scale, mut recs) in by_scale {
            recs.sort_by_key(|r| r.trade_date);
            let enhanced: Vec<f64> = recs.iter().map(|r| r.enhanced_excess_return).collect();
            let market: Vec<f64> = recs.iter().map(|r| r.market_excess_return).collect();
            for order in [DominanceOrder::First, DominanceOrder::Second] {
                let result = block_bootstrap_pvalue(order, &enhanced, &market, &cfg.bootstrap)?;
                log::info!("scale {scale}, order {}: p-value {:.3}", order.number(), result.p_value);
                tests.push(SdTestRow {
                    formulation: cfg.formulation,
                    spec: cfg.spec,
                    scale,
                    months: recs.len(),
                    order: result.order,
                    statistic: result.statistic,
                    p_value: result.p_value,
                    replications: result.replications,
                    block_months: result.block_months,
                    seed: result.seed,
                    scheme: result.scheme,
                });
            }
        }
        write_atomic(&cfg.output.join(format!("sd_tests_{tag}.csv")), &csv_bytes(&tests))?;
    } else {
        log::warn!("{} not found; run backtest first for dominance tests", backtest_path.display());
    }
    Ok(DiagnoseOutcome {
        pit,
        bins,
        kolmogorov,
        tests,
    })
}
