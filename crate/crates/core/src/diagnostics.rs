//! Probability-integral-transform calibration checks and Cramér–von Mises
//! dominance tests with a block bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dominance_oracle::DominanceOrder;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("empty series")]
    Empty,
    #[error("samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("block length {block} invalid for {len} observations")]
    BlockLength { block: usize, len: usize },
    #[error("zero bootstrap replications")]
    NoReplications,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

pub const DECILES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitReport {
    pub pit: Vec<f64>,
    pub proportions: Vec<f64>,
    pub band_low: f64,
    pub band_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitBin {
    pub bin: usize,
    pub proportion: f64,
    pub band_low: f64,
    pub band_high: f64,
}

impl PitReport {
    /// Plot-ready histogram rows.
    pub fn bins(&self) -> Vec<PitBin> {
        self.proportions
            .iter()
            .enumerate()
            .map(|(bin, &proportion)| PitBin {
                bin,
                proportion,
                band_low: self.band_low,
                band_high: self.band_high,
            })
            .collect()
    }

    pub fn deciles_inside_band(&self) -> usize {
        self.proportions
            .iter()
            .filter(|&&p| p >= self.band_low && p <= self.band_high)
            .count()
    }
}

/// 95% normal-approximation band for a decile proportion over `t` draws.
pub fn pit_band(t: usize) -> (f64, f64) {
    let half = 1.959_963_984_540_054 * (0.1 * 0.9 / t as f64).sqrt();
    (0.1 - half, 0.1 + half)
}

/// Decile `floor(10 u)`, with `u = 1` in the top decile.
pub fn decile(u: f64) -> usize {
    ((u * DECILES as f64).floor() as usize).min(DECILES - 1)
}

/// PIT of each realization under its predictive CDF.
pub fn pit<I, F>(series: I) -> Result<PitReport, DiagnosticsError>
where
    I: IntoIterator<Item = (F, f64)>,
    F: Fn(f64) -> f64,
{
    let values: Vec<f64> = series.into_iter().map(|(cdf, x)| cdf(x)).collect();
    pit_report(values)
}

pub fn pit_report(values: Vec<f64>) -> Result<PitReport, DiagnosticsError> {
    if values.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    if let Some(i) = values.iter().position(|u| !u.is_finite()) {
        return Err(DiagnosticsError::NonFinite(i));
    }
    let pit: Vec<f64> = values.into_iter().map(|u| u.clamp(0.0, 1.0)).collect();
    let mut counts = [0usize; DECILES];
    for &u in &pit {
        counts[decile(u)] += 1;
    }
    let t = pit.len();
    let (band_low, band_high) = pit_band(t);
    Ok(PitReport {
        proportions: counts.iter().map(|&c| c as f64 / t as f64).collect(),
        pit,
        band_low,
        band_high,
    })
}

/// Kolmogorov distance between the empirical CDF of `u` and the uniform.
pub fn kolmogorov_uniform(u: &[f64]) -> f64 {
    let mut s = u.to_vec();
    s.sort_by(f64::total_cmp);
    let t = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / t - v).max(v - i as f64 / t))
        .fold(0.0, f64::max)
}

// ---- Cramér–von Mises dominance statistics ----------------------------------

/// Empirical dominance functional on a fixed sorted evaluation grid: the CDF
/// (first order) or `E[(z - Z)^+]` (second order).
fn functional_on_grid(order: DominanceOrder, sorted: &[f64], grid: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let t = sorted.len() as f64;
    let mut k = 0usize;
    let mut running = 0.0;
    for &z in grid {
        while k < sorted.len() && sorted[k] <= z {
            running += sorted[k];
            k += 1;
        }
        out.push(match order {
            DominanceOrder::First => k as f64 / t,
            DominanceOrder::Second => (z * k as f64 - running) / t,
        });
    }
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Pooled sorted sample points, duplicates kept, used as the uniform-weight
/// evaluation grid.
fn pooled_grid(enhanced: &[f64], market: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = enhanced.iter().chain(market).copied().collect();
    g.sort_by(f64::total_cmp);
    g
}

/// Difference `D(z)` of the enhanced minus market functional over `grid`.
fn difference(order: DominanceOrder, enhanced: &[f64], market: &[f64], grid: &[f64]) -> Vec<f64> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    functional_on_grid(order, &sorted_copy(enhanced), grid, &mut a);
    functional_on_grid(order, &sorted_copy(market), grid, &mut b);
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

/// `T * mean_z max(0, D(z))^2`; zero exactly when the enhanced sample
/// dominates the market sample empirically.
fn cvm_from_difference(t: usize, diff: &[f64], center: Option<&[f64]>) -> f64 {
    let sum: f64 = match center {
        None => diff.iter().map(|d| d.max(0.0).powi(2)).sum(),
        Some(c) => diff.iter().zip(c).map(|(d, c)| (d - c).max(0.0).powi(2)).sum(),
    };
    t as f64 * sum / diff.len() as f64
}

fn check_pair(enhanced: &[f64], market: &[f64]) -> Result<(), DiagnosticsError> {
    if enhanced.len() != market.len() {
        return Err(DiagnosticsError::LengthMismatch(enhanced.len(), market.len()));
    }
    if enhanced.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    if let Some(i) = enhanced.iter().chain(market).position(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFinite(i));
    }
    Ok(())
}

pub fn cvm_statistic(order: DominanceOrder, enhanced: &[f64], market: &[f64]) -> Result<f64, DiagnosticsError> {
    check_pair(enhanced, market)?;
    let grid = pooled_grid(enhanced, market);
    Ok(cvm_from_difference(enhanced.len(), &difference(order, enhanced, market, &grid), None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockScheme {
    /// Non-overlapping blocks anchored at the first observation; a trailing
    /// short block is drawn as it is.
    #[default]
    Fixed,
    /// Blocks of full length starting anywhere, wrapping around the end.
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub block_months: usize,
    pub replications: usize,
    pub seed: u64,
    pub scheme: BlockScheme,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            block_months: 12,
            replications: 999,
            seed: 0,
            scheme: BlockScheme::Fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdTestResult {
    pub order: u8,
    pub statistic: f64,
    pub p_value: f64,
    pub replications: usize,
    pub block_months: usize,
    pub seed: u64,
    pub scheme: BlockScheme,
}

/// Indices of one bootstrap resample of length `t`.
pub fn resample_indices<R: Rng>(t: usize, block: usize, scheme: BlockScheme, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    match scheme {
        BlockScheme::Fixed => {
            let blocks = t.div_ceil(block);
            while out.len() < t {
                let b = rng.random_range(0..blocks);
                let start = b * block;
                let end = (start + block).min(t);
                out.extend(start..end);
            }
        }
        BlockScheme::Circular => {
            while out.len() < t {
                let start = rng.random_range(0..t);
                out.extend((0..block).map(|k| (start + k) % t));
            }
        }
    }
    out.truncate(t);
}

/// Generator for replication `rep`: the seed picks the key, the replication
/// index picks the stream, so results do not depend on thread count.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Fraction of bootstrap statistics at or above `statistic`.
pub fn p_value(bootstrap: &[f64], statistic: f64) -> f64 {
    bootstrap.iter().filter(|&&b| b >= statistic).count() as f64 / bootstrap.len() as f64
}

/// Observed statistic and its bootstrap replications, in replication order.
/// Bootstrap difference processes are recentred by the observed difference
/// so that draws mimic the boundary of the null (equal distributions).
pub fn bootstrap_statistics(
    order: DominanceOrder,
    enhanced: &[f64],
    market: &[f64],
    config: &BootstrapConfig,
) -> Result<(f64, Vec<f64>), DiagnosticsError> {
    check_pair(enhanced, market)?;
    let t = enhanced.len();
    if config.block_months == 0 || config.block_months > t {
        return Err(DiagnosticsError::BlockLength {
            block: config.block_months,
            len: t,
        });
    }
    if config.replications == 0 {
        return Err(DiagnosticsError::NoReplications);
    }
    let grid = pooled_grid(enhanced, market);
    let observed = difference(order, enhanced, market, &grid);
    let statistic = cvm_from_difference(t, &observed, None);
    let boot: Vec<f64> = (0..config.replications)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()),
            |(idx, ys, xs, fy, fx), rep| {
                let mut rng = replication_rng(config.seed, rep as u64);
                resample_indices(t, config.block_months, config.scheme, &mut rng, idx);
                ys.clear();
                xs.clear();
                ys.extend(idx.iter().map(|&i| enhanced[i]));
                xs.extend(idx.iter().map(|&i| market[i]));
                ys.sort_by(f64::total_cmp);
                xs.sort_by(f64::total_cmp);
                functional_on_grid(order, ys, &grid, fy);
                functional_on_grid(order, xs, &grid, fx);
                let diff: Vec<f64> = fy.iter().zip(fx.iter()).map(|(a, b)| a - b).collect();
                cvm_from_difference(t, &diff, Some(&observed))
            },
        )
        .collect();
    Ok((statistic, boot))
}

/// Block bootstrap test of the null that the enhanced sample dominates the
/// market sample at the given order.
pub fn block_bootstrap_pvalue(
    order: DominanceOrder,
    enhanced: &[f64],
    market: &[f64],
    config: &BootstrapConfig,
) -> Result<SdTestResult, DiagnosticsError> {
    let (statistic, boot) = bootstrap_statistics(order, enhanced, market, config)?;
    Ok(SdTestResult {
        order: order.number(),
        statistic,
        p_value: p_value(&boot, statistic),
        replications: config.replications,
        block_months: config.block_months,
        seed: config.seed,
        scheme: config.scheme,
    })
}
