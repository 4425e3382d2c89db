//! Forward prices, excess returns, performance moments, Greeks and payoff
//! curves of layover portfolios.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::Portfolio;
use crate::market_data::{MarketSnapshot, OptionKind, OptionQuote};
use crate::state_probability::std_normal_cdf;

#[derive(Debug, Error, PartialEq)]
pub enum BacktestError {
    #[error("no strike quoted with both a put and a call")]
    NoParityPair,
    #[error("nonpositive forward price {0}")]
    NonpositiveForward(f64),
    #[error("sample too small: {0} observations")]
    SampleTooSmall(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty evaluation grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Compounding {
    #[default]
    Continuous,
    Simple,
}

impl Compounding {
    /// Gross risk-free growth over `tau` years.
    pub fn growth(self, rate: f64, tau: f64) -> f64 {
        match self {
            Compounding::Continuous => (rate * tau).exp(),
            Compounding::Simple => 1.0 + rate * tau,
        }
    }
}

/// Calendar-year fraction between trade and expiry dates.
pub fn calendar_tau(snapshot: &MarketSnapshot) -> f64 {
    snapshot.calendar_days_to_expiry() as f64 / 365.0
}

/// Put-call parity forward at the strike nearest the index that has both a
/// put and a call: `F = K + growth * (C_mid - P_mid)`.
pub fn impute_forward(snapshot: &MarketSnapshot, compounding: Compounding) -> Result<f64, BacktestError> {
    let growth = compounding.growth(snapshot.risk_free_rate, calendar_tau(snapshot));
    let mut best: Option<(f64, f64, f64)> = None;
    for w in snapshot.quotes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.strike == b.strike && a.kind == OptionKind::Put && b.kind == OptionKind::Call {
            let dist = (a.strike - snapshot.index_level).abs();
            // ties go to the lower strike, which comes first
            if best.is_none_or(|(d, _, _)| dist < d) {
                best = Some((dist, a.strike, b.mid() - a.mid()));
            }
        }
    }
    let (_, k, gap) = best.ok_or(BacktestError::NoParityPair)?;
    let f = k + growth * gap;
    if !(f > 0.0) {
        return Err(BacktestError::NonpositiveForward(f));
    }
    Ok(f)
}

/// Everything needed to turn an expiry level into monthly excess returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnContext {
    pub forward: f64,
    pub rate: f64,
    pub tau: f64,
    pub compounding: Compounding,
}

impl ReturnContext {
    pub fn new(forward: f64, rate: f64, tau: f64, compounding: Compounding) -> Result<Self, BacktestError> {
        if !(forward > 0.0) {
            return Err(BacktestError::NonpositiveForward(forward));
        }
        Ok(Self {
            forward,
            rate,
            tau,
            compounding,
        })
    }

    pub fn growth(&self) -> f64 {
        self.compounding.growth(self.rate, self.tau)
    }

    /// Market investment: the discounted forward price.
    pub fn investment(&self) -> f64 {
        self.forward / self.growth()
    }

    /// Gross return of buying the index at the discounted forward, less the
    /// gross risk-free return.
    pub fn market_excess(&self, realized: f64) -> f64 {
        realized / self.investment() - self.growth()
    }

    /// Market excess return plus the layover payoff and the accrued premium,
    /// both per unit of market investment.
    pub fn enhanced_excess(&self, realized: f64, layover_payoff: f64, premium: f64) -> f64 {
        self.market_excess(realized) + (layover_payoff + premium * self.growth()) / self.investment()
    }
}

/// Market and enhanced excess returns.
pub fn excess_returns(
    ctx: &ReturnContext,
    realized: f64,
    layover_payoff: f64,
    premium: f64,
) -> (f64, f64) {
    (
        ctx.market_excess(realized),
        ctx.enhanced_excess(realized, layover_payoff, premium),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Annualized mean (x12).
    pub mean: f64,
    /// Annualized sample standard deviation (x sqrt 12).
    pub std_dev: f64,
    /// Skewness of monthly values (population moments).
    pub skew: f64,
    pub sortino: f64,
    pub cer2: f64,
    pub cer3: f64,
    pub cer4: f64,
    pub observations: usize,
}

impl MomentReport {
    /// Standard deviation needs two observations and skew three; below those
    /// counts they are reported as NaN.
    pub fn from_monthly(sample: &[f64]) -> Result<Self, BacktestError> {
        let t = sample.len();
        if t == 0 {
            return Err(BacktestError::SampleTooSmall(0));
        }
        let tf = t as f64;
        let mean = sample.iter().sum::<f64>() / tf;
        let m2 = sample.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / tf;
        let m3 = sample.iter().map(|r| (r - mean).powi(3)).sum::<f64>() / tf;
        let std_dev = if t >= 2 {
            (m2 * tf / (tf - 1.0)).sqrt() * 12f64.sqrt()
        } else {
            f64::NAN
        };
        // dispersion at rounding level means a constant sample
        let scale = sample.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let flat = m2.sqrt() <= 1e-12 * scale;
        let skew = if t < 3 {
            f64::NAN
        } else if flat {
            0.0
        } else {
            m3 / m2.powf(1.5)
        };
        let downside = (sample.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / tf).sqrt();
        let sortino = if downside == 0.0 {
            f64::INFINITY
        } else {
            12.0 * mean / (12f64.sqrt() * downside)
        };
        Ok(Self {
            mean: 12.0 * mean,
            std_dev,
            skew,
            sortino,
            cer2: cer(sample, 2.0),
            cer3: cer(sample, 3.0),
            cer4: cer(sample, 4.0),
            observations: t,
        })
    }
}

/// Annualized certainty-equivalent rate under power utility with relative
/// risk aversion `gamma` (not 1).
pub fn cer(sample: &[f64], gamma: f64) -> f64 {
    assert!(gamma != 1.0, "log utility is not supported");
    if sample.iter().any(|r| 1.0 + r <= 0.0) {
        return f64::NEG_INFINITY;
    }
    let e = 1.0 - gamma;
    let avg = sample.iter().map(|r| (1.0 + r).powf(e)).sum::<f64>() / sample.len() as f64;
    12.0 * (avg.powf(1.0 / e) - 1.0)
}

// ---- Greeks ---------------------------------------------------------------

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Black–Scholes inputs shared by all options of a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsMarket {
    pub spot: f64,
    pub rate: f64,
    pub dividend_yield: f64,
    pub tau: f64,
}

impl BsMarket {
    fn d1(&self, strike: f64, vol: f64) -> f64 {
        ((self.spot / strike).ln() + (self.rate - self.dividend_yield + 0.5 * vol * vol) * self.tau)
            / (vol * self.tau.sqrt())
    }

    pub fn price(&self, kind: OptionKind, strike: f64, vol: f64) -> f64 {
        let d1 = self.d1(strike, vol);
        let d2 = d1 - vol * self.tau.sqrt();
        let df_s = self.spot * (-self.dividend_yield * self.tau).exp();
        let df_k = strike * (-self.rate * self.tau).exp();
        match kind {
            OptionKind::Call => df_s * std_normal_cdf(d1) - df_k * std_normal_cdf(d2),
            OptionKind::Put => df_k * std_normal_cdf(-d2) - df_s * std_normal_cdf(-d1),
        }
    }

    pub fn delta(&self, kind: OptionKind, strike: f64, vol: f64) -> f64 {
        let q = (-self.dividend_yield * self.tau).exp();
        let n = std_normal_cdf(self.d1(strike, vol));
        match kind {
            OptionKind::Call => q * n,
            OptionKind::Put => q * (n - 1.0),
        }
    }

    /// Sensitivity to one unit (not one point) of volatility.
    pub fn vega(&self, strike: f64, vol: f64) -> f64 {
        self.spot * (-self.dividend_yield * self.tau).exp() * std_normal_pdf(self.d1(strike, vol)) * self.tau.sqrt()
    }

    /// Implied volatility by bisection on `[1e-6, 5]`, or `None` when the
    /// price lies outside the bracket.
    pub fn implied_vol(&self, kind: OptionKind, strike: f64, price: f64) -> Option<f64> {
        let (mut lo, mut hi) = (1e-6, 5.0);
        let (plo, phi) = (self.price(kind, strike, lo), self.price(kind, strike, hi));
        if !(price >= plo && price <= phi) {
            return None;
        }
        while hi - lo > 1e-8 {
            let mid = 0.5 * (lo + hi);
            if self.price(kind, strike, mid) < price {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioGreeks {
    /// Portfolio delta divided by the depth scale.
    pub delta: f64,
    /// Portfolio vega divided by the depth scale.
    pub vega: f64,
    /// Options whose mid admitted no implied volatility.
    pub fallbacks: usize,
    pub option_deltas: Vec<f64>,
    pub option_vegas: Vec<f64>,
}

/// Per-option implied-vol Greeks, falling back to the volatility index.
pub fn greeks(
    snapshot: &MarketSnapshot,
    portfolio: &Portfolio,
    scale: f64,
    dividend_yield: f64,
) -> Result<PortfolioGreeks, BacktestError> {
    if portfolio.alpha.len() != snapshot.quotes.len() {
        return Err(BacktestError::Dimension(format!(
            "portfolio has {} options, snapshot {}",
            portfolio.alpha.len(),
            snapshot.quotes.len()
        )));
    }
    let mkt = BsMarket {
        spot: snapshot.index_level,
        rate: snapshot.risk_free_rate,
        dividend_yield,
        tau: calendar_tau(snapshot),
    };
    let fallback_vol = snapshot.vol_index / 100.0;
    let mut fallbacks = 0;
    let mut option_deltas = Vec::with_capacity(snapshot.quotes.len());
    let mut option_vegas = Vec::with_capacity(snapshot.quotes.len());
    for q in &snapshot.quotes {
        let vol = option_vol(&mkt, q).unwrap_or_else(|| {
            fallbacks += 1;
            fallback_vol
        });
        option_deltas.push(mkt.delta(q.kind, q.strike, vol));
        option_vegas.push(mkt.vega(q.strike, vol));
    }
    let net = portfolio.net();
    let delta = net.iter().zip(&option_deltas).map(|(n, g)| n * g).sum::<f64>() / scale;
    let vega = net.iter().zip(&option_vegas).map(|(n, g)| n * g).sum::<f64>() / scale;
    Ok(PortfolioGreeks {
        delta,
        vega,
        fallbacks,
        option_deltas,
        option_vegas,
    })
}

fn option_vol(mkt: &BsMarket, q: &OptionQuote) -> Option<f64> {
    mkt.implied_vol(q.kind, q.strike, q.mid())
}

// ---- payoff curves ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffCurves {
    /// Evaluation points as fractions of the current index.
    pub grid: Vec<f64>,
    pub q1: Vec<f64>,
    pub median: Vec<f64>,
    pub q3: Vec<f64>,
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise quartiles across portfolios of the payoff at `g * index`,
/// divided by the index.
pub fn payoff_curves(
    items: &[(&MarketSnapshot, &Portfolio)],
    grid: &[f64],
) -> Result<PayoffCurves, BacktestError> {
    if grid.is_empty() {
        return Err(BacktestError::EmptyGrid);
    }
    if items.is_empty() {
        return Err(BacktestError::SampleTooSmall(0));
    }
    let mut out = PayoffCurves {
        grid: grid.to_vec(),
        q1: Vec::with_capacity(grid.len()),
        median: Vec::with_capacity(grid.len()),
        q3: Vec::with_capacity(grid.len()),
    };
    let mut vals = Vec::with_capacity(items.len());
    for &g in grid {
        vals.clear();
        for (snap, pf) in items {
            vals.push(pf.payoff_at(snap, g * snap.index_level) / snap.index_level);
        }
        vals.sort_by(f64::total_cmp);
        out.q1.push(quantile_sorted(&vals, 0.25));
        out.median.push(quantile_sorted(&vals, 0.5));
        out.q3.push(quantile_sorted(&vals, 0.75));
    }
    Ok(out)
}

// ---- records ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub trade_date: NaiveDate,
    pub scale: i64,
    pub forward_price: f64,
    pub realized_index: f64,
    pub market_excess_return: f64,
    pub enhanced_excess_return: f64,
    /// Premium as a fraction of the market investment.
    pub layover_premium: f64,
    pub layover_delta: f64,
    pub layover_vega: f64,
    pub realized_layover_payoff: f64,
}

/// Builds the record for one month given a solved portfolio.
pub fn backtest_record(
    snapshot: &MarketSnapshot,
    portfolio: &Portfolio,
    scale: i64,
    realized_index: f64,
    compounding: Compounding,
    dividend_yield: f64,
) -> Result<BacktestRecord, BacktestError> {
    let forward = impute_forward(snapshot, compounding)?;
    let ctx = ReturnContext::new(forward, snapshot.risk_free_rate, calendar_tau(snapshot), compounding)?;
    let premium = portfolio.premium(snapshot);
    let payoff = portfolio.payoff_at(snapshot, realized_index);
    let (market, enhanced) = excess_returns(&ctx, realized_index, payoff, premium);
    let g = greeks(snapshot, portfolio, scale as f64, dividend_yield)?;
    Ok(BacktestRecord {
        trade_date: snapshot.trade_date,
        scale,
        forward_price: forward,
        realized_index,
        market_excess_return: market,
        enhanced_excess_return: enhanced,
        layover_premium: premium / ctx.investment(),
        layover_delta: g.delta,
        layover_vega: g.vega,
        realized_layover_payoff: payoff,
    })
}
