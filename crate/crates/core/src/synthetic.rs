//! Deterministic synthetic market data for tests, benchmarks and the
//! verification suite.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtest::BsMarket;
use crate::market_data::{MarketSnapshot, OptionKind, OptionQuote};
use crate::state_probability::StateGrid;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

fn round_to(x: f64, tick: f64) -> f64 {
    (x / tick).round() * tick
}

/// A one-month snapshot shaped like a listed index chain: 140 puts on every
/// 5-point strike in [4230, 4925] and 115 calls on [4355, 4925], priced off a
/// downward-sloping smile with 0.05-point ticks and random depth.
pub fn desk_snapshot(seed: u64) -> MarketSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = 4700.0;
    let (rate, tau) = (0.01, 28.0 / 365.0);
    let mkt = BsMarket {
        spot: index,
        rate,
        dividend_yield: 0.013,
        tau,
    };
    let smile = |k: f64| {
        let m = (k / index).ln();
        (0.15 - 0.9 * m + 2.0 * m * m).max(0.06)
    };
    let mut quotes = Vec::with_capacity(255);
    for s in 0..140 {
        let strike = 4230.0 + 5.0 * s as f64;
        for kind in [OptionKind::Put, OptionKind::Call] {
            if kind == OptionKind::Call && strike < 4355.0 {
                continue;
            }
            let fair = mkt.price(kind, strike, smile(strike));
            let half = (0.025 * fair).clamp(0.05, 2.5) + rng.random_range(0.0..0.3);
            let bid = round_to((fair - half).max(0.0), 0.05);
            let ask = round_to(fair + half, 0.05).max(bid + 0.05);
            quotes.push(OptionQuote {
                strike,
                kind,
                bid,
                ask,
                bid_size: if bid > 0.0 { rng.random_range(1..=150) as f64 } else { 0.0 },
                ask_size: rng.random_range(1..=150) as f64,
            });
        }
    }
    let mut snap = MarketSnapshot {
        trade_date: date(2021, 11, 17),
        expiry_date: date(2021, 12, 15),
        index_level: index,
        risk_free_rate: rate,
        vol_index: 17.0,
        trading_days_to_expiry: 20,
        quotes,
    };
    snap.canonicalize().expect("synthetic snapshot is canonical");
    snap
}

/// A tiny instance: a snapshot and a state grid on which payoffs are
/// evaluated directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallInstance {
    pub snapshot: MarketSnapshot,
    pub grid: StateGrid,
}

/// Random instance with `2..=max_n` states and `1..=max_m` options. Prices
/// are grid expectations perturbed both ways, so some instances admit
/// dominating layovers and some do not; position caps are 0, 1 or 2.
pub fn small_instance<R: Rng>(rng: &mut R, max_n: usize, max_m: usize) -> SmallInstance {
    let n = rng.random_range(2..=max_n.max(2));
    let m = rng.random_range(1..=max_m.max(1));
    let mut atoms: Vec<f64> = Vec::with_capacity(n);
    while atoms.len() < n {
        let a = rng.random_range(80..=120) as f64;
        if !atoms.contains(&a) {
            atoms.push(a);
        }
    }
    atoms.sort_by(f64::total_cmp);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let grid = StateGrid::from_weights(atoms, &weights).expect("positive weights");
    let mut quotes: Vec<OptionQuote> = Vec::with_capacity(m);
    while quotes.len() < m {
        let strike = 5.0 * rng.random_range(17..=23) as f64;
        let kind = if rng.random_bool(0.5) { OptionKind::Call } else { OptionKind::Put };
        if quotes.iter().any(|q| q.strike == strike && q.kind == kind) {
            continue;
        }
        let fair: f64 = grid.atoms.iter().zip(&grid.probs).map(|(&x, p)| {
            p * match kind {
                OptionKind::Call => (x - strike).max(0.0),
                OptionKind::Put => (strike - x).max(0.0),
            }
        }).sum();
        let ask = (fair * rng.random_range(0.5..1.2) + rng.random_range(0.01..0.2)).max(0.01);
        let bid = (ask - rng.random_range(0.0..0.3)).max(0.0);
        quotes.push(OptionQuote {
            strike,
            kind,
            bid,
            ask,
            bid_size: rng.random_range(0..=2) as f64,
            ask_size: rng.random_range(0..=2) as f64,
        });
    }
    let mut snapshot = MarketSnapshot {
        trade_date: date(2020, 1, 17),
        expiry_date: date(2020, 2, 14),
        index_level: 100.0,
        risk_free_rate: 0.01,
        vol_index: 20.0,
        trading_days_to_expiry: 20,
        quotes,
    };
    snapshot.canonicalize().expect("distinct strike/kind pairs");
    SmallInstance { snapshot, grid }
}

/// Deterministic sequence of tiny instances.
pub fn small_instances(seed: u64, count: usize, max_n: usize, max_m: usize) -> Vec<SmallInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| small_instance(&mut rng, max_n, max_m)).collect()
}

/// Two calls with the same strike where the bid on one exceeds the ask on
/// the other: buying one and writing the other is riskless.
pub fn pure_arbitrage_instance() -> SmallInstance {
    let call = |bid: f64, ask: f64| OptionQuote {
        strike: 100.0,
        kind: OptionKind::Call,
        bid,
        ask,
        bid_size: 1.0,
        ask_size: 1.0,
    };
    let grid = StateGrid::from_weights(vec![90.0, 100.0, 110.0], &[0.25, 0.5, 0.25]).expect("valid grid");
    SmallInstance {
        // deliberately not canonicalized: the duplicate strike is the point
        snapshot: MarketSnapshot {
            trade_date: date(2020, 1, 17),
            expiry_date: date(2020, 2, 14),
            index_level: 100.0,
            risk_free_rate: 0.0,
            vol_index: 20.0,
            trading_days_to_expiry: 20,
            quotes: vec![call(2.0, 2.5), call(3.0, 3.5)],
        },
        grid,
    }
}

/// Paired monthly returns with identical marginal laws: two stationary
/// Gaussian AR(1) series with autocorrelation `phi` whose innovations have
/// correlation `correlation`. Monthly mean 0.6% and standard deviation 4.5%.
pub fn ar1_equal_pair(seed: u64, months: usize, phi: f64, correlation: f64) -> (Vec<f64>, Vec<f64>) {
    use rand_distr::{Distribution, StandardNormal};
    assert!(phi.abs() < 1.0 && correlation.abs() <= 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mean, sd) = (0.006, 0.045);
    let innovation_sd = sd * (1.0 - phi * phi).sqrt();
    let draw = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        (a, correlation * a + (1.0 - correlation * correlation).sqrt() * b)
    };
    // start from the stationary law so no burn-in is needed
    let (a0, b0) = draw(&mut rng);
    let (mut x, mut y) = (sd * a0, sd * b0);
    let mut first = Vec::with_capacity(months);
    let mut second = Vec::with_capacity(months);
    for _ in 0..months {
        first.push(mean + x);
        second.push(mean + y);
        let (a, b) = draw(&mut rng);
        x = phi * x + innovation_sd * a;
        y = phi * y + innovation_sd * b;
    }
    (first, second)
}
