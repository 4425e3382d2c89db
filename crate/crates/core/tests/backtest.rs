use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdarb::backtest::*;
use sdarb::formulation::{build_problem, FormulationTag, Portfolio};
use sdarb::market_data::{MarketSnapshot, OptionKind, OptionQuote};
use sdarb::solver::{solve_lp, SolverConfig};
use sdarb::synthetic::{desk_snapshot, small_instances};

fn quote(kind: OptionKind, strike: f64, mid: f64) -> OptionQuote {
    OptionQuote {
        strike,
        kind,
        bid: mid - 0.5,
        ask: mid + 0.5,
        bid_size: 5.0,
        ask_size: 5.0,
    }
}

fn snapshot(rate: f64, quotes: Vec<OptionQuote>) -> MarketSnapshot {
    MarketSnapshot {
        trade_date: NaiveDate::from_ymd_opt(2021, 1, 15).unwrap(),
        expiry_date: NaiveDate::from_ymd_opt(2021, 2, 12).unwrap(),
        index_level: 4510.0,
        risk_free_rate: rate,
        vol_index: 20.0,
        trading_days_to_expiry: 20,
        quotes,
    }
}

fn parity_quotes() -> Vec<OptionQuote> {
    vec![
        quote(OptionKind::Put, 4400.0, 30.0),
        quote(OptionKind::Put, 4500.0, 60.0),
        quote(OptionKind::Call, 4500.0, 80.0),
        quote(OptionKind::Call, 4600.0, 35.0),
    ]
}

#[test]
fn forward_from_parity() {
    let snap = snapshot(0.0, parity_quotes());
    assert_eq!(impute_forward(&snap, Compounding::Continuous).unwrap(), 4520.0);
    let tau = calendar_tau(&snap);
    assert_eq!(tau, 28.0 / 365.0);
    let rate = 1.001f64.ln() / tau;
    let f = impute_forward(&snapshot(rate, parity_quotes()), Compounding::Continuous).unwrap();
    assert!((f - 4520.02).abs() < 1e-9, "{f}");
    let puts: Vec<OptionQuote> = parity_quotes().into_iter().filter(|q| q.kind == OptionKind::Put).collect();
    assert_eq!(impute_forward(&snapshot(0.0, puts), Compounding::Continuous), Err(BacktestError::NoParityPair));
}

#[test]
fn forward_uses_the_parity_strike_nearest_the_index() {
    let mut quotes = parity_quotes();
    quotes.insert(0, quote(OptionKind::Put, 4000.0, 5.0));
    quotes.insert(1, quote(OptionKind::Call, 4000.0, 600.0));
    let mut snap = snapshot(0.0, quotes);
    snap.canonicalize().unwrap();
    assert_eq!(impute_forward(&snap, Compounding::Continuous).unwrap(), 4520.0);
    snap.index_level = 4100.0;
    assert_eq!(impute_forward(&snap, Compounding::Continuous).unwrap(), 4595.0);
}

#[test]
fn excess_return_identities() {
    let ctx = ReturnContext::new(4520.0, 0.02, 28.0 / 365.0, Compounding::Continuous).unwrap();
    assert!(ctx.market_excess(4520.0).abs() < 1e-15);
    let (m, e) = excess_returns(&ctx, 4300.0, 0.0, 0.0);
    assert_eq!(m, e);
    let g: f64 = (0.02f64 * 28.0 / 365.0).exp();
    let invest = 4520.0 / g;
    assert!((m - (4300.0 / invest - 1.0 - (g - 1.0))).abs() < 1e-15);
    let (m2, e2) = excess_returns(&ctx, 4300.0, 12.5, 3.0);
    assert!(((e2 - m2) - (12.5 + 3.0 * g) / invest).abs() < 1e-10);
    assert!(ReturnContext::new(0.0, 0.0, 0.1, Compounding::Simple).is_err());
    let simple = ReturnContext::new(100.0, 0.05, 0.5, Compounding::Simple).unwrap();
    assert_eq!(simple.growth(), 1.025);
}

#[test]
fn record_difference_matches_the_accrued_layover() {
    let snap = desk_snapshot(5);
    let grid = sdarb::state_probability::build_grid_symmetric(&snap, &Default::default()).unwrap();
    let problem = build_problem(&snap, &grid, 100, true, FormulationTag::Lp).unwrap();
    let r = solve_lp(&problem, &SolverConfig::default()).unwrap();
    let pf = r.portfolio();
    for realized in [4200.0, 4650.0, 4701.3, 5100.0] {
        let rec = backtest_record(&snap, &pf, 100, realized, Compounding::Continuous, 0.013).unwrap();
        let ctx = ReturnContext::new(rec.forward_price, snap.risk_free_rate, calendar_tau(&snap), Compounding::Continuous).unwrap();
        let expected = (pf.payoff_at(&snap, realized) + pf.premium(&snap) * ctx.growth()) / ctx.investment();
        assert!((rec.enhanced_excess_return - rec.market_excess_return - expected).abs() < 1e-10);
        assert!((rec.layover_premium - r.premium / ctx.investment()).abs() < 1e-12);
    }
}

#[test]
fn difference_is_linear_in_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let snap = desk_snapshot(6);
    let m = snap.num_options();
    let ctx = ReturnContext::new(4710.0, snap.risk_free_rate, calendar_tau(&snap), Compounding::Continuous).unwrap();
    let diff = |pf: &Portfolio, realized: f64| {
        let (a, b) = excess_returns(&ctx, realized, pf.payoff_at(&snap, realized), pf.premium(&snap));
        b - a
    };
    for _ in 0..50 {
        let mut draw = || Portfolio {
            alpha: (0..m).map(|_| if rng.random_bool(0.05) { rng.random_range(0.0..2.0) } else { 0.0 }).collect(),
            beta: (0..m).map(|_| if rng.random_bool(0.05) { rng.random_range(0.0..2.0) } else { 0.0 }).collect(),
        };
        let (p, q) = (draw(), draw());
        let (c1, c2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let combo = Portfolio {
            alpha: p.alpha.iter().zip(&q.alpha).map(|(a, b)| c1 * a + c2 * b).collect(),
            beta: p.beta.iter().zip(&q.beta).map(|(a, b)| c1 * a + c2 * b).collect(),
        };
        let realized = rng.random_range(4000.0..5200.0);
        let lhs = diff(&combo, realized);
        let rhs = c1 * diff(&p, realized) + c2 * diff(&q, realized);
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }
}

#[test]
fn moment_examples() {
    let r = MomentReport::from_monthly(&[0.01; 24]).unwrap();
    assert!((r.mean - 0.12).abs() < 1e-15);
    assert!(r.std_dev < 1e-15);
    assert_eq!(r.sortino, f64::INFINITY);
    for c in [r.cer2, r.cer3, r.cer4] {
        assert!((c - 0.12).abs() < 1e-12);
    }
    let sym = MomentReport::from_monthly(&[0.03, -0.03, 0.01, -0.01, 0.0]).unwrap();
    assert!(sym.skew.abs() < 1e-12);
    let s = [0.02, -0.01, 0.04, -0.05, 0.01, 0.03];
    let rep = MomentReport::from_monthly(&s).unwrap();
    let mean = s.iter().sum::<f64>() / 6.0;
    let var = s.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 5.0;
    assert!((rep.std_dev - (12.0 * var).sqrt()).abs() < 1e-15);
    let downside = ((0.01f64.powi(2) + 0.05f64.powi(2)) / 6.0).sqrt();
    assert!((rep.sortino - 12.0 * mean / (12f64.sqrt() * downside)).abs() < 1e-12);
    let cer2 = 12.0 * (1.0 / (s.iter().map(|r| 1.0 / (1.0 + r)).sum::<f64>() / 6.0) - 1.0);
    assert!((rep.cer2 - cer2).abs() < 1e-14);
    assert!(MomentReport::from_monthly(&[]).is_err());
    assert!(MomentReport::from_monthly(&[0.1]).unwrap().std_dev.is_nan());
}

#[test]
fn risk_aversion_orders_certainty_equivalents() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s: Vec<f64> = (0..200).map(|_| rng.random_range(-0.1..0.1)).collect();
    let r = MomentReport::from_monthly(&s).unwrap();
    assert!(r.cer2 > r.cer3 && r.cer3 > r.cer4);
    assert!(r.cer2 < r.mean);
}

proptest! {
    #[test]
    fn uniform_shift_raises_mean_cer_and_sortino(
        s in proptest::collection::vec(-0.2f64..0.2, 3..60),
        delta in 0.001f64..0.05,
    ) {
        let a = MomentReport::from_monthly(&s).unwrap();
        let shifted: Vec<f64> = s.iter().map(|r| r + delta).collect();
        let b = MomentReport::from_monthly(&shifted).unwrap();
        prop_assert!(b.mean > a.mean);
        prop_assert!(b.cer2 > a.cer2 && b.cer3 > a.cer3 && b.cer4 > a.cer4);
        prop_assert!(b.sortino >= a.sortino);
        prop_assert!((b.std_dev - a.std_dev).abs() < 1e-12);
    }
}

fn bs() -> BsMarket {
    BsMarket {
        spot: 4700.0,
        rate: 0.01,
        dividend_yield: 0.013,
        tau: 28.0 / 365.0,
    }
}

#[test]
fn closed_form_greeks_match_finite_differences() {
    let mkt = bs();
    for kind in [OptionKind::Call, OptionKind::Put] {
        for (strike, vol) in [(4300.0, 0.28), (4700.0, 0.16), (4950.0, 0.11)] {
            let h = 0.05;
            let up = BsMarket { spot: mkt.spot + h, ..mkt };
            let dn = BsMarket { spot: mkt.spot - h, ..mkt };
            let fd = (up.price(kind, strike, vol) - dn.price(kind, strike, vol)) / (2.0 * h);
            let delta = mkt.delta(kind, strike, vol);
            assert!((fd - delta).abs() < 1e-6 * delta.abs().max(1e-3), "{kind:?} {strike}: {fd} vs {delta}");
            let hv = 1e-5;
            let fdv = (mkt.price(kind, strike, vol + hv) - mkt.price(kind, strike, vol - hv)) / (2.0 * hv);
            let vega = mkt.vega(strike, vol);
            assert!((fdv - vega).abs() < 1e-6 * vega, "{fdv} vs {vega}");
        }
    }
    let deep = BsMarket { dividend_yield: 0.0, ..mkt };
    assert!((deep.delta(OptionKind::Call, 1000.0, 0.2) - 1.0).abs() < 1e-3);
    // a straddle's delta is the call delta plus the (negative) put delta
    let straddle = mkt.delta(OptionKind::Call, 4700.0, 0.16) + mkt.delta(OptionKind::Put, 4700.0, 0.16);
    let up = BsMarket { spot: mkt.spot + 0.05, ..mkt };
    let dn = BsMarket { spot: mkt.spot - 0.05, ..mkt };
    let price = |m: &BsMarket| m.price(OptionKind::Call, 4700.0, 0.16) + m.price(OptionKind::Put, 4700.0, 0.16);
    assert!(((price(&up) - price(&dn)) / 0.1 - straddle).abs() < 1e-6);
}

#[test]
fn implied_volatility_inverts_the_price() {
    let mkt = bs();
    for kind in [OptionKind::Call, OptionKind::Put] {
        for vol in [0.08, 0.2, 0.65] {
            let p = mkt.price(kind, 4650.0, vol);
            let iv = mkt.implied_vol(kind, 4650.0, p).unwrap();
            assert!((iv - vol).abs() < 1e-7);
        }
    }
    assert_eq!(mkt.implied_vol(OptionKind::Call, 4650.0, -1.0), None);
}

#[test]
fn portfolio_greeks_use_implied_vols_with_a_fallback() {
    let mut snap = desk_snapshot(2);
    let m = snap.num_options();
    let mut pf = Portfolio::zero(m);
    pf.alpha[10] = 2.0;
    let g = greeks(&snap, &pf, 4.0, 0.013).unwrap();
    assert!(g.vega > 0.0);
    assert!((g.delta - 2.0 * g.option_deltas[10] / 4.0).abs() < 1e-15);
    // a mid below intrinsic value admits no implied volatility
    let deep_call = snap.quotes.iter().position(|q| q.kind == OptionKind::Call).unwrap();
    snap.quotes[deep_call].bid = 0.0;
    snap.quotes[deep_call].ask = 0.1;
    let g2 = greeks(&snap, &pf, 4.0, 0.013).unwrap();
    assert_eq!(g2.fallbacks, g.fallbacks + 1);
    assert!(greeks(&snap, &Portfolio::zero(m + 1), 1.0, 0.0).is_err());
}

#[test]
fn payoff_curve_summaries() {
    let insts = small_instances(4, 12, 6, 3);
    let grid: Vec<f64> = (0..=40).map(|k| 0.6 + 0.02 * k as f64).collect();
    let zeros: Vec<Portfolio> = insts.iter().map(|i| Portfolio::zero(i.snapshot.num_options())).collect();
    let items: Vec<(&MarketSnapshot, &Portfolio)> = insts.iter().map(|i| &i.snapshot).zip(&zeros).collect();
    let c = payoff_curves(&items, &grid).unwrap();
    assert!(c.q1.iter().chain(&c.median).chain(&c.q3).all(|&v| v == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let random: Vec<Portfolio> = insts
        .iter()
        .map(|i| {
            let m = i.snapshot.num_options();
            Portfolio {
                alpha: (0..m).map(|_| rng.random_range(0.0..1.0)).collect(),
                beta: (0..m).map(|_| rng.random_range(0.0..1.0)).collect(),
            }
        })
        .collect();
    let single = payoff_curves(&[(&insts[0].snapshot, &random[0])], &grid).unwrap();
    assert_eq!(single.q1, single.median);
    assert_eq!(single.q3, single.median);
    for (g, v) in grid.iter().zip(&single.median) {
        let s = &insts[0].snapshot;
        assert_eq!(*v, random[0].payoff_at(s, g * s.index_level) / s.index_level);
    }
    let mut items: Vec<(&MarketSnapshot, &Portfolio)> = insts.iter().map(|i| &i.snapshot).zip(&random).collect();
    let a = payoff_curves(&items, &grid).unwrap();
    items.reverse();
    items.swap(1, 7);
    assert_eq!(payoff_curves(&items, &grid).unwrap(), a);
    assert!(a.q1.iter().zip(&a.median).zip(&a.q3).all(|((l, m), h)| l <= m && m <= h));
    assert_eq!(payoff_curves(&items, &[]), Err(BacktestError::EmptyGrid));
}

#[test]
fn constrained_curves_vanish_outside_the_strike_range() {
    let snap = desk_snapshot(8);
    let grid = sdarb::state_probability::build_grid_symmetric(&snap, &Default::default()).unwrap();
    let problem = build_problem(&snap, &grid, 50, true, FormulationTag::Lp).unwrap();
    let pf = solve_lp(&problem, &SolverConfig::default()).unwrap().portfolio();
    let lo = snap.min_strike() / snap.index_level;
    let hi = snap.max_strike() / snap.index_level;
    let eval: Vec<f64> = vec![0.5 * lo, 0.9 * lo, lo, hi, 1.05 * hi, 2.0 * hi];
    let c = payoff_curves(&[(&snap, &pf)], &eval).unwrap();
    for v in &c.median {
        assert!(v.abs() < 1e-9, "{v}");
    }
}
