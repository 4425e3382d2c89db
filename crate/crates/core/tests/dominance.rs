use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdarb::dominance_oracle::*;
use sdarb::formulation::{build_payoff_matrix, build_polytope, Portfolio};
use sdarb::synthetic::small_instances;

fn uniform(points: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::uniform(points).unwrap()
}

fn point(x: f64) -> DiscreteDistribution {
    DiscreteDistribution::point_mass(x)
}

#[test]
fn first_order_examples() {
    assert!(fsd_check(&point(2.0), &point(1.0)));
    assert!(fsd_check(&uniform(&[2.0, 3.0, 4.0]), &uniform(&[1.0, 2.0, 3.0])));
    assert!(!fsd_check(&uniform(&[1.0, 3.0]), &point(2.0)));
    assert!(!fsd_check(&point(2.0), &uniform(&[1.0, 3.0])));
}

#[test]
fn second_order_examples() {
    assert!(ssd_check(&point(2.0), &uniform(&[1.0, 3.0])));
    assert!(!ssd_check(&uniform(&[1.0, 3.0]), &point(2.0)));
    assert!(ssd_check(&point(2.0), &point(1.0)));
    assert!(!ssd_check(&point(1.0), &point(2.0)));
}

#[test]
fn invalid_distributions_are_rejected() {
    assert!(DiscreteDistribution::new(&[1.0, 2.0], &[0.5, 0.6]).is_err());
    assert!(DiscreteDistribution::new(&[1.0, 2.0], &[1.5, -0.5]).is_err());
    assert!(DiscreteDistribution::new(&[1.0], &[0.5, 0.5]).is_err());
    assert!(DiscreteDistribution::new(&[f64::NAN], &[1.0]).is_err());
    let d = DiscreteDistribution::new(&[3.0, 1.0, 3.0], &[0.25, 0.5, 0.25]).unwrap();
    assert_eq!(d.support(), &[1.0, 3.0]);
    assert_eq!(d.probs(), &[0.5, 0.5]);
}

fn random_distribution(rng: &mut ChaCha8Rng) -> DiscreteDistribution {
    let k = rng.random_range(1..=6);
    let pts: Vec<f64> = (0..k).map(|_| rng.random_range(0..8) as f64).collect();
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(1..5) as f64).collect();
    let s: f64 = w.iter().sum();
    DiscreteDistribution::new(&pts, &w.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap()
}

#[test]
fn first_order_implies_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut fsd_seen = 0;
    let mut pairs = 0;
    while pairs < 500 {
        let y = random_distribution(&mut rng);
        let x = random_distribution(&mut rng);
        if fsd_check(&y, &x) {
            assert!(ssd_check(&y, &x));
            pairs += 1;
        }
        fsd_seen += 1;
    }
    assert!(fsd_seen >= 500);
}

#[test]
fn reflexive_and_transitive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut chains = [0usize; 2];
    for _ in 0..4000 {
        let a = random_distribution(&mut rng);
        let b = random_distribution(&mut rng);
        let c = random_distribution(&mut rng);
        for (k, order) in [DominanceOrder::First, DominanceOrder::Second].into_iter().enumerate() {
            let tol = DominanceTolerance::exact();
            assert!(dominates(order, &a, &a, tol));
            if dominates(order, &a, &b, tol) && dominates(order, &b, &c, tol) {
                assert!(dominates(order, &a, &c, tol));
                chains[k] += 1;
            }
        }
    }
    assert!(chains.iter().all(|&c| c >= 20), "{chains:?}");
}

/// `min_k (slope_k z + intercept_k)` with positive slopes: increasing and concave.
fn expected_utility(d: &DiscreteDistribution, pieces: &[(f64, f64)]) -> f64 {
    d.support()
        .iter()
        .zip(d.probs())
        .map(|(&z, &p)| p * pieces.iter().map(|(a, b)| a * z + b).fold(f64::INFINITY, f64::min))
        .sum()
}

#[test]
fn second_order_dominance_raises_concave_expected_utility() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..3000 {
        let y = random_distribution(&mut rng);
        let x = random_distribution(&mut rng);
        if !ssd_check(&y, &x) {
            continue;
        }
        checked += 1;
        for _ in 0..20 {
            let pieces: Vec<(f64, f64)> = (0..rng.random_range(1..5))
                .map(|_| (rng.random_range(0.01..3.0), rng.random_range(-5.0..5.0)))
                .collect();
            assert!(expected_utility(&y, &pieces) >= expected_utility(&x, &pieces) - 1e-12);
        }
    }
    assert!(checked >= 100);
}

#[test]
fn shortfall_and_cdf_agree_with_definitions() {
    let d = DiscreteDistribution::new(&[1.0, 2.0, 4.0], &[0.25, 0.5, 0.25]).unwrap();
    assert_eq!(d.cdf(0.5), 0.0);
    assert_eq!(d.cdf(2.0), 0.75);
    assert_eq!(d.cdf(10.0), 1.0);
    // E[(z - Y)^+] at z = 3 is 0.25 * 2 + 0.5 * 1
    assert_eq!(d.expected_shortfall(3.0), 1.0);
    assert_eq!(d.mean(), 2.25);
    assert_eq!(d.shifted(1.0).support(), &[2.0, 3.0, 5.0]);
}

#[test]
fn enhanced_distribution_examples() {
    let inst = &small_instances(9, 1, 6, 3)[0];
    let payoff = build_payoff_matrix(&inst.snapshot, &inst.grid).unwrap();
    let m = payoff.m;
    let zero = enhanced_distribution(&Portfolio::zero(m), &payoff, &inst.grid).unwrap();
    assert_eq!(zero, market_distribution(&inst.grid).unwrap());
    assert!(enhanced_distribution(&Portfolio::zero(m + 1), &payoff, &inst.grid).is_err());

    // a long put and a long call at the same strike add |x - s|; a grid
    // symmetric about the strike then merges mirrored payoffs
    let grid = sdarb::state_probability::StateGrid::from_weights(vec![90.0, 100.0, 110.0], &[1.0, 1.0, 1.0]).unwrap();
    let mut snap = inst.snapshot.clone();
    snap.quotes = vec![
        sdarb::market_data::OptionQuote {
            strike: 100.0,
            kind: sdarb::market_data::OptionKind::Put,
            bid: 1.0,
            ask: 2.0,
            bid_size: 1.0,
            ask_size: 1.0,
        },
        sdarb::market_data::OptionQuote {
            strike: 100.0,
            kind: sdarb::market_data::OptionKind::Call,
            bid: 1.0,
            ask: 2.0,
            bid_size: 1.0,
            ask_size: 1.0,
        },
    ];
    let pm = build_payoff_matrix(&snap, &grid).unwrap();
    let straddle = Portfolio {
        alpha: vec![1.0, 1.0],
        beta: vec![0.0, 0.0],
    };
    let d = enhanced_distribution(&straddle, &pm, &grid).unwrap();
    assert_eq!(d.support(), &[100.0, 120.0]);
    assert!((d.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
    // a call struck below every atom and a put struck above every atom pay
    // 40 together in each state, so a 1/40 position shifts the support by 1
    snap.quotes[0].strike = 120.0;
    snap.quotes[1].strike = 80.0;
    let pm = build_payoff_matrix(&snap, &grid).unwrap();
    let constant = Portfolio {
        alpha: vec![0.025, 0.025],
        beta: vec![0.0, 0.0],
    };
    assert_eq!(enhanced_distribution(&constant, &pm, &grid).unwrap().support(), &[91.0, 101.0, 111.0]);
}

#[test]
fn lattice_oracle_examples() {
    let insts = small_instances(10, 40, 6, 2);
    let mut nonzero = 0;
    for inst in &insts {
        let m = inst.snapshot.num_options();
        let poly = build_polytope(&inst.snapshot, &vec![1.0; m], &vec![1.0; m], false).unwrap();
        let first = lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::First, 0.5, 1.0).unwrap();
        let second = lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::Second, 0.5, 1.0).unwrap();
        assert!(first.premium <= second.premium);
        assert!(first.premium >= 0.0);
        assert_eq!(second.candidates, 3u64.pow(2 * m as u32));
        nonzero += usize::from(second.premium > 0.0);
        if second.premium == 0.0 {
            assert_eq!(second.portfolio, Portfolio::zero(m));
        }
        let payoff = build_payoff_matrix(&inst.snapshot, &inst.grid).unwrap();
        assert!(portfolio_dominates(DominanceOrder::Second, &second.portfolio, &payoff, &inst.grid).unwrap());
        assert!(portfolio_dominates(DominanceOrder::First, &first.portfolio, &payoff, &inst.grid).unwrap());
    }
    assert!(nonzero > 0);
}

#[test]
fn overpriced_options_leave_the_zero_portfolio() {
    let mut inst = small_instances(12, 1, 6, 3).remove(0);
    for q in inst.snapshot.quotes.iter_mut() {
        q.ask = 1000.0;
        q.bid = 0.0;
    }
    let m = inst.snapshot.num_options();
    let poly = build_polytope(&inst.snapshot, &vec![1.0; m], &vec![1.0; m], false).unwrap();
    let best = lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::Second, 0.25, 1.0).unwrap();
    assert_eq!(best.premium, 0.0);
    assert_eq!(best.portfolio, Portfolio::zero(m));
}

#[test]
fn oversized_lattice_is_refused() {
    let inst = small_instances(14, 1, 4, 3).remove(0);
    let m = inst.snapshot.num_options();
    let poly = build_polytope(&inst.snapshot, &vec![1.0; m], &vec![1.0; m], false).unwrap();
    let step = 1e-3;
    let err = lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::Second, step, 1.0).unwrap_err();
    assert!(matches!(err, OracleError::SearchSpace(_)));
    assert!(matches!(
        lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::Second, 0.0, 1.0),
        Err(OracleError::Lattice(_))
    ));
}

#[test]
fn solver_tolerance_absorbs_rounding_only() {
    let x = uniform(&[100.0, 110.0]);
    let tiny = x.shifted(-1e-10);
    let tol = DominanceTolerance::for_solver_output(&tiny, &x);
    assert!(fsd_check_with(&tiny, &x, tol));
    assert!(!fsd_check(&tiny, &x));
    let visible = x.shifted(-1e-3);
    assert!(!fsd_check_with(&visible, &x, DominanceTolerance::for_solver_output(&visible, &x)));
}
