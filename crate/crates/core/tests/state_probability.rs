use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdarb::backtest::{Compounding, ReturnContext};
use sdarb::quad::integrate_real_line;
use sdarb::state_probability::*;
use sdarb::synthetic::desk_snapshot;

const QUAD_TOL: f64 = 1e-10;

fn moment(params: &SgtParams, k: i32) -> f64 {
    let sgt = Sgt::new(params).unwrap();
    let shift = -sgt.mode_shift();
    integrate_real_line(|z| z.powi(k) * sgt.density(z), &[shift - 1.0, shift, shift + 1.0], QUAD_TOL).value
}

#[test]
fn default_sgt_is_standardized_with_the_documented_skew() {
    let p = SgtParams::default();
    let mass = moment(&p, 0);
    let mean = moment(&p, 1);
    let var = moment(&p, 2) - mean * mean;
    let third = moment(&p, 3);
    let skew = third / var.powf(1.5);
    assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    assert!(mean.abs() < 1e-6, "mean {mean}");
    assert!((var - 1.0).abs() < 1e-6, "variance {var}");
    assert!((skew + 1.52).abs() < 0.02, "skew {skew}");
}

#[test]
fn zero_asymmetry_is_symmetric() {
    let p = SgtParams {
        asymmetry: 0.0,
        ..SgtParams::default()
    };
    for z in [0.1, 0.5, 1.0, 2.5, 7.0] {
        let a = sgt_density(z, &p).unwrap();
        let b = sgt_density(-z, &p).unwrap();
        assert!((a - b).abs() <= 1e-15 * a.max(1e-300));
    }
}

#[test]
fn normal_limit() {
    let p = SgtParams {
        shape: 2.0,
        degrees_of_freedom: 1e6,
        asymmetry: 0.0,
    };
    let gap = (0..=600)
        .map(|k| -3.0 + 0.01 * k as f64)
        .map(|z| (sgt_density(z, &p).unwrap() - (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-3, "gap {gap}");
}

#[test]
fn closed_form_cdf_matches_quadrature() {
    for p in [
        SgtParams::default(),
        SgtParams {
            shape: 2.0,
            degrees_of_freedom: 8.0,
            asymmetry: 0.3,
        },
    ] {
        let sgt = Sgt::new(&p).unwrap();
        for z in [-4.0, -1.3, -0.2, 0.0, 0.4, 1.7, 3.5] {
            let q = sdarb::quad::integrate_lower_tail(|t| sgt.density(t), z, 1e-12).value;
            assert!((q - sgt.cdf(z)).abs() < 1e-8, "{p:?} z={z}: {q} vs {}", sgt.cdf(z));
        }
    }
}

#[test]
fn sampler_matches_the_density_moments() {
    let sgt = Sgt::new(&SgtParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 200_000;
    let draws: Vec<f64> = (0..n).map(|_| sgt.sample(&mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    // standard errors are 1/sqrt(n) for the mean and about 2.5/sqrt(n) for the variance
    assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 12.0 / (n as f64).sqrt(), "variance {var}");
    let below = draws.iter().filter(|&&x| x <= -1.0).count() as f64 / n as f64;
    assert!((below - sgt.cdf(-1.0)).abs() < 4.0 * (0.25 / n as f64).sqrt());
}

#[test]
fn invalid_sgt_parameters_are_rejected() {
    for p in [
        SgtParams { shape: 0.0, ..SgtParams::default() },
        SgtParams { asymmetry: 1.0, ..SgtParams::default() },
        SgtParams { degrees_of_freedom: 1.5, ..SgtParams::default() },
    ] {
        assert!(sgt_density(0.0, &p).is_err());
    }
}

#[test]
fn calibration_example() {
    let mut snap = desk_snapshot(1);
    snap.index_level = 4700.0;
    snap.risk_free_rate = 0.01;
    snap.vol_index = 18.0;
    snap.trading_days_to_expiry = 20;
    let (loc, scale) = calibrate_location_scale(&snap, &CalibrationParams::default()).unwrap();
    let tau: f64 = 20.0 / 252.0;
    assert!((loc - (4700f64.ln() + 0.07 * tau)).abs() < 1e-14);
    assert!((scale - 0.16 * tau.sqrt()).abs() < 1e-15);
    snap.vol_index = 2.0;
    assert!(matches!(
        calibrate_location_scale(&snap, &CalibrationParams::default()),
        Err(StateError::NonpositiveScale(_))
    ));
    snap.vol_index = 18.0;
    let long = calibrate_location_scale(&snap, &CalibrationParams::default()).unwrap().1;
    let short = calibrate_location_scale(
        &snap,
        &CalibrationParams {
            trading_days_per_year: 1e16,
            ..CalibrationParams::default()
        },
    )
    .unwrap()
    .1;
    assert!(short < 1e-5 * long);
}

#[test]
fn desk_strike_range_gives_140_atoms() {
    let snap = desk_snapshot(1);
    assert_eq!((snap.min_strike(), snap.max_strike()), (4230.0, 4925.0));
    let params = CalibrationParams::default();
    for grid in [
        build_grid_symmetric(&snap, &params).unwrap(),
        build_grid_skewed(&snap, &params, &SgtParams::default()).unwrap(),
    ] {
        assert_eq!(grid.len(), 140);
        assert!(grid.atoms.windows(2).all(|w| w[1] > w[0]));
        assert!(grid.atoms.iter().all(|x| x % 5.0 == 0.0 && *x >= 4230.0 && *x <= 4925.0));
        assert!(grid.probs.iter().all(|&p| p > 0.0));
        assert!((grid.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert!(matches!(
        build_grid_symmetric(
            &snap,
            &CalibrationParams {
                grid_tick: 10_000.0,
                ..params
            }
        ),
        Err(StateError::TooFewAtoms { .. })
    ));
}

#[test]
fn lognormal_grid_is_gaussian_in_log_space() {
    // probability times level is a Gaussian density in the log level
    let snap = desk_snapshot(3);
    let params = CalibrationParams::default();
    let grid = build_grid_symmetric(&snap, &params).unwrap();
    let (loc, scale) = calibrate_location_scale(&snap, &params).unwrap();
    let ratios: Vec<f64> = grid
        .atoms
        .iter()
        .zip(&grid.probs)
        .map(|(&x, &p)| p * x / (-0.5 * ((x.ln() - loc) / scale).powi(2)).exp())
        .collect();
    let r0 = ratios[0];
    assert!(ratios.iter().all(|r| ((r - r0) / r0).abs() < 1e-12));
}

#[test]
fn equal_weights_give_uniform_probabilities() {
    let g = StateGrid::from_weights(vec![1.0, 2.0, 3.0, 4.0], &[7.0; 4]).unwrap();
    assert!(g.probs.iter().all(|&p| p == 0.25));
}

#[test]
fn normal_limit_skewed_grid_matches_lognormal_grid() {
    let snap = desk_snapshot(2);
    let params = CalibrationParams::default();
    let sym = build_grid_symmetric(&snap, &params).unwrap();
    let limit = SgtParams {
        shape: 2.0,
        degrees_of_freedom: 1e6,
        asymmetry: 0.0,
    };
    let skw = build_grid_skewed(&snap, &params, &limit).unwrap();
    assert_eq!(sym.atoms, skw.atoms);
    let top = sym.probs.iter().copied().fold(0.0, f64::max);
    for (a, b) in sym.probs.iter().zip(&skw.probs) {
        assert!((a - b).abs() / top < 1e-3);
    }
}

#[test]
fn grid_csv_round_trips_exactly() {
    let grid = build_grid_symmetric(&desk_snapshot(4), &CalibrationParams::default()).unwrap();
    let csv = grid.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("atom,prob"));
    for (line, (x, p)) in lines.zip(grid.atoms.iter().zip(&grid.probs)) {
        let (a, b) = line.split_once(',').unwrap();
        assert_eq!(a.parse::<f64>().unwrap(), *x);
        assert_eq!(b.parse::<f64>().unwrap(), *p);
    }
}

proptest! {
    #[test]
    fn normalization_ignores_a_common_factor(
        weights in proptest::collection::vec(0.01f64..10.0, 2..30),
        exponent in -20i32..20,
        factor in 0.001f64..1000.0,
    ) {
        let atoms: Vec<f64> = (0..weights.len()).map(|k| 100.0 + k as f64).collect();
        let base = StateGrid::from_weights(atoms.clone(), &weights).unwrap();
        let pow2 = 2f64.powi(exponent);
        let exact = StateGrid::from_weights(atoms.clone(), &weights.iter().map(|w| w * pow2).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(&base, &exact);
        let scaled = StateGrid::from_weights(atoms, &weights.iter().map(|w| w * factor).collect::<Vec<_>>()).unwrap();
        for (a, b) in base.probs.iter().zip(&scaled.probs) {
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
        }
    }

    #[test]
    fn grids_satisfy_their_invariants(seed in 0u64..500, vix in 12.0f64..60.0, days in 1u32..60) {
        let mut snap = desk_snapshot(seed);
        snap.vol_index = vix;
        snap.trading_days_to_expiry = days;
        let grid = build_grid_skewed(&snap, &CalibrationParams::default(), &SgtParams::default()).unwrap();
        prop_assert!(grid.validate().is_ok());
        prop_assert!((grid.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn ctx() -> ReturnContext {
    ReturnContext::new(4720.0, 0.01, 28.0 / 365.0, Compounding::Continuous).unwrap()
}

#[test]
fn model_moments_zero_layover_is_the_market_leg() {
    let law = LogLevelLaw {
        location: 4720f64.ln(),
        scale: 0.04,
        model: ReturnModel::Skewed(SgtParams::default()),
    };
    let c = ctx();
    let zero = simulate_model_moments(&law, &c, |_| 0.0, 0.0, 10_000, 9).unwrap();
    // independent recomputation of the market leg from the same draws
    let sgt = Sgt::new(&SgtParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let market: Vec<f64> = (0..10_000)
        .map(|_| c.market_excess((law.location + law.scale * sgt.sample(&mut rng)).exp()))
        .collect();
    let direct = sdarb::backtest::MomentReport::from_monthly(&market).unwrap();
    assert_eq!(zero, direct);
}

#[test]
fn model_moments_agree_across_seeds() {
    let law = LogLevelLaw {
        location: 4720f64.ln(),
        scale: 0.045,
        model: ReturnModel::Lognormal,
    };
    let c = ctx();
    let a = simulate_model_moments(&law, &c, |_| 0.0, 0.0, 10_000, 1).unwrap();
    let b = simulate_model_moments(&law, &c, |_| 0.0, 0.0, 10_000, 2).unwrap();
    assert_ne!(a, b);
    let monthly_sd = a.std_dev / 12f64.sqrt();
    let se = monthly_sd / 10_000f64.sqrt() * 12.0;
    assert!((a.mean - b.mean).abs() < 3.0 * 2f64.sqrt() * se);
    let again = simulate_model_moments(&law, &c, |_| 0.0, 0.0, 10_000, 1).unwrap();
    assert_eq!(a, again);
}

#[test]
fn degenerate_law_has_zero_dispersion() {
    let law = LogLevelLaw {
        location: 4700f64.ln(),
        scale: 0.0,
        model: ReturnModel::Lognormal,
    };
    let m = simulate_model_moments(&law, &ctx(), |_| 0.0, 0.0, 100, 3).unwrap();
    assert_eq!(m.std_dev, 0.0);
    assert!(simulate_model_moments(&law, &ctx(), |_| 0.0, 0.0, 0, 3).is_err());
}
