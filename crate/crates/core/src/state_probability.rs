//! Discrete state distributions of the index level at expiry.
//!
//! The log index level is `location + scale * z` where `z` is either
//! standard normal (the symmetric, lognormal specification) or a
//! standardized skewed generalized t variate (the skewed specification).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use thiserror::Error;

use crate::backtest::{MomentReport, ReturnContext};
use crate::market_data::MarketSnapshot;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("nonpositive scale {0}: volatility index below the volatility risk premium")]
    NonpositiveScale(f64),
    #[error("fewer than two grid atoms between strikes {lo} and {hi} with tick {tick}")]
    TooFewAtoms { lo: f64, hi: f64, tick: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("state probability underflow at atom {0}")]
    Underflow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub market_risk_premium: f64,
    pub vol_risk_premium: f64,
    pub trading_days_per_year: f64,
    pub grid_tick: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            market_risk_premium: 0.06,
            vol_risk_premium: 0.02,
            trading_days_per_year: 252.0,
            grid_tick: 5.0,
        }
    }
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<(), StateError> {
        if !(self.trading_days_per_year > 0.0) || !(self.grid_tick > 0.0) {
            return Err(StateError::InvalidParams(
                "trading_days_per_year and grid_tick must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgtParams {
    pub shape: f64,
    pub degrees_of_freedom: f64,
    pub asymmetry: f64,
}

impl Default for SgtParams {
    fn default() -> Self {
        Self {
            shape: 1.25,
            degrees_of_freedom: 5.0,
            asymmetry: -0.2,
        }
    }
}

/// Standardized (zero mean, unit variance) skewed generalized t.
///
/// Parametrized by shape `p`, tail parameter `q = df / p` and asymmetry
/// `lambda`, with density proportional to
/// `(1 + |z + m|^p / (q (v (1 + lambda sign(z + m)))^p))^-(1/p + q)`.
/// `v` and `m` are fixed by the unit-variance and zero-mean conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgt {
    p: f64,
    q: f64,
    lambda: f64,
    v: f64,
    m: f64,
    ln_norm: f64,
}

impl Sgt {
    pub fn new(params: &SgtParams) -> Result<Self, StateError> {
        let p = params.shape;
        let lambda = params.asymmetry;
        if !(p > 0.0) || !(params.degrees_of_freedom > 0.0) || !(lambda > -1.0 && lambda < 1.0) {
            return Err(StateError::InvalidParams(format!("{params:?}")));
        }
        let q = params.degrees_of_freedom / p;
        if !(p * q > 2.0) {
            return Err(StateError::InvalidParams(format!(
                "variance undefined unless degrees_of_freedom > 2, got {}",
                params.degrees_of_freedom
            )));
        }
        let lb1 = ln_beta(1.0 / p, q);
        let r2 = (ln_beta(2.0 / p, q - 1.0 / p) - lb1).exp();
        let r3 = (ln_beta(3.0 / p, q - 2.0 / p) - lb1).exp();
        let q_root = q.powf(1.0 / p);
        let v = 1.0 / (q_root * ((1.0 + 3.0 * lambda * lambda) * r3 - 4.0 * lambda * lambda * r2 * r2).sqrt());
        let m = 2.0 * v * lambda * q_root * r2;
        let ln_norm = p.ln() - (2.0 * v * q_root).ln() - lb1;
        Ok(Self {
            p,
            q,
            lambda,
            v,
            m,
            ln_norm,
        })
    }

    /// Distance from the mean to the mode.
    pub fn mode_shift(&self) -> f64 {
        self.m
    }

    fn side_scale(&self, y: f64) -> f64 {
        let s = if y < 0.0 { -1.0 } else { 1.0 };
        self.v * (1.0 + self.lambda * s)
    }

    pub fn ln_density(&self, z: f64) -> f64 {
        let y = z + self.m;
        let u = y.abs() / self.side_scale(y);
        self.ln_norm - (1.0 / self.p + self.q) * (u.powf(self.p) / self.q).ln_1p()
    }

    pub fn density(&self, z: f64) -> f64 {
        self.ln_density(z).exp()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let y = z + self.m;
        let u = y.abs() / self.side_scale(y);
        let t = u.powf(self.p) / self.q;
        let w = t / (1.0 + t);
        let inc = if w >= 1.0 { 1.0 } else { beta_reg(1.0 / self.p, self.q, w) };
        if y < 0.0 {
            0.5 * (1.0 - self.lambda) * (1.0 - inc)
        } else {
            0.5 * (1.0 - self.lambda) + 0.5 * (1.0 + self.lambda) * inc
        }
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(1.0 / self.p, 1.0).expect("valid gamma").sample(rng);
        let h = Gamma::new(self.q, 1.0).expect("valid gamma").sample(rng);
        let u = (self.q * g / h).powf(1.0 / self.p);
        let neg = rng.random::<f64>() < 0.5 * (1.0 - self.lambda);
        let s = if neg { -1.0 } else { 1.0 };
        s * (1.0 + self.lambda * s) * self.v * u - self.m
    }
}

/// Standardized skewed generalized t density.
pub fn sgt_density(z: f64, params: &SgtParams) -> Result<f64, StateError> {
    Ok(Sgt::new(params)?.density(z))
}

fn std_normal_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Distribution of the standardized log-level shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReturnModel {
    Lognormal,
    Skewed(SgtParams),
}

#[derive(Debug, Clone, Copy)]
enum Shock {
    Normal,
    Sgt(Sgt),
}

impl Shock {
    fn new(model: &ReturnModel) -> Result<Self, StateError> {
        Ok(match model {
            ReturnModel::Lognormal => Shock::Normal,
            ReturnModel::Skewed(p) => Shock::Sgt(Sgt::new(p)?),
        })
    }

    fn ln_density(&self, z: f64) -> f64 {
        match self {
            Shock::Normal => std_normal_ln_pdf(z),
            Shock::Sgt(s) => s.ln_density(z),
        }
    }

    fn cdf(&self, z: f64) -> f64 {
        match self {
            Shock::Normal => std_normal_cdf(z),
            Shock::Sgt(s) => s.cdf(z),
        }
    }

    fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Shock::Normal => rng.sample(StandardNormal),
            Shock::Sgt(s) => s.sample(rng),
        }
    }
}

/// Location and scale of the log index level at expiry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLevelLaw {
    pub location: f64,
    pub scale: f64,
    pub model: ReturnModel,
}

impl LogLevelLaw {
    /// Unconditional predictive CDF of the index level.
    pub fn cdf(&self, level: f64) -> Result<f64, StateError> {
        if level <= 0.0 {
            return Ok(0.0);
        }
        let shock = Shock::new(&self.model)?;
        Ok(shock.cdf((level.ln() - self.location) / self.scale))
    }
}

/// Year fraction in trading days.
pub fn horizon_years(snapshot: &MarketSnapshot, params: &CalibrationParams) -> f64 {
    snapshot.trading_days_to_expiry as f64 / params.trading_days_per_year
}

pub fn calibrate_location_scale(
    snapshot: &MarketSnapshot,
    params: &CalibrationParams,
) -> Result<(f64, f64), StateError> {
    params.validate()?;
    let tau = horizon_years(snapshot, params);
    let location = snapshot.index_level.ln() + (snapshot.risk_free_rate + params.market_risk_premium) * tau;
    let scale = (snapshot.vol_index / 100.0 - params.vol_risk_premium) * tau.sqrt();
    if !(scale > 0.0) {
        return Err(StateError::NonpositiveScale(scale));
    }
    Ok((location, scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl StateGrid {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Builds a grid from atoms and positive weights, normalizing the weights.
    pub fn from_weights(atoms: Vec<f64>, weights: &[f64]) -> Result<Self, StateError> {
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let g = Self { atoms, probs };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.atoms.len() != self.probs.len() || self.atoms.is_empty() {
            return Err(StateError::InvalidParams("grid atoms and probs differ in length".into()));
        }
        if self.atoms.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(StateError::InvalidParams("grid atoms not strictly increasing".into()));
        }
        if let Some(j) = self.probs.iter().position(|&p| !(p > 0.0)) {
            return Err(StateError::Underflow(self.atoms[j]));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(StateError::InvalidParams(format!("probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    /// `atom,prob` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("atom,prob\n");
        for (x, p) in self.atoms.iter().zip(&self.probs) {
            s.push_str(&format!("{x:.16e},{p:.16e}\n"));
        }
        s
    }
}

/// Multiples of `tick` within `[lo, hi]`.
pub fn grid_atoms(lo: f64, hi: f64, tick: f64) -> Vec<f64> {
    let first = (lo / tick - 1e-9).ceil() as i64;
    let last = (hi / tick + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * tick).collect()
}

/// Grid over the strike range with probabilities proportional to the
/// density of the index level (including the `1 / (x scale)` Jacobian).
pub fn build_grid(
    snapshot: &MarketSnapshot,
    params: &CalibrationParams,
    model: &ReturnModel,
) -> Result<StateGrid, StateError> {
    let (location, scale) = calibrate_location_scale(snapshot, params)?;
    let lo = snapshot.min_strike();
    let hi = snapshot.max_strike();
    let atoms = grid_atoms(lo, hi, params.grid_tick);
    if atoms.len() < 2 {
        return Err(StateError::TooFewAtoms {
            lo,
            hi,
            tick: params.grid_tick,
        });
    }
    let shock = Shock::new(model)?;
    let ln_dens: Vec<f64> = atoms
        .iter()
        .map(|&x| shock.ln_density((x.ln() - location) / scale) - x.ln() - scale.ln())
        .collect();
    let top = ln_dens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = ln_dens.iter().map(|l| (l - top).exp()).collect();
    StateGrid::from_weights(atoms, &weights)
}

pub fn build_grid_symmetric(
    snapshot: &MarketSnapshot,
    params: &CalibrationParams,
) -> Result<StateGrid, StateError> {
    build_grid(snapshot, params, &ReturnModel::Lognormal)
}

pub fn build_grid_skewed(
    snapshot: &MarketSnapshot,
    params: &CalibrationParams,
    sgt: &SgtParams,
) -> Result<StateGrid, StateError> {
    build_grid(snapshot, params, &ReturnModel::Skewed(*sgt))
}

/// Simulates index levels at expiry from `law` and returns the moments of
/// the enhanced excess returns for a layover with the given payoff function
/// and premium (zero payoff and premium give the market leg alone).
pub fn simulate_model_moments<F: Fn(f64) -> f64>(
    law: &LogLevelLaw,
    ctx: &ReturnContext,
    payoff: F,
    premium: f64,
    draws: usize,
    seed: u64,
) -> Result<MomentReport, StateError> {
    if draws == 0 {
        return Err(StateError::InvalidParams("draws must be at least 1".into()));
    }
    let shock = Shock::new(&law.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: Vec<f64> = (0..draws)
        .map(|_| {
            let level = (law.location + law.scale * shock.sample(&mut rng)).exp();
            ctx.enhanced_excess(level, payoff(level), premium)
        })
        .collect();
    MomentReport::from_monthly(&sample).map_err(|e| StateError::InvalidParams(e.to_string()))
}
