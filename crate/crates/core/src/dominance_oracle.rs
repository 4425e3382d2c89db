//! Brute-force stochastic dominance checks on discrete distributions and an
//! exhaustive lattice search for optimal layovers on tiny instances. Nothing
//! here depends on the programs in `formulation`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{PayoffMatrix, Polytope, Portfolio};
use crate::market_data::MarketSnapshot;
use crate::state_probability::StateGrid;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lattice has {0:e} points, above the 1e8 limit")]
    SearchSpace(f64),
    #[error("invalid lattice: {0}")]
    Lattice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceOrder {
    First,
    Second,
}

impl DominanceOrder {
    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Self::First),
            2 => Some(Self::Second),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }
}

/// Sorted distinct support with strictly positive probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Sorts, merges equal points and drops zero-probability points.
    pub fn new(points: &[f64], probs: &[f64]) -> Result<Self, OracleError> {
        if points.len() != probs.len() || points.is_empty() {
            return Err(OracleError::InvalidDistribution("points and probabilities differ in length".into()));
        }
        if points.iter().any(|p| !p.is_finite()) || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(OracleError::InvalidDistribution("non-finite point or negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(probs.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support = Vec::with_capacity(pairs.len());
        let mut merged: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, p) in pairs {
            if p == 0.0 {
                continue;
            }
            if support.last() == Some(&x) {
                *merged.last_mut().expect("nonempty") += p;
            } else {
                support.push(x);
                merged.push(p);
            }
        }
        Ok(Self { support, probs: merged })
    }

    pub fn point_mass(x: f64) -> Self {
        Self {
            support: vec![x],
            probs: vec![1.0],
        }
    }

    /// Equal weights on the given points.
    pub fn uniform(points: &[f64]) -> Result<Self, OracleError> {
        let w = vec![1.0 / points.len() as f64; points.len()];
        // exact sums of 1/k can miss 1 by an ulp or two
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        Self::new(points, &w)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            support: self.support.iter().map(|x| x + delta).collect(),
            probs: self.probs.clone(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    /// `P(Z <= z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .take_while(|(x, _)| **x <= z)
            .map(|(_, p)| p)
            .sum()
    }

    /// `E[(z - Z)^+]`, the integral of the CDF up to `z`.
    pub fn expected_shortfall(&self, z: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .take_while(|(x, _)| **x < z)
            .map(|(x, p)| (z - x) * p)
            .sum()
    }

    pub fn max_abs_support(&self) -> f64 {
        self.support.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
    }
}

/// Tolerances for dominance checks. `cdf` is absolute on (integrated) CDF
/// differences; `support` shifts the dominating distribution up before the
/// exact check, so a positive value tests whether `Y + support` dominates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceTolerance {
    pub cdf: f64,
    pub support: f64,
}

impl DominanceTolerance {
    pub fn exact() -> Self {
        Self { cdf: 1e-12, support: 0.0 }
    }

    /// Allows rounding in solver-produced payoffs, relative to their size.
    pub fn for_solver_output(y: &DiscreteDistribution, x: &DiscreteDistribution) -> Self {
        Self {
            cdf: 1e-12,
            support: 1e-9 * 1f64.max(y.max_abs_support()).max(x.max_abs_support()),
        }
    }
}

fn merged_support(y: &DiscreteDistribution, x: &DiscreteDistribution) -> Vec<f64> {
    let mut z: Vec<f64> = y.support.iter().chain(&x.support).copied().collect();
    z.sort_by(f64::total_cmp);
    z.dedup();
    z
}

/// Whether `y` first-order dominates `x`: `F_y <= F_x` everywhere.
pub fn fsd_check(y: &DiscreteDistribution, x: &DiscreteDistribution) -> bool {
    fsd_check_with(y, x, DominanceTolerance::exact())
}

pub fn fsd_check_with(y: &DiscreteDistribution, x: &DiscreteDistribution, tol: DominanceTolerance) -> bool {
    let y = y.shifted(tol.support);
    merged_support(&y, x).iter().all(|&z| y.cdf(z) <= x.cdf(z) + tol.cdf)
}

/// Whether `y` second-order dominates `x`: `E[(z-y)^+] <= E[(z-x)^+]` for
/// all `z`. Both sides are piecewise linear with kinks on the supports, so
/// checking the kinks is exact.
pub fn ssd_check(y: &DiscreteDistribution, x: &DiscreteDistribution) -> bool {
    ssd_check_with(y, x, DominanceTolerance::exact())
}

pub fn ssd_check_with(y: &DiscreteDistribution, x: &DiscreteDistribution, tol: DominanceTolerance) -> bool {
    let y = y.shifted(tol.support);
    merged_support(&y, x)
        .iter()
        .all(|&z| y.expected_shortfall(z) <= x.expected_shortfall(z) + tol.cdf)
}

pub fn dominates(order: DominanceOrder, y: &DiscreteDistribution, x: &DiscreteDistribution, tol: DominanceTolerance) -> bool {
    match order {
        DominanceOrder::First => fsd_check_with(y, x, tol),
        DominanceOrder::Second => ssd_check_with(y, x, tol),
    }
}

pub fn market_distribution(grid: &StateGrid) -> Result<DiscreteDistribution, OracleError> {
    DiscreteDistribution::new(&grid.atoms, &grid.probs)
}

/// Index plus layover payoff, state by state.
pub fn enhanced_distribution(
    portfolio: &Portfolio,
    payoff: &PayoffMatrix,
    grid: &StateGrid,
) -> Result<DiscreteDistribution, OracleError> {
    if portfolio.alpha.len() != payoff.m || portfolio.beta.len() != payoff.m || grid.len() != payoff.n {
        return Err(OracleError::Dimension(format!(
            "portfolio {}/{}, payoff {}x{}, grid {}",
            portfolio.alpha.len(),
            portfolio.beta.len(),
            payoff.m,
            payoff.n,
            grid.len()
        )));
    }
    let net = portfolio.net();
    let values: Vec<f64> = (0..payoff.n)
        .map(|j| grid.atoms[j] + (0..payoff.m).map(|i| net[i] * payoff.get(i, j)).sum::<f64>())
        .collect();
    DiscreteDistribution::new(&values, &grid.probs)
}

/// Checks a solver portfolio with [`DominanceTolerance::for_solver_output`].
pub fn portfolio_dominates(
    order: DominanceOrder,
    portfolio: &Portfolio,
    payoff: &PayoffMatrix,
    grid: &StateGrid,
) -> Result<bool, OracleError> {
    let y = enhanced_distribution(portfolio, payoff, grid)?;
    let x = market_distribution(grid)?;
    let tol = DominanceTolerance::for_solver_output(&y, &x);
    Ok(dominates(order, &y, &x, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptimum {
    pub portfolio: Portfolio,
    pub premium: f64,
    /// Lattice points inside the polytope.
    pub candidates: u64,
}

/// Enumerates every `alpha_i, beta_i` in `{0, step, ..., cap}` (further
/// capped by the polytope's plain rows) in lexicographic order and returns
/// the first portfolio of maximal premium whose enhanced distribution passes
/// the exact dominance check. Polytope rows must hold within 1e-9.
pub fn lattice_oracle(
    snapshot: &MarketSnapshot,
    grid: &StateGrid,
    polytope: &Polytope,
    order: DominanceOrder,
    step: f64,
    cap: f64,
) -> Result<LatticeOptimum, OracleError> {
    if !(step > 0.0 && cap >= 0.0) {
        return Err(OracleError::Lattice(format!("step {step}, cap {cap}")));
    }
    let m = snapshot.quotes.len();
    if polytope.plain_rows != 2 * m {
        return Err(OracleError::Dimension("polytope does not match the snapshot".into()));
    }
    let levels = (cap / step + 1e-9).floor() as usize + 1;
    let space = (levels as f64).powi(2 * m as i32);
    if space > 1e8 {
        return Err(OracleError::SearchSpace(space));
    }
    let payoff = crate::formulation::build_payoff_matrix(snapshot, grid)
        .map_err(|e| OracleError::Dimension(e.to_string()))?;
    let market = market_distribution(grid)?;
    let grid_values: Vec<f64> = (0..levels).map(|k| k as f64 * step).collect();
    let (long_caps, short_caps) = (polytope.long_caps(), polytope.short_caps());
    // per-coordinate admissible levels, alpha first then beta
    let admissible: Vec<usize> = (0..2 * m)
        .map(|c| {
            let lim = if c < m { long_caps[c] } else { short_caps[c - m] };
            grid_values.iter().take_while(|&&v| v <= lim + 1e-9).count()
        })
        .collect();
    let ask: Vec<f64> = snapshot.quotes.iter().map(|q| q.ask).collect();
    let bid: Vec<f64> = snapshot.quotes.iter().map(|q| q.bid).collect();

    let mut best = LatticeOptimum {
        portfolio: Portfolio::zero(m),
        premium: 0.0,
        candidates: 0,
    };
    if admissible.contains(&0) {
        return Ok(best);
    }
    let mut idx = vec![0usize; 2 * m];
    let mut pf = Portfolio::zero(m);
    loop {
        for c in 0..m {
            pf.alpha[c] = grid_values[idx[c]];
            pf.beta[c] = grid_values[idx[m + c]];
        }
        if polytope.contains(&pf.alpha, &pf.beta, 1e-9) {
            best.candidates += 1;
            let premium: f64 = (0..m).map(|i| -ask[i] * pf.alpha[i] + bid[i] * pf.beta[i]).sum();
            if premium > best.premium {
                let y = enhanced_distribution(&pf, &payoff, grid)?;
                if dominates(order, &y, &market, DominanceTolerance::exact()) {
                    best.premium = premium;
                    best.portfolio = pf.clone();
                }
            }
        }
        // odometer increment, last coordinate fastest
        let mut c = 2 * m;
        loop {
            if c == 0 {
                return Ok(best);
            }
            c -= 1;
            idx[c] += 1;
            if idx[c] < admissible[c] {
                break;
            }
            idx[c] = 0;
        }
    }
}
