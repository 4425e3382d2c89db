//! `verify`: solver portfolios against the exact dominance checks and the
//! lattice search, and LP against LP* on seeded synthetic instances.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sdarb::dominance_oracle::{lattice_oracle, portfolio_dominates, DominanceOrder};
use sdarb::formulation::{assemble, build_payoff_matrix, build_polytope, LayoverProblem};
use sdarb::market_data::apply_depth_constraint;
use sdarb::solver::{solve_lp, solve_milp, SolveStatus};
use sdarb::synthetic::{small_instances, SmallInstance};
use sdarb::{FormulationTag, SolverConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{csv_bytes, thread_pool, write_atomic};

/// Keystone tolerances.
pub const LATTICE_TOL: f64 = 1e-9;
pub const MILP_LP_TOL: f64 = 1e-6;
pub const EQUIVALENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// LP portfolio passes SSD, MILP portfolio passes FSD, the lattice
    /// never beats the solver and MILP never beats LP.
    Keystone,
    /// LP, LP* and LP_COMBINED reach the same premium.
    Equivalence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCase {
    pub suite: Suite,
    pub index: usize,
    pub seed: u64,
    /// Negates the payoff row of the first option inside the programs while
    /// the oracle keeps the true payoffs.
    pub inject_fault: bool,
    pub instance: SmallInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub suite: Suite,
    pub index: usize,
    pub states: usize,
    pub options: usize,
    pub lp_premium: Option<f64>,
    pub milp_premium: Option<f64>,
    pub lp_star_premium: Option<f64>,
    pub lp_combined_premium: Option<f64>,
    pub lattice_second: Option<f64>,
    pub lattice_first: Option<f64>,
    /// Empty when every check holds.
    pub failures: String,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A failing case together with what was observed, enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDump {
    pub case: VerifyCase,
    pub outcome: CaseOutcome,
}

fn program(case: &VerifyCase, tag: FormulationTag) -> Result<LayoverProblem, CliError> {
    let inst = &case.instance;
    let mut payoff = build_payoff_matrix(&inst.snapshot, &inst.grid)?;
    if case.inject_fault {
        let n = payoff.n;
        for v in &mut payoff.theta[..n] {
            *v = -*v;
        }
    }
    let (v, w) = apply_depth_constraint(&inst.snapshot, 1)?;
    let poly = build_polytope(&inst.snapshot, &v, &w, false)?;
    let ask: Vec<f64> = inst.snapshot.quotes.iter().map(|q| q.ask).collect();
    let bid: Vec<f64> = inst.snapshot.quotes.iter().map(|q| q.bid).collect();
    Ok(assemble(tag, &payoff, &inst.grid, &poly, &ask, &bid)?)
}

fn solved(case: &VerifyCase, tag: FormulationTag, cfg: &SolverConfig, failures: &mut Vec<String>) -> Result<Option<sdarb::SolveResult>, CliError> {
    let problem = program(case, tag)?;
    let r = if tag == FormulationTag::Milp {
        solve_milp(&problem, cfg, None)?
    } else {
        solve_lp(&problem, cfg)?
    };
    if r.status != SolveStatus::Optimal {
        failures.push(format!("{} ended {:?}", tag.as_str(), r.status));
        return Ok(None);
    }
    Ok(Some(r))
}

/// Runs every check of the case's suite.
pub fn check_case(case: &VerifyCase, cfg: &SolverConfig, lattice_step: f64) -> Result<CaseOutcome, CliError> {
    let inst = &case.instance;
    let mut failures = Vec::new();
    let mut out = CaseOutcome {
        suite: case.suite,
        index: case.index,
        states: inst.grid.len(),
        options: inst.snapshot.num_options(),
        lp_premium: None,
        milp_premium: None,
        lp_star_premium: None,
        lp_combined_premium: None,
        lattice_second: None,
        lattice_first: None,
        failures: String::new(),
    };
    let lp = solved(case, FormulationTag::Lp, cfg, &mut failures)?;
    out.lp_premium = lp.as_ref().map(|r| r.premium);
    match case.suite {
        Suite::Keystone => {
            let milp = solved(case, FormulationTag::Milp, cfg, &mut failures)?;
            out.milp_premium = milp.as_ref().map(|r| r.premium);
            let payoff = build_payoff_matrix(&inst.snapshot, &inst.grid)?;
            if let Some(r) = &lp {
                if !portfolio_dominates(DominanceOrder::Second, &r.portfolio(), &payoff, &inst.grid)? {
                    failures.push("LP portfolio fails the second-order check".into());
                }
            }
            if let Some(r) = &milp {
                if !portfolio_dominates(DominanceOrder::First, &r.portfolio(), &payoff, &inst.grid)? {
                    failures.push("MILP portfolio fails the first-order check".into());
                }
            }
            if let (Some(a), Some(b)) = (&lp, &milp) {
                if b.premium > a.premium + MILP_LP_TOL {
                    failures.push(format!("MILP premium {} exceeds LP premium {}", b.premium, a.premium));
                }
            }
            let (v, w) = apply_depth_constraint(&inst.snapshot, 1)?;
            let poly = build_polytope(&inst.snapshot, &v, &w, false)?;
            let cap = v.iter().chain(&w).fold(0.0f64, |a, &b| a.max(b));
            let second = lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::Second, lattice_step, cap)?;
            let first = lattice_oracle(&inst.snapshot, &inst.grid, &poly, DominanceOrder::First, lattice_step, cap)?;
            out.lattice_second = Some(second.premium);
            out.lattice_first = Some(first.premium);
            if let Some(r) = &lp {
                if second.premium > r.premium + LATTICE_TOL {
                    failures.push(format!("lattice premium {} beats LP premium {}", second.premium, r.premium));
                }
            }
            if let Some(r) = &milp {
                if first.premium > r.premium + LATTICE_TOL {
                    failures.push(format!("lattice premium {} beats MILP premium {}", first.premium, r.premium));
                }
            }
        }
        Suite::Equivalence => {
            let star = solved(case, FormulationTag::LpStar, cfg, &mut failures)?;
            let combined = solved(case, FormulationTag::LpCombined, cfg, &mut failures)?;
            out.lp_star_premium = star.as_ref().map(|r| r.premium);
            out.lp_combined_premium = combined.as_ref().map(|r| r.premium);
            if let Some(a) = &lp {
                for (name, other) in [("LP*", &star), ("LP_COMBINED", &combined)] {
                    if let Some(b) = other {
                        if (a.premium - b.premium).abs() > EQUIVALENCE_TOL {
                            failures.push(format!("LP premium {} but {name} premium {}", a.premium, b.premium));
                        }
                    }
                }
            }
        }
    }
    out.failures = failures.join("; ");
    Ok(out)
}

/// Keystone cases (at most 8 states and 3 options) followed by the
/// equivalence sweep (at most 12 states and 4 options).
pub fn cases(cfg: &RunConfig, inject_fault: bool) -> Vec<VerifyCase> {
    let keystone = small_instances(cfg.seed, cfg.verify_instances, 8, 3)
        .into_iter()
        .enumerate()
        .map(|(index, instance)| VerifyCase {
            suite: Suite::Keystone,
            index,
            seed: cfg.seed,
            inject_fault,
            instance,
        });
    let sweep_seed = cfg.seed.wrapping_add(1);
    let sweep = small_instances(sweep_seed, cfg.verify_sweep, 12, 4)
        .into_iter()
        .enumerate()
        .map(move |(index, instance)| VerifyCase {
            suite: Suite::Equivalence,
            index,
            seed: sweep_seed,
            inject_fault,
            instance,
        });
    keystone.chain(sweep).collect()
}

pub struct VerifyOutcome {
    pub outcomes: Vec<CaseOutcome>,
    pub first_failure: Option<FailureDump>,
}

pub fn run(cfg: &RunConfig, inject_fault: bool) -> Result<VerifyOutcome, CliError> {
    let all = cases(cfg, inject_fault);
    let results: Vec<Result<CaseOutcome, CliError>> =
        thread_pool(cfg)?.install(|| all.par_iter().map(|c| check_case(c, &cfg.solver, cfg.lattice_step)).collect());
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_atomic(&cfg.output.join("verify_report.csv"), &csv_bytes(&outcomes))?;
    let failing = outcomes.iter().zip(&all).find(|(o, _)| !o.passed());
    let first_failure = failing.map(|(o, c)| FailureDump {
        case: c.clone(),
        outcome: o.clone(),
    });
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    for suite in [Suite::Keystone, Suite::Equivalence] {
        let (n, bad) = outcomes
            .iter()
            .filter(|o| o.suite == suite)
            .fold((0, 0), |(n, b), o| (n + 1, b + usize::from(!o.passed())));
        log::info!("{suite:?}: {} of {n} case(s) agree", n - bad);
    }
    if let Some(dump) = &first_failure {
        let path = cfg.output.join("verify_failure.json");
        let text = serde_json::to_string_pretty(dump).expect("dump serializes") + "\n";
        write_atomic(&path, text.as_bytes())?;
        log::error!(
            "{failed} case(s) disagree; first: {:?} #{}: {}; instance written to {}",
            dump.case.suite,
            dump.case.index,
            dump.outcome.failures,
            path.display()
        );
        return Err(CliError::Disagreement(format!("{failed} case(s) disagree")));
    }
    Ok(VerifyOutcome {
        outcomes,
        first_failure,
    })
}

/// Re-runs the case stored in a failure dump.
pub fn replay(path: &Path, cfg: &RunConfig) -> Result<CaseOutcome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let dump: FailureDump = serde_json::from_str(&text).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let outcome = check_case(&dump.case, &cfg.solver, cfg.lattice_step)?;
    if outcome.passed() {
        log::info!("replayed case passes");
        return Ok(outcome);
    }
    log::error!("replayed case fails: {}", outcome.failures);
    Err(CliError::Disagreement(outcome.failures))
}
