//! LP-based branch-and-bound for programs whose integer columns are binary
//! or general integers with finite bounds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::LinearProgram;
use crate::simplex::{Basis, LpStatus, Simplex, SimplexOptions, StandardForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeOrder {
    /// Lowest relaxation bound first; ties go to the older node.
    BestBound,
    /// Most recent node first, up branch before down branch.
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchRule {
    /// Fractional part closest to one half; ties go to the lowest index.
    MostFractional,
    /// Lowest-index fractional column.
    FirstFractional,
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub simplex: SimplexOptions,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub node_order: NodeOrder,
    pub branch_rule: BranchRule,
    /// Absolute optimality gap below which nodes are pruned.
    pub mip_gap: f64,
    pub integrality_tol: f64,
    /// Feasible starting point installed as the first incumbent.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            simplex: SimplexOptions::default(),
            time_limit: None,
            node_limit: None,
            node_order: NodeOrder::BestBound,
            branch_rule: BranchRule::MostFractional,
            mip_gap: 1e-10,
            integrality_tol: 1e-7,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped by the time limit; an incumbent may exist.
    TimeLimit,
    NodeLimit,
    NumericalFailure,
}

/// Progress record. `incumbent` and `bound` are in the program's own sense,
/// so for maximization the incumbent never exceeds the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub elapsed: f64,
    pub incumbent: f64,
    pub bound: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub trace: Vec<TraceEntry>,
}

struct Node {
    id: usize,
    /// Minimization-sense relaxation bound inherited from the parent.
    bound: f64,
    /// Branching decisions along the path: (column, lower, upper).
    changes: Vec<(usize, f64, f64)>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: the "greatest" node has the smallest bound, then smallest id
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

enum Pool {
    Heap(BinaryHeap<Node>),
    Stack(Vec<Node>),
}

impl Pool {
    fn push(&mut self, n: Node) {
        match self {
            Pool::Heap(h) => h.push(n),
            Pool::Stack(s) => s.push(n),
        }
    }
    fn pop(&mut self) -> Option<Node> {
        match self {
            Pool::Heap(h) => h.pop(),
            Pool::Stack(s) => s.pop(),
        }
    }
    fn min_bound(&self) -> f64 {
        match self {
            Pool::Heap(h) => h.peek().map_or(f64::INFINITY, |n| n.bound),
            Pool::Stack(s) => s.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min),
        }
    }
}

pub fn solve_mip(lp: &LinearProgram, options: &MipOptions) -> MipSolution {
    let start = Instant::now();
    let deadline = options.time_limit.map(|t| start + t);
    let sf = StandardForm::new(lp);
    let sign = sf.sign;
    let n = sf.n;
    let int_cols: Vec<usize> = (0..n).filter(|&j| lp.columns[j].integer).collect();
    let mut simplex_opts = options.simplex.clone();
    simplex_opts.deadline = match (simplex_opts.deadline, deadline) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };

    // minimization-sense incumbent
    let mut inc_val = f64::INFINITY;
    let mut inc_x: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut nodes = 0usize;
    let mut lp_iterations = 0usize;
    let elapsed = |s: Instant| s.elapsed().as_secs_f64();

    if let Some(x0) = &options.warm_start {
        if x0.len() == n
            && lp.max_violation(x0) <= options.simplex.primal_tol.max(1e-9)
            && lp.max_integrality_violation(x0) <= options.integrality_tol
        {
            inc_val = sign * lp.objective_value(x0);
            inc_x = Some(x0.clone());
        } else {
            log::warn!("warm start rejected: infeasible or fractional");
        }
    }

    let mut pool = match options.node_order {
        NodeOrder::BestBound => Pool::Heap(BinaryHeap::new()),
        NodeOrder::DepthFirst => Pool::Stack(Vec::new()),
    };
    pool.push(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        changes: Vec::new(),
        basis: None,
    });
    let mut next_id = 1usize;
    let mut last_bound = f64::NEG_INFINITY;
    let record = |trace: &mut Vec<TraceEntry>, inc: f64, bound: f64, nodes: usize| {
        trace.push(TraceEntry {
            elapsed: elapsed(start),
            incumbent: sign * inc,
            bound: sign * bound,
            nodes,
        });
    };

    let gap = options.mip_gap;
    let mut stop: Option<MipStatus> = None;
    let mut root_bound = f64::NEG_INFINITY;
    while let Some(node) = pool.pop() {
        if node.bound >= inc_val - gap {
            continue;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            pool.push(node);
            stop = Some(MipStatus::TimeLimit);
            break;
        }
        if options.node_limit.is_some_and(|l| nodes >= l) {
            pool.push(node);
            stop = Some(MipStatus::NodeLimit);
            break;
        }
        let mut lower = sf.lower.clone();
        let mut upper = sf.upper.clone();
        for &(j, lo, hi) in &node.changes {
            lower[j] = lo;
            upper[j] = hi;
        }
        let mut sol = {
            let mut s = Simplex::new(&sf, lower.clone(), upper.clone(), node.basis.as_ref(), simplex_opts.clone());
            s.run()
        };
        if sol.status == LpStatus::NumericalFailure && node.basis.is_some() {
            let mut s = Simplex::new(&sf, lower, upper, None, simplex_opts.clone());
            sol = s.run();
        }
        nodes += 1;
        lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                if nodes == 1 && inc_x.is_none() {
                    stop = Some(MipStatus::Infeasible);
                    break;
                }
                continue;
            }
            LpStatus::Unbounded => {
                stop = Some(MipStatus::Unbounded);
                break;
            }
            LpStatus::TimeLimit | LpStatus::IterationLimit => {
                pool.push(node);
                stop = Some(MipStatus::TimeLimit);
                break;
            }
            LpStatus::NumericalFailure => {
                stop = Some(MipStatus::NumericalFailure);
                break;
            }
        }
        let obj = sign * sol.objective;
        if nodes == 1 {
            root_bound = obj;
            if inc_x.is_some() {
                record(&mut trace, inc_val, obj.min(inc_val), nodes);
            }
        }
        if obj >= inc_val - gap {
            continue;
        }
        let frac = choose_branch(&sol.x, &int_cols, options);
        match frac {
            None => {
                let mut x = sol.x;
                for &j in &int_cols {
                    x[j] = x[j].round();
                }
                inc_val = sign * lp.objective_value(&x);
                inc_x = Some(x);
                let bound = pool.min_bound().min(inc_val).max(root_bound);
                last_bound = bound;
                record(&mut trace, inc_val, bound, nodes);
            }
            Some(j) => {
                let v = sol.x[j];
                let down = (j, lower_of(&node, &sf, j), v.floor());
                let up = (j, v.ceil(), upper_of(&node, &sf, j));
                let mk = |id: usize, change: (usize, f64, f64)| {
                    let mut changes = node.changes.clone();
                    changes.push(change);
                    Node {
                        id,
                        bound: obj,
                        changes,
                        basis: Some(sol.basis.clone()),
                    }
                };
                // the up child gets the smaller id and, on a stack, is popped first
                let up_node = mk(next_id, up);
                let down_node = mk(next_id + 1, down);
                next_id += 2;
                pool.push(down_node);
                pool.push(up_node);
            }
        }
        let bound = pool.min_bound().min(inc_val);
        let improved = bound.is_finite() && bound > last_bound + 1e-12 * (1.0 + bound.abs());
        if improved {
            last_bound = bound;
        }
        if inc_x.is_some() && (improved || trace.is_empty()) {
            record(&mut trace, inc_val, bound.max(root_bound), nodes);
        }
    }

    let status = match stop {
        Some(s) => s,
        None if inc_x.is_some() => MipStatus::Optimal,
        None => MipStatus::Infeasible,
    };
    let bound = match status {
        MipStatus::Optimal => inc_val,
        _ => pool.min_bound().min(inc_val).max(root_bound),
    };
    if inc_x.is_some() {
        record(&mut trace, inc_val, bound, nodes);
    }
    MipSolution {
        status,
        objective: if inc_x.is_some() { sign * inc_val } else { f64::NAN },
        x: inc_x,
        bound: sign * bound,
        nodes,
        lp_iterations,
        trace,
    }
}

fn lower_of(node: &Node, sf: &StandardForm, j: usize) -> f64 {
    node.changes
        .iter()
        .rev()
        .find(|c| c.0 == j)
        .map_or(sf.lower[j], |c| c.1)
}

fn upper_of(node: &Node, sf: &StandardForm, j: usize) -> f64 {
    node.changes
        .iter()
        .rev()
        .find(|c| c.0 == j)
        .map_or(sf.upper[j], |c| c.2)
}

fn choose_branch(x: &[f64], int_cols: &[usize], options: &MipOptions) -> Option<usize> {
    let tol = options.integrality_tol;
    let mut best: Option<(usize, f64)> = None;
    for &j in int_cols {
        let f = x[j] - x[j].floor();
        let dist = f.min(1.0 - f);
        if dist <= tol {
            continue;
        }
        match options.branch_rule {
            BranchRule::FirstFractional => return Some(j),
            BranchRule::MostFractional => {
                if best.is_none_or(|(_, bd)| dist > bd) {
                    best = Some((j, dist));
                }
            }
        }
    }
    best.map(|(j, _)| j)
}
