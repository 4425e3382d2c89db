//! Bounded-variable revised simplex.
//!
//! Every row `i` gets a logical variable `r_i` with `A x - r = 0`, so all
//! constraints become bounds on variables. The dual simplex is the workhorse:
//! layover problems always start dual feasible from the slack basis, and
//! branch-and-bound children stay dual feasible after bound changes. The
//! primal simplex (with a composite phase 1) covers starts that are not dual
//! feasible and cleans up after the dual phase when needed.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::lu::BasisFactor;
use crate::model::{LinearProgram, Sense};
use crate::sparse::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Basis statuses for structurals followed by logicals (one per row).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Dual simplex when the start is dual feasible, primal otherwise.
    Auto,
    /// Primal simplex only.
    Primal,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    pub deadline: Option<Instant>,
    pub refactor_interval: usize,
    /// Switch to Bland's rule after this many iterations without progress.
    pub anti_cycling: bool,
    pub stall_threshold: usize,
    pub algorithm: Algorithm,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: usize::MAX,
            deadline: None,
            refactor_interval: 100,
            anti_cycling: true,
            stall_threshold: 1000,
            algorithm: Algorithm::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural values.
    pub x: Vec<f64>,
    /// Objective in the program's own sense.
    pub objective: f64,
    pub row_activity: Vec<f64>,
    /// Row duals in the program's own sense.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

/// Column-wise and row-wise copies of the constraint matrix plus the
/// minimization costs and original bounds of all `n + m` variables.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub n: usize,
    pub m: usize,
    pub(crate) a: CscMatrix,
    pub(crate) at: CscMatrix,
    pub(crate) cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub(crate) sign: f64,
}

impl StandardForm {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_columns();
        let m = lp.num_rows();
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = Vec::with_capacity(n + m);
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for c in &lp.columns {
            cost.push(sign * c.cost);
            lower.push(c.lower);
            upper.push(c.upper);
        }
        for r in &lp.rows {
            let (lo, hi) = r.activity_bounds();
            cost.push(0.0);
            lower.push(lo);
            upper.push(hi);
        }
        Self {
            n,
            m,
            a: lp.matrix.clone(),
            at: lp.matrix.transpose(),
            cost,
            lower,
            upper,
            sign,
        }
    }

    fn column_entries(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j < self.n {
            out.extend(self.a.column(j));
        } else {
            out.push((j - self.n, -1.0));
        }
    }
}

/// Solves `lp` from the slack basis.
pub fn solve(lp: &LinearProgram, options: &SimplexOptions) -> LpSolution {
    solve_from(lp, options, None)
}

/// Solves `lp` from `basis` (structurals then logicals, exactly `m` basic);
/// an unusable basis falls back to the slack basis.
pub fn solve_from(lp: &LinearProgram, options: &SimplexOptions, basis: Option<&Basis>) -> LpSolution {
    let sf = StandardForm::new(lp);
    let lower = sf.lower.clone();
    let upper = sf.upper.clone();
    let mut s = Simplex::new(&sf, lower, upper, basis, options.clone());
    s.run()
}

pub(crate) struct Simplex<'a> {
    sf: &'a StandardForm,
    lower: Vec<f64>,
    upper: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    d: Vec<f64>,
    factor: BasisFactor,
    opts: SimplexOptions,
    iterations: usize,
    stall: usize,
    bland: bool,
    // scratch
    col_buf: Vec<(usize, f64)>,
    work: Vec<f64>,
    alpha: Vec<f64>,
    row_vals: Vec<f64>,
    row_nz: Vec<usize>,
    row_mark: Vec<bool>,
}

enum Phase {
    Done,
    Infeasible,
    Unbounded,
    Limit(LpStatus),
    Numerical,
}

impl<'a> Simplex<'a> {
    pub(crate) fn new(
        sf: &'a StandardForm,
        lower: Vec<f64>,
        upper: Vec<f64>,
        basis: Option<&Basis>,
        opts: SimplexOptions,
    ) -> Self {
        let n = sf.n;
        let m = sf.m;
        let total = n + m;
        let mut s = Self {
            sf,
            lower,
            upper,
            head: vec![NONE; m],
            pos: vec![NONE; total],
            status: vec![VarStatus::AtLower; total],
            x: vec![0.0; total],
            d: vec![0.0; total],
            factor: BasisFactor::default(),
            opts,
            iterations: 0,
            stall: 0,
            bland: false,
            col_buf: Vec::new(),
            work: vec![0.0; m],
            alpha: vec![0.0; m],
            row_vals: vec![0.0; total],
            row_nz: Vec::new(),
            row_mark: vec![false; total],
        };
        let warm = basis.filter(|b| {
            b.status.len() == total
                && b.status.iter().filter(|&&st| st == VarStatus::Basic).count() == m
        });
        match warm {
            Some(b) => {
                let mut p = 0;
                for j in 0..total {
                    if b.status[j] == VarStatus::Basic {
                        s.head[p] = j;
                        s.pos[j] = p;
                        s.status[j] = VarStatus::Basic;
                        p += 1;
                    } else {
                        s.status[j] = b.status[j];
                        s.place_nonbasic(j);
                    }
                }
            }
            None => {
                for j in 0..n {
                    s.status[j] = s.cold_status(j);
                    s.place_nonbasic(j);
                }
                for i in 0..m {
                    s.head[i] = n + i;
                    s.pos[n + i] = i;
                    s.status[n + i] = VarStatus::Basic;
                }
            }
        }
        s
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn cold_status(&self, j: usize) -> VarStatus {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                if self.sf.cost[j] >= 0.0 {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                }
            }
            (true, false) => VarStatus::AtLower,
            (false, true) => VarStatus::AtUpper,
            (false, false) => VarStatus::Free,
        }
    }

    /// Sets `x[j]` from the status, repairing statuses that point at an
    /// infinite bound.
    fn place_nonbasic(&mut self, j: usize) {
        let st = match self.status[j] {
            VarStatus::AtLower if !self.lower[j].is_finite() => self.cold_status(j),
            VarStatus::AtUpper if !self.upper[j].is_finite() => self.cold_status(j),
            VarStatus::Free if self.lower[j].is_finite() || self.upper[j].is_finite() => {
                self.cold_status(j)
            }
            VarStatus::Basic => self.cold_status(j),
            st => st,
        };
        self.status[j] = st;
        self.x[j] = match st {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            _ => 0.0,
        };
    }

    fn time_or_iteration_limit(&self) -> Option<LpStatus> {
        if self.iterations >= self.opts.max_iterations {
            return Some(LpStatus::IterationLimit);
        }
        if let Some(dl) = self.opts.deadline {
            if Instant::now() >= dl {
                return Some(LpStatus::TimeLimit);
            }
        }
        None
    }

    /// Refactorizes the basis, swapping in logicals for dependent columns.
    fn refactor(&mut self) -> bool {
        let m = self.sf.m;
        for _attempt in 0..3 {
            let mut cols = Vec::with_capacity(m);
            for p in 0..m {
                let mut buf = Vec::new();
                self.sf.column_entries(self.head[p], &mut buf);
                cols.push(buf);
            }
            match self.factor.factorize(m, &cols) {
                Ok(()) => return true,
                Err(sing) => {
                    log::debug!("singular basis, replacing {} columns", sing.positions.len());
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.head[p];
                        let logical = self.sf.n + r;
                        self.pos[old] = NONE;
                        let v = self.x[old];
                        self.status[old] = if self.lower[old].is_finite()
                            && (!self.upper[old].is_finite()
                                || (v - self.lower[old]).abs() <= (v - self.upper[old]).abs())
                        {
                            VarStatus::AtLower
                        } else if self.upper[old].is_finite() {
                            VarStatus::AtUpper
                        } else {
                            VarStatus::Free
                        };
                        self.place_nonbasic(old);
                        self.head[p] = logical;
                        self.pos[logical] = p;
                        self.status[logical] = VarStatus::Basic;
                    }
                }
            }
        }
        false
    }

    fn compute_primal(&mut self) {
        let n = self.sf.n;
        let m = self.sf.m;
        let w = &mut self.work;
        w.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n + m {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < n {
                for (i, a) in self.sf.a.column(j) {
                    w[i] -= a * xj;
                }
            } else {
                w[j - n] += xj;
            }
        }
        self.factor.ftran(w);
        for p in 0..m {
            self.x[self.head[p]] = w[p];
        }
    }

    fn compute_duals(&mut self) {
        let n = self.sf.n;
        let m = self.sf.m;
        let y = &mut self.work;
        for p in 0..m {
            y[p] = self.sf.cost[self.head[p]];
        }
        self.factor.btran(y);
        for j in 0..n + m {
            if self.status[j] == VarStatus::Basic {
                self.d[j] = 0.0;
                continue;
            }
            self.d[j] = if j < n {
                let mut s = self.sf.cost[j];
                for (i, a) in self.sf.a.column(j) {
                    s -= y[i] * a;
                }
                s
            } else {
                y[j - n]
            };
        }
    }

    fn primal_tol_for(&self, bound: f64) -> f64 {
        self.opts.primal_tol * bound.abs().max(1.0)
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - self.primal_tol_for(self.lower[j]) {
            self.lower[j] - v
        } else if v > self.upper[j] + self.primal_tol_for(self.upper[j]) {
            v - self.upper[j]
        } else {
            0.0
        }
    }

    fn is_primal_feasible(&self) -> bool {
        self.head.iter().all(|&j| self.infeasibility(j) == 0.0)
    }

    fn dual_infeasibility(&self, j: usize) -> f64 {
        let tol = self.opts.dual_tol;
        match self.status[j] {
            VarStatus::Basic => 0.0,
            _ if self.is_fixed(j) => 0.0,
            VarStatus::AtLower if self.d[j] < -tol => -self.d[j],
            VarStatus::AtUpper if self.d[j] > tol => self.d[j],
            VarStatus::Free if self.d[j].abs() > tol => self.d[j].abs(),
            _ => 0.0,
        }
    }

    fn is_dual_feasible(&self) -> bool {
        (0..self.sf.n + self.sf.m).all(|j| self.dual_infeasibility(j) == 0.0)
    }

    /// Moves dual-infeasible boxed variables to their other bound. Returns
    /// whether any were moved.
    fn flip_dual_infeasible_boxed(&mut self) -> bool {
        let mut flipped = false;
        for j in 0..self.sf.n + self.sf.m {
            if self.dual_infeasibility(j) == 0.0 {
                continue;
            }
            match self.status[j] {
                VarStatus::AtLower if self.upper[j].is_finite() => {
                    self.status[j] = VarStatus::AtUpper;
                    self.x[j] = self.upper[j];
                    flipped = true;
                }
                VarStatus::AtUpper if self.lower[j].is_finite() => {
                    self.status[j] = VarStatus::AtLower;
                    self.x[j] = self.lower[j];
                    flipped = true;
                }
                _ => {}
            }
        }
        flipped
    }

    fn ftran_column(&mut self, j: usize) {
        let mut buf = std::mem::take(&mut self.col_buf);
        self.sf.column_entries(j, &mut buf);
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        for &(i, a) in &buf {
            self.alpha[i] = a;
        }
        self.col_buf = buf;
        self.factor.ftran(&mut self.alpha);
    }

    /// Row `p` of `B^{-1} A` over nonbasic variables, stored sparsely in
    /// `row_vals` / `row_nz`.
    fn compute_pivot_row(&mut self, p: usize) {
        let n = self.sf.n;
        let m = self.sf.m;
        for &j in &self.row_nz {
            self.row_vals[j] = 0.0;
            self.row_mark[j] = false;
        }
        self.row_nz.clear();
        let rho = &mut self.work;
        rho.iter_mut().for_each(|v| *v = 0.0);
        rho[p] = 1.0;
        self.factor.btran(rho);
        for i in 0..m {
            let r = rho[i];
            if r == 0.0 || r.abs() < 1e-14 {
                continue;
            }
            let (idx, val) = self.sf.at.column_slices(i);
            for (&j, &a) in idx.iter().zip(val) {
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                if !self.row_mark[j] {
                    self.row_mark[j] = true;
                    self.row_nz.push(j);
                }
                self.row_vals[j] += r * a;
            }
            let j = n + i;
            if self.status[j] != VarStatus::Basic {
                if !self.row_mark[j] {
                    self.row_mark[j] = true;
                    self.row_nz.push(j);
                }
                self.row_vals[j] -= r;
            }
        }
        if self.bland {
            self.row_nz.sort_unstable();
        }
    }

    fn maybe_refactor(&mut self) -> bool {
        let m = self.sf.m.max(1);
        if self.factor.num_updates() >= self.opts.refactor_interval
            || self.factor.eta_nnz() > 4 * (self.factor.lu_nnz() + m)
        {
            if !self.refactor() {
                return false;
            }
            self.compute_primal();
            self.compute_duals();
        }
        true
    }

    fn note_progress(&mut self, progressed: bool) {
        if progressed {
            self.stall = 0;
            self.bland = false;
        } else {
            self.stall += 1;
            if self.opts.anti_cycling && self.stall >= self.opts.stall_threshold && !self.bland {
                log::debug!("switching to Bland's rule after {} stalled pivots", self.stall);
                self.bland = true;
            }
        }
    }

    /// Replaces the basic variable at position `p` with `q`; the leaving
    /// variable takes `leave_status`.
    fn pivot(&mut self, p: usize, q: usize, leave_status: VarStatus) {
        let leaving = self.head[p];
        self.factor.update(p, &self.alpha);
        self.head[p] = q;
        self.pos[q] = p;
        self.status[q] = VarStatus::Basic;
        self.pos[leaving] = NONE;
        self.status[leaving] = leave_status;
        self.x[leaving] = match leave_status {
            VarStatus::AtLower => self.lower[leaving],
            VarStatus::AtUpper => self.upper[leaving],
            _ => self.x[leaving],
        };
        self.d[q] = 0.0;
        self.iterations += 1;
    }

    // ---- dual simplex -------------------------------------------------

    fn dual_choose_row(&self) -> Option<usize> {
        let mut best = None;
        let mut best_val = 0.0;
        for p in 0..self.sf.m {
            let j = self.head[p];
            let inf = self.infeasibility(j);
            if inf == 0.0 {
                continue;
            }
            if self.bland {
                match best {
                    None => best = Some(p),
                    Some(bp) if j < self.head[bp] => best = Some(p),
                    _ => {}
                }
            } else {
                let scale = self.lower[j].abs().max(self.upper[j].abs()).clamp(1.0, 1e12);
                let v = inf / if scale.is_finite() { scale } else { 1.0 };
                if v > best_val {
                    best_val = v;
                    best = Some(p);
                }
            }
        }
        best
    }

    fn dual_ratio_test(&self, increase: bool) -> Option<usize> {
        let tol = self.opts.dual_tol;
        // alpha-tilde sign convention: candidates must move in the direction
        // that keeps reduced costs feasible.
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for &j in &self.row_nz {
            let a = self.row_vals[j];
            if a.abs() < self.opts.pivot_tol || self.is_fixed(j) {
                continue;
            }
            let at = if increase { -a } else { a };
            let ok = match self.status[j] {
                VarStatus::AtLower => at > 0.0,
                VarStatus::AtUpper => at < 0.0,
                VarStatus::Free => true,
                VarStatus::Basic => false,
            };
            if ok {
                cands.push((j, at, self.d[j]));
            }
        }
        if cands.is_empty() {
            return None;
        }
        let ratio = |&(j, at, d): &(usize, f64, f64)| -> f64 {
            let r = match self.status[j] {
                VarStatus::Free => d.abs() / at.abs(),
                _ => d / at,
            };
            r.max(0.0)
        };
        if self.bland {
            let min = cands.iter().map(ratio).fold(f64::INFINITY, f64::min);
            return cands
                .iter()
                .filter(|c| ratio(c) <= min + 1e-12)
                .map(|c| c.0)
                .min();
        }
        let theta_max = cands
            .iter()
            .map(|&(j, at, d)| match self.status[j] {
                VarStatus::Free => (d.abs() + tol) / at.abs(),
                _ => (d + tol * at.signum()) / at,
            })
            .fold(f64::INFINITY, f64::min);
        let mut best: Option<(usize, f64)> = None;
        for c in &cands {
            if ratio(c) <= theta_max {
                let mag = c.1.abs();
                if best.is_none_or(|(_, bm)| mag > bm) {
                    best = Some((c.0, mag));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn dual_simplex(&mut self) -> Phase {
        let mut retries = 0;
        loop {
            if let Some(st) = self.time_or_iteration_limit() {
                return Phase::Limit(st);
            }
            if !self.maybe_refactor() {
                return Phase::Numerical;
            }
            let p = match self.dual_choose_row() {
                Some(p) => p,
                None => return Phase::Done,
            };
            let leaving = self.head[p];
            let below = self.x[leaving] < self.lower[leaving];
            let delta = if below {
                self.x[leaving] - self.lower[leaving]
            } else {
                self.x[leaving] - self.upper[leaving]
            };
            self.compute_pivot_row(p);
            let q = match self.dual_ratio_test(below) {
                Some(q) => q,
                None => {
                    // recheck with a fresh factorization before declaring
                    if self.factor.num_updates() > 0 && retries < 2 {
                        retries += 1;
                        if !self.refactor() {
                            return Phase::Numerical;
                        }
                        self.compute_primal();
                        self.compute_duals();
                        continue;
                    }
                    return Phase::Infeasible;
                }
            };
            self.ftran_column(q);
            let alpha_rq = self.row_vals[q];
            let alpha_pq = self.alpha[p];
            if (alpha_pq - alpha_rq).abs() > 1e-7 * (1.0 + alpha_pq.abs()) || alpha_pq.abs() < 1e-12 {
                retries += 1;
                if retries > 5 || !self.refactor() {
                    return Phase::Numerical;
                }
                self.compute_primal();
                self.compute_duals();
                continue;
            }
            retries = 0;
            let theta_d = self.d[q] / alpha_pq;
            for k in 0..self.row_nz.len() {
                let j = self.row_nz[k];
                self.d[j] -= theta_d * self.row_vals[j];
            }
            let theta_p = delta / alpha_pq;
            for i in 0..self.sf.m {
                let a = self.alpha[i];
                if a != 0.0 {
                    let j = self.head[i];
                    self.x[j] -= theta_p * a;
                }
            }
            self.x[q] += theta_p;
            let leave_status = if below {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            };
            self.pivot(p, q, leave_status);
            self.d[leaving] = -theta_d;
            self.note_progress((theta_d * delta).abs() > 1e-12);
        }
    }

    // ---- primal simplex -----------------------------------------------

    fn primal_choose_entering(&self, d: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.dual_tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.sf.n + self.sf.m {
            if self.status[j] == VarStatus::Basic || self.is_fixed(j) {
                continue;
            }
            let dj = d[j];
            let dir = match self.status[j] {
                VarStatus::AtLower if dj < -tol => 1.0,
                VarStatus::AtUpper if dj > tol => -1.0,
                VarStatus::Free if dj.abs() > tol => -dj.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(bj, _)| dj.abs() > d[bj].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    /// Primal ratio test for entering `q` moving in direction `dir`.
    /// Returns the step, the leaving position (None for a bound flip) and the
    /// bound status the leaving variable takes. `phase1` relaxes bounds that
    /// basic variables already violate.
    fn primal_ratio_test(&self, q: usize, dir: f64, phase1: bool) -> Option<(f64, Option<(usize, VarStatus)>)> {
        let tol = self.opts.primal_tol;
        let flip = self.upper[q] - self.lower[q];
        // (position, step limit, target status) per blocking variable
        let mut limits: Vec<(usize, f64, f64, VarStatus)> = Vec::new();
        for p in 0..self.sf.m {
            let a = self.alpha[p];
            if a.abs() < self.opts.pivot_tol {
                continue;
            }
            let j = self.head[p];
            let rate = -dir * a; // d x_j / d t
            let (lo, hi, v) = (self.lower[j], self.upper[j], self.x[j]);
            let below = v < lo - self.primal_tol_for(lo);
            let above = v > hi + self.primal_tol_for(hi);
            if phase1 && (below || above) {
                if below && rate > 0.0 {
                    limits.push((p, (lo - v) / rate, rate.abs(), VarStatus::AtLower));
                } else if above && rate < 0.0 {
                    limits.push((p, (v - hi) / -rate, rate.abs(), VarStatus::AtUpper));
                }
                continue;
            }
            if rate < 0.0 && lo.is_finite() {
                limits.push((p, ((v - lo).max(0.0)) / -rate, rate.abs(), VarStatus::AtLower));
            } else if rate > 0.0 && hi.is_finite() {
                limits.push((p, ((hi - v).max(0.0)) / rate, rate.abs(), VarStatus::AtUpper));
            }
        }
        let min_limit = if self.bland {
            limits.iter().map(|l| l.1).fold(f64::INFINITY, f64::min)
        } else {
            // Harris pass one with relaxed bounds
            limits
                .iter()
                .map(|&(p, t, r, st)| {
                    let j = self.head[p];
                    let b = if st == VarStatus::AtLower { self.lower[j] } else { self.upper[j] };
                    t + tol * b.abs().max(1.0) / r
                })
                .fold(f64::INFINITY, f64::min)
        };
        if flip.is_finite() && flip <= min_limit {
            return Some((flip, None));
        }
        if !min_limit.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64, f64, VarStatus)> = None;
        for &(p, t, r, st) in &limits {
            if t <= min_limit {
                let better = match best {
                    None => true,
                    Some((bp, _, br, _)) => {
                        if self.bland {
                            self.head[p] < self.head[bp]
                        } else {
                            r > br
                        }
                    }
                };
                if better {
                    best = Some((p, t, r, st));
                }
            }
        }
        best.map(|(p, t, _, st)| (t, Some((p, st))))
    }

    fn apply_primal_step(&mut self, q: usize, step: f64) {
        for p in 0..self.sf.m {
            let a = self.alpha[p];
            if a != 0.0 {
                let j = self.head[p];
                self.x[j] -= step * a;
            }
        }
        self.x[q] += step;
    }

    fn primal_simplex(&mut self, phase1: bool) -> Phase {
        let mut retries = 0;
        let total = self.sf.n + self.sf.m;
        let mut d1 = vec![0.0; total];
        loop {
            if let Some(st) = self.time_or_iteration_limit() {
                return Phase::Limit(st);
            }
            if !self.maybe_refactor() {
                return Phase::Numerical;
            }
            if phase1 {
                // composite infeasibility costs
                let mut any = false;
                for p in 0..self.sf.m {
                    let j = self.head[p];
                    let (lo, hi, v) = (self.lower[j], self.upper[j], self.x[j]);
                    self.work[p] = if v < lo - self.primal_tol_for(lo) {
                        any = true;
                        -1.0
                    } else if v > hi + self.primal_tol_for(hi) {
                        any = true;
                        1.0
                    } else {
                        0.0
                    };
                }
                if !any {
                    return Phase::Done;
                }
                let mut y = std::mem::take(&mut self.work);
                self.factor.btran(&mut y);
                for j in 0..total {
                    d1[j] = if self.status[j] == VarStatus::Basic {
                        0.0
                    } else if j < self.sf.n {
                        -self.sf.a.column(j).map(|(i, a)| y[i] * a).sum::<f64>()
                    } else {
                        y[j - self.sf.n]
                    };
                }
                self.work = y;
            }
            let entering = if phase1 {
                self.primal_choose_entering(&d1)
            } else {
                self.primal_choose_entering(&self.d)
            };
            let (q, dir) = match entering {
                Some(e) => e,
                None => {
                    return if phase1 { Phase::Infeasible } else { Phase::Done };
                }
            };
            self.ftran_column(q);
            let (step, leave) = match self.primal_ratio_test(q, dir, phase1) {
                Some(r) => r,
                None => {
                    if phase1 {
                        // a phase one direction cannot be unbounded
                        return Phase::Numerical;
                    }
                    if self.factor.num_updates() > 0 && retries < 2 {
                        retries += 1;
                        if !self.refactor() {
                            return Phase::Numerical;
                        }
                        self.compute_primal();
                        self.compute_duals();
                        continue;
                    }
                    return Phase::Unbounded;
                }
            };
            let dq = if phase1 { d1[q] } else { self.d[q] };
            match leave {
                None => {
                    self.apply_primal_step(q, dir * step);
                    self.status[q] = if dir > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                    self.iterations += 1;
                    self.note_progress(step * dq.abs() > 1e-12);
                }
                Some((p, leave_status)) => {
                    let alpha_pq = self.alpha[p];
                    if !phase1 {
                        self.compute_pivot_row(p);
                        let alpha_rq = self.row_vals[q];
                        if (alpha_pq - alpha_rq).abs() > 1e-7 * (1.0 + alpha_pq.abs()) {
                            retries += 1;
                            if retries > 5 || !self.refactor() {
                                return Phase::Numerical;
                            }
                            self.compute_primal();
                            self.compute_duals();
                            continue;
                        }
                        let theta_d = self.d[q] / alpha_pq;
                        for k in 0..self.row_nz.len() {
                            let j = self.row_nz[k];
                            self.d[j] -= theta_d * self.row_vals[j];
                        }
                        let leaving = self.head[p];
                        self.apply_primal_step(q, dir * step);
                        self.pivot(p, q, leave_status);
                        self.d[leaving] = -theta_d;
                    } else {
                        self.apply_primal_step(q, dir * step);
                        self.pivot(p, q, leave_status);
                    }
                    retries = 0;
                    self.note_progress(step * dq.abs() > 1e-12);
                }
            }
        }
    }

    // ---- driver -------------------------------------------------------

    pub(crate) fn run(&mut self) -> LpSolution {
        let status = self.run_inner();
        self.extract(status)
    }

    fn run_inner(&mut self) -> LpStatus {
        if !self.refactor() {
            return LpStatus::NumericalFailure;
        }
        self.compute_primal();
        self.compute_duals();
        let primal_only = self.opts.algorithm == Algorithm::Primal;
        for _round in 0..50 {
            let pf = self.is_primal_feasible();
            let df = self.is_dual_feasible();
            if pf && df {
                return LpStatus::Optimal;
            }
            let phase = if df && !primal_only {
                self.dual_simplex()
            } else if pf {
                self.primal_simplex(false)
            } else if !primal_only && self.flip_dual_infeasible_boxed() {
                self.compute_primal();
                continue;
            } else {
                match self.primal_simplex(true) {
                    Phase::Done => {
                        self.compute_duals();
                        self.primal_simplex(false)
                    }
                    other => other,
                }
            };
            match phase {
                Phase::Done => {}
                Phase::Infeasible => return LpStatus::Infeasible,
                Phase::Unbounded => return LpStatus::Unbounded,
                Phase::Limit(st) => return st,
                Phase::Numerical => return LpStatus::NumericalFailure,
            }
            if !self.refactor() {
                return LpStatus::NumericalFailure;
            }
            self.compute_primal();
            self.compute_duals();
            if !primal_only && self.is_primal_feasible() && !self.is_dual_feasible() {
                // boxed dual infeasibilities after the dual phase are flipped;
                // anything left goes to the primal simplex next round
                let before = self.x.clone();
                if self.flip_dual_infeasible_boxed() {
                    self.compute_primal();
                    if !self.is_primal_feasible() && self.is_dual_feasible() {
                        continue;
                    }
                    // flipping broke feasibility without fixing duals; undo
                    self.x = before;
                    for j in 0..self.sf.n + self.sf.m {
                        if self.status[j] != VarStatus::Basic {
                            self.status[j] = if self.x[j] == self.lower[j] && self.lower[j].is_finite() {
                                VarStatus::AtLower
                            } else if self.x[j] == self.upper[j] && self.upper[j].is_finite() {
                                VarStatus::AtUpper
                            } else {
                                self.status[j]
                            };
                        }
                    }
                    self.compute_primal();
                }
            }
        }
        LpStatus::NumericalFailure
    }

    pub(crate) fn extract(&mut self, status: LpStatus) -> LpSolution {
        let n = self.sf.n;
        let m = self.sf.m;
        let sign = self.sf.sign;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective: f64 = (0..n).map(|j| self.sf.cost[j] * x[j]).sum::<f64>() * sign;
        let row_activity = self.x[n..n + m].to_vec();
        let mut y = vec![0.0; m];
        if m > 0 && status == LpStatus::Optimal {
            for p in 0..m {
                y[p] = self.sf.cost[self.head[p]];
            }
            self.factor.btran(&mut y);
        }
        LpSolution {
            status,
            x,
            objective,
            row_activity,
            duals: y.iter().map(|v| v * sign).collect(),
            reduced_costs: self.d[..n].iter().map(|v| v * sign).collect(),
            iterations: self.iterations,
            basis: Basis {
                status: self.status.clone(),
            },
        }
    }
}
