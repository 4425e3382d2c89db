//! Sparse LU factorization of simplex bases with product-form updates.
//!
//! The factorization is right-looking with Markowitz pivot selection. Column
//! and row singletons are taken first, which makes the mostly-triangular
//! bases that arise from dominance formulations almost free to factor.

const PIVOT_THRESHOLD: f64 = 0.1;
const ABS_PIVOT_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;
const MARKOWITZ_SEARCH_COLS: usize = 4;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Singular {
    /// Basis positions that could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot, paired index-wise with `positions`.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BasisFactor {
    m: usize,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    u_diag: Vec<f64>,
    l_start: Vec<usize>,
    l_index: Vec<usize>,
    l_value: Vec<f64>,
    u_start: Vec<usize>,
    u_index: Vec<usize>,
    u_value: Vec<f64>,
    eta_pos: Vec<usize>,
    eta_piv: Vec<f64>,
    eta_start: Vec<usize>,
    eta_index: Vec<usize>,
    eta_value: Vec<f64>,
    scratch: Vec<f64>,
}

impl BasisFactor {
    pub fn num_updates(&self) -> usize {
        self.eta_pos.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.eta_index.len()
    }

    pub fn lu_nnz(&self) -> usize {
        self.l_index.len() + self.u_index.len() + self.u_diag.len()
    }

    /// Factorizes the basis whose column at position `p` is `columns[p]`
    /// (row index, value pairs).
    pub fn factorize(&mut self, m: usize, columns: &[Vec<(usize, f64)>]) -> Result<(), Singular> {
        debug_assert_eq!(columns.len(), m);
        self.m = m;
        self.piv_row.clear();
        self.piv_col.clear();
        self.u_diag.clear();
        self.l_start.clear();
        self.l_index.clear();
        self.l_value.clear();
        self.u_start.clear();
        self.u_index.clear();
        self.u_value.clear();
        self.eta_pos.clear();
        self.eta_piv.clear();
        self.eta_start.clear();
        self.eta_index.clear();
        self.eta_value.clear();
        self.l_start.push(0);
        self.u_start.push(0);
        self.eta_start.push(0);
        self.scratch.clear();
        self.scratch.resize(m, 0.0);

        let mut active = ActiveMatrix::new(m, columns);
        let mut pos_map = vec![NONE; m];

        while let Some((r, c, piv)) = active.choose_pivot() {
            self.eliminate(&mut active, &mut pos_map, r, c, piv);
        }

        if self.piv_row.len() < m {
            let mut rows: Vec<usize> = (0..m).filter(|&r| !active.row_done[r]).collect();
            let mut positions: Vec<usize> = (0..m).filter(|&c| !active.col_done[c]).collect();
            rows.sort_unstable();
            positions.sort_unstable();
            return Err(Singular { positions, rows });
        }
        Ok(())
    }

    fn eliminate(
        &mut self,
        active: &mut ActiveMatrix,
        pos_map: &mut [usize],
        r: usize,
        c: usize,
        piv: f64,
    ) {
        let prow = std::mem::take(&mut active.rows[r]);
        active.row_done[r] = true;
        active.col_done[c] = true;
        self.piv_row.push(r);
        self.piv_col.push(c);
        self.u_diag.push(piv);
        for &(cj, v) in &prow {
            if cj != c {
                self.u_index.push(cj);
                self.u_value.push(v);
                // the pivot row now counts as done, so the entry goes stale
                active.col_count[cj] -= 1;
                active.bump_col(cj);
            }
        }
        self.u_start.push(self.u_index.len());

        let crows = std::mem::take(&mut active.cols[c]);
        active.col_count[c] = 0;
        for i in crows {
            if active.row_done[i] {
                continue;
            }
            let k = match active.rows[i].iter().position(|&(cj, _)| cj == c) {
                Some(k) => k,
                None => continue,
            };
            let a_ic = active.rows[i].swap_remove(k).1;
            let l = a_ic / piv;
            self.l_index.push(i);
            self.l_value.push(l);

            for (k, &(cj, _)) in active.rows[i].iter().enumerate() {
                pos_map[cj] = k;
            }
            let mut cancelled: Vec<usize> = Vec::new();
            for &(cj, v) in &prow {
                if cj == c {
                    continue;
                }
                let delta = -l * v;
                let k = pos_map[cj];
                if k != NONE {
                    let old = active.rows[i][k].1;
                    let new = old + delta;
                    active.rows[i][k].1 = new;
                    if new.abs() <= DROP_TOL * old.abs().max(delta.abs()) {
                        cancelled.push(cj);
                    }
                } else {
                    active.rows[i].push((cj, delta));
                    active.cols[cj].push(i);
                    active.col_count[cj] += 1;
                    active.bump_col(cj);
                }
            }
            for &(cj, _) in active.rows[i].iter() {
                pos_map[cj] = NONE;
            }
            for cj in cancelled {
                if let Some(k) = active.rows[i].iter().position(|&(x, _)| x == cj) {
                    active.rows[i].swap_remove(k);
                }
                active.remove_row_from_col(cj, i);
            }
            active.bump_row(i);
        }
        self.l_start.push(self.l_index.len());
    }

    /// Solves `B y = rhs` in place; `rhs` is indexed by row on entry and by
    /// basis position on exit.
    pub fn ftran(&mut self, rhs: &mut [f64]) {
        let m = self.m;
        for k in 0..self.piv_row.len() {
            let wr = rhs[self.piv_row[k]];
            if wr == 0.0 {
                continue;
            }
            for t in self.l_start[k]..self.l_start[k + 1] {
                rhs[self.l_index[t]] -= self.l_value[t] * wr;
            }
        }
        let out = &mut self.scratch;
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in (0..self.piv_row.len()).rev() {
            let mut s = rhs[self.piv_row[k]];
            for t in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_value[t] * out[self.u_index[t]];
            }
            out[self.piv_col[k]] = s / self.u_diag[k];
        }
        rhs[..m].copy_from_slice(&out[..m]);
        for e in 0..self.eta_pos.len() {
            let p = self.eta_pos[e];
            let vp = rhs[p] / self.eta_piv[e];
            rhs[p] = vp;
            if vp == 0.0 {
                continue;
            }
            for t in self.eta_start[e]..self.eta_start[e + 1] {
                rhs[self.eta_index[t]] -= self.eta_value[t] * vp;
            }
        }
    }

    /// Solves `B^T z = rhs` in place; `rhs` is indexed by basis position on
    /// entry and by row on exit.
    pub fn btran(&mut self, rhs: &mut [f64]) {
        let m = self.m;
        for e in (0..self.eta_pos.len()).rev() {
            let p = self.eta_pos[e];
            let mut s = rhs[p];
            for t in self.eta_start[e]..self.eta_start[e + 1] {
                s -= self.eta_value[t] * rhs[self.eta_index[t]];
            }
            rhs[p] = s / self.eta_piv[e];
        }
        let v = &mut self.scratch;
        v.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..self.piv_row.len() {
            let vr = rhs[self.piv_col[k]] / self.u_diag[k];
            v[self.piv_row[k]] = vr;
            if vr == 0.0 {
                continue;
            }
            for t in self.u_start[k]..self.u_start[k + 1] {
                rhs[self.u_index[t]] -= self.u_value[t] * vr;
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let r = self.piv_row[k];
            let mut s = v[r];
            for t in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_value[t] * v[self.l_index[t]];
            }
            v[r] = s;
        }
        rhs[..m].copy_from_slice(&v[..m]);
    }

    /// Records the replacement of the column at basis position `p` by a
    /// column whose FTRAN image is `alpha` (position-indexed).
    pub fn update(&mut self, p: usize, alpha: &[f64]) {
        self.eta_pos.push(p);
        self.eta_piv.push(alpha[p]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != p && a != 0.0 && a.abs() > 1e-14 {
                self.eta_index.push(i);
                self.eta_value.push(a);
            }
        }
        self.eta_start.push(self.eta_index.len());
    }
}

/// Active submatrix during elimination. Column lists may hold rows that are
/// already pivoted; `col_count` is exact and lists are compacted on use.
struct ActiveMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<usize>>,
    col_count: Vec<usize>,
    row_done: Vec<bool>,
    col_done: Vec<bool>,
    col_singletons: Vec<usize>,
    row_singletons: Vec<usize>,
    col_buckets: Vec<Vec<usize>>,
}

impl ActiveMatrix {
    fn new(m: usize, columns: &[Vec<(usize, f64)>]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (c, col) in columns.iter().enumerate() {
            for &(r, v) in col {
                if v != 0.0 {
                    rows[r].push((c, v));
                    cols[c].push(r);
                }
            }
        }
        let col_count = cols.iter().map(Vec::len).collect();
        let mut me = Self {
            rows,
            cols,
            col_count,
            row_done: vec![false; m],
            col_done: vec![false; m],
            col_singletons: Vec::new(),
            row_singletons: Vec::new(),
            col_buckets: vec![Vec::new(); m + 1],
        };
        for c in (0..m).rev() {
            let n = me.cols[c].len();
            if n == 1 {
                me.col_singletons.push(c);
            }
            me.col_buckets[n.min(m)].push(c);
        }
        for r in (0..m).rev() {
            if me.rows[r].len() == 1 {
                me.row_singletons.push(r);
            }
        }
        me
    }

    fn remove_row_from_col(&mut self, c: usize, r: usize) {
        if let Some(k) = self.cols[c].iter().position(|&i| i == r) {
            self.cols[c].swap_remove(k);
            self.col_count[c] -= 1;
            if !self.col_done[c] {
                self.bump_col(c);
            }
        }
    }

    fn compact_col(&mut self, c: usize) {
        if self.cols[c].len() != self.col_count[c] {
            let done = &self.row_done;
            self.cols[c].retain(|&r| !done[r]);
            debug_assert_eq!(self.cols[c].len(), self.col_count[c]);
        }
    }

    fn bump_col(&mut self, c: usize) {
        if self.col_done[c] {
            return;
        }
        let n = self.col_count[c];
        if n == 1 {
            self.col_singletons.push(c);
        }
        let n = n.min(self.col_buckets.len() - 1);
        self.col_buckets[n].push(c);
    }

    fn bump_row(&mut self, r: usize) {
        if self.rows[r].len() == 1 {
            self.row_singletons.push(r);
        }
    }

    fn value(&self, r: usize, c: usize) -> f64 {
        self.rows[r]
            .iter()
            .find(|&&(cj, _)| cj == c)
            .map(|&(_, v)| v)
            .unwrap_or(0.0)
    }

    /// Requires a compacted column.
    fn col_max(&self, c: usize) -> f64 {
        self.cols[c]
            .iter()
            .map(|&r| self.value(r, c).abs())
            .fold(0.0, f64::max)
    }

    fn choose_pivot(&mut self) -> Option<(usize, usize, f64)> {
        while let Some(c) = self.col_singletons.pop() {
            if self.col_done[c] || self.col_count[c] != 1 {
                continue;
            }
            self.compact_col(c);
            let r = self.cols[c][0];
            let v = self.value(r, c);
            if v.abs() > ABS_PIVOT_TOL {
                return Some((r, c, v));
            }
        }
        while let Some(r) = self.row_singletons.pop() {
            if self.row_done[r] || self.rows[r].len() != 1 {
                continue;
            }
            let (c, v) = self.rows[r][0];
            self.compact_col(c);
            if v.abs() > ABS_PIVOT_TOL && v.abs() >= PIVOT_THRESHOLD * self.col_max(c) {
                return Some((r, c, v));
            }
        }
        self.markowitz()
    }

    fn markowitz(&mut self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64, usize)> = None;
        let mut searched = 0;
        for count in 1..self.col_buckets.len() {
            if let Some((_, _, _, cost)) = best {
                if cost <= (count - 1) * (count - 1) {
                    break;
                }
            }
            let mut k = 0;
            while k < self.col_buckets[count].len() {
                let c = self.col_buckets[count][k];
                if self.col_done[c] || self.col_count[c] != count {
                    // stale entry
                    self.col_buckets[count].swap_remove(k);
                    continue;
                }
                k += 1;
                self.compact_col(c);
                let cmax = self.col_max(c);
                if cmax <= ABS_PIVOT_TOL {
                    continue;
                }
                for &r in &self.cols[c] {
                    let v = self.value(r, c);
                    if v.abs() < PIVOT_THRESHOLD * cmax || v.abs() <= ABS_PIVOT_TOL {
                        continue;
                    }
                    let cost = (self.rows[r].len() - 1) * (count - 1);
                    let better = match best {
                        None => true,
                        Some((_, _, bv, bc)) => cost < bc || (cost == bc && v.abs() > bv.abs()),
                    };
                    if better {
                        best = Some((r, c, v, cost));
                    }
                }
                searched += 1;
                if best.is_some() && searched >= MARKOWITZ_SEARCH_COLS {
                    break;
                }
            }
            if best.is_some() && searched >= MARKOWITZ_SEARCH_COLS {
                break;
            }
        }
        best.map(|(r, c, v, _)| (r, c, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|j| {
                (0..m)
                    .filter(|&i| a[i][j] != 0.0)
                    .map(|i| (i, a[i][j]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    fn matvec_t(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let m = a.len();
        (0..m)
            .map(|j| (0..m).map(|i| a[i][j] * x[i]).sum())
            .collect()
    }

    fn sample() -> Vec<Vec<f64>> {
        vec![
            vec![4.0, 0.0, 1.0, 0.0, 2.0],
            vec![0.0, 3.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 5.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 6.0, 1.0],
            vec![2.0, 0.0, 0.0, 1.0, 7.0],
        ]
    }

    #[test]
    fn ftran_and_btran_solve_the_system() {
        let a = sample();
        let mut f = BasisFactor::default();
        f.factorize(5, &dense_cols(&a)).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let mut y = b.clone();
        f.ftran(&mut y);
        let r = matvec(&a, &y);
        for i in 0..5 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
        let mut z = b.clone();
        f.btran(&mut z);
        let r = matvec_t(&a, &z);
        for i in 0..5 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = sample();
        let mut f = BasisFactor::default();
        f.factorize(5, &dense_cols(&a)).unwrap();
        let newcol = vec![1.0, 1.0, 0.0, -3.0, 2.0];
        let mut alpha = newcol.clone();
        f.ftran(&mut alpha);
        f.update(2, &alpha);
        for i in 0..5 {
            a[i][2] = newcol[i];
        }
        let b = vec![0.3, 1.0, -1.0, 2.0, 0.0];
        let mut y = b.clone();
        f.ftran(&mut y);
        let r = matvec(&a, &y);
        for i in 0..5 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
        let mut z = b.clone();
        f.btran(&mut z);
        let r = matvec_t(&a, &z);
        for i in 0..5 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_basis_reports_unpivoted_positions() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![2.0, 4.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let mut f = BasisFactor::default();
        let err = f.factorize(3, &dense_cols(&a)).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
