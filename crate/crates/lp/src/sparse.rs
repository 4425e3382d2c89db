/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    start: Vec<usize>,
    index: Vec<usize>,
    value: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// entries within a column are sorted by row.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(_, c, _) in triplets {
            counts[c + 1] += 1;
        }
        for j in 0..ncols {
            counts[j + 1] += counts[j];
        }
        let mut fill = counts.clone();
        let mut index = vec![0usize; triplets.len()];
        let mut value = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let k = fill[c];
            index[k] = r;
            value[k] = v;
            fill[c] += 1;
        }

        let mut out_start = Vec::with_capacity(ncols + 1);
        let mut out_index = Vec::with_capacity(triplets.len());
        let mut out_value = Vec::with_capacity(triplets.len());
        out_start.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for j in 0..ncols {
            scratch.clear();
            scratch.extend((counts[j]..counts[j + 1]).map(|k| (index[k], value[k])));
            scratch.sort_by_key(|&(r, _)| r);
            let mut k = 0;
            while k < scratch.len() {
                let r = scratch[k].0;
                let mut v = 0.0;
                while k < scratch.len() && scratch[k].0 == r {
                    v += scratch[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    out_index.push(r);
                    out_value.push(v);
                }
            }
            out_start.push(out_index.len());
        }
        Self {
            nrows,
            ncols,
            start: out_start,
            index: out_index,
            value: out_value,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.index.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.start[j]..self.start[j + 1];
        self.index[range.clone()]
            .iter()
            .copied()
            .zip(self.value[range].iter().copied())
    }

    pub fn column_len(&self, j: usize) -> usize {
        self.start[j + 1] - self.start[j]
    }

    pub fn column_slices(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.start[j]..self.start[j + 1];
        (&self.index[range.clone()], &self.value[range])
    }

    /// Transpose, i.e. the same matrix in compressed-row form.
    pub fn transpose(&self) -> CscMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                triplets.push((j, i, v));
            }
        }
        CscMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.column_slices(j);
        match idx.binary_search(&i) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                d[i][j] = v;
            }
        }
        d
    }
}
