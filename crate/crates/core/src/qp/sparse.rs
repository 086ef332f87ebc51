//! Compressed sparse column storage and the handful of kernels the solver needs.

/// A sparse matrix in compressed sparse column form.
///
/// Row indices within a column are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowidx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed;
    /// explicit zeros that survive summation are kept so the pattern is stable.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[c + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let p = next[c];
            rows[p] = r;
            vals[p] = v;
            next[c] += 1;
        }

        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowidx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        colptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for c in 0..ncols {
            order.clear();
            order.extend(counts[c]..counts[c + 1]);
            order.sort_by_key(|&p| rows[p]);
            let mut last: Option<usize> = None;
            for &p in &order {
                if last == Some(rows[p]) {
                    *values.last_mut().unwrap() += vals[p];
                } else {
                    rowidx.push(rows[p]);
                    values.push(vals[p]);
                    last = Some(rows[p]);
                }
            }
            colptr.push(rowidx.len());
        }
        Self {
            nrows,
            ncols,
            colptr,
            rowidx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rowidx.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols)
            .flat_map(move |c| (self.colptr[c]..self.colptr[c + 1]).map(move |p| (self.rowidx[p], c, self.values[p])))
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowidx[p]] += self.values[p] * xc;
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.tmul_vec_into(x, &mut y);
        y
    }

    pub fn tmul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[p] * x[self.rowidx[p]];
            }
            y[c] = acc;
        }
    }

    /// Scales rows by `left` and columns by `right`: `diag(left) A diag(right)`.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for c in 0..self.ncols {
            for p in self.colptr[c]..self.colptr[c + 1] {
                self.values[p] *= left[self.rowidx[p]] * right[c];
            }
        }
    }

    /// Infinity norm of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| {
                self.values[self.colptr[c]..self.colptr[c + 1]]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .collect()
    }

    /// Infinity norm of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (r, _, v) in self.triplets() {
            out[r] = out[r].max(v.abs());
        }
        out
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.colptr[col]..self.colptr[col + 1];
        match self.rowidx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Keeps only the entries with `row <= col`.
    pub fn upper_triangle(&self) -> Self {
        let t: Vec<_> = self.triplets().filter(|&(r, c, _)| r <= c).collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.nrows];
        for (k, &r) in rows.iter().enumerate() {
            map[r] = k;
        }
        let t: Vec<_> = self
            .triplets()
            .filter(|&(r, _, _)| map[r] != usize::MAX)
            .map(|(r, c, v)| (map[r], c, v))
            .collect();
        Self::from_triplets(rows.len(), self.ncols, &t)
    }

    /// Stacks `self` on top of `other` (same column count).
    pub fn vstack(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.ncols);
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(r, c, v)| (r + self.nrows, c, v)));
        Self::from_triplets(self.nrows + other.nrows, self.ncols, &t)
    }
}

/// `y = S x` for a symmetric matrix of which only the upper triangle is stored.
pub fn sym_upper_mul_vec(upper: &CscMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; upper.nrows];
    for (r, c, v) in upper.triplets() {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
    y
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CscMatrix::from_triplets(3, 2, &[(2, 0, 1.0), (0, 0, 2.0), (2, 0, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.colptr, vec![0, 2, 3]);
        assert_eq!(m.rowidx, vec![0, 2, 1]);
        assert_eq!(m.values, vec![2.0, 4.0, -1.0]);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn products_agree_with_dense() {
        let m = CscMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (1, 0, 2.0), (0, 2, 3.0), (1, 1, 4.0)]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![4.0, 6.0]);
        assert_eq!(m.tmul_vec(&[1.0, 2.0]), vec![5.0, 8.0, 3.0]);
        assert_eq!(m.transpose().mul_vec(&[1.0, 2.0]), vec![5.0, 8.0, 3.0]);
    }

    #[test]
    fn symmetric_upper_product() {
        // [[2, 1], [1, 3]]
        let u = CscMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]);
        assert_eq!(sym_upper_mul_vec(&u, &[1.0, 2.0]), vec![4.0, 7.0]);
    }
}
