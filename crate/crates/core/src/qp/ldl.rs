//! Sparse LDLᵀ factorization of quasi-definite matrices.
//!
//! Up-looking factorization over an elimination tree, with a fill-reducing
//! AMD permutation computed once per sparsity pattern. Numeric refactorization
//! on the same pattern (new values, e.g. after a penalty update) skips the
//! ordering and symbolic phases.

use super::sparse::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LdlError {
    #[error("matrix is not upper triangular")]
    NotUpper,
    #[error("zero pivot at column {0}")]
    ZeroPivot(usize),
    #[error("fill-reducing ordering failed")]
    Ordering,
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    permuted: CscMatrix,
    /// Position in `permuted.values` of each entry of the caller's upper triangle.
    entry_map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    /// Orders, analyses and factors the symmetric matrix whose upper triangle
    /// (including every diagonal entry) is `upper`.
    pub fn new(upper: &CscMatrix) -> Result<Self, LdlError> {
        let n = upper.ncols;
        assert_eq!(upper.nrows, n);
        if upper.triplets().any(|(r, c, _)| r > c) {
            return Err(LdlError::NotUpper);
        }

        let (perm, iperm) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let control = amd::Control::default();
            let (p, pinv, _) =
                amd::order::<usize>(n, &upper.colptr, &upper.rowidx, &control).map_err(|_| LdlError::Ordering)?;
            (p, pinv)
        };

        let triplets: Vec<_> = upper
            .triplets()
            .map(|(r, c, v)| {
                let (pr, pc) = (iperm[r], iperm[c]);
                (pr.min(pc), pr.max(pc), v)
            })
            .collect();
        let permuted = CscMatrix::from_triplets(n, n, &triplets);
        let entry_map = triplets
            .iter()
            .map(|&(r, c, _)| {
                let range = permuted.colptr[c]..permuted.colptr[c + 1];
                range.start + permuted.rowidx[range].binary_search(&r).expect("entry present")
            })
            .collect();

        let (etree, lnz) = elimination_tree(&permuted);
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut ldl = Self {
            n,
            perm,
            iperm,
            permuted,
            entry_map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        ldl.factor_numeric()?;
        Ok(ldl)
    }

    /// Refactors with new values for the same upper-triangular pattern that
    /// was passed to [`Ldl::new`]; `values` is indexed like `upper.values`.
    pub fn refactor(&mut self, values: &[f64]) -> Result<(), LdlError> {
        assert_eq!(values.len(), self.entry_map.len());
        self.permuted.values.iter_mut().for_each(|v| *v = 0.0);
        for (k, &pos) in self.entry_map.iter().enumerate() {
            self.permuted.values[pos] += values[k];
        }
        self.factor_numeric()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Number of strictly positive pivots in D.
    pub fn positive_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v > 0.0).count()
    }

    fn factor_numeric(&mut self) -> Result<(), LdlError> {
        let n = self.n;
        if n == 0 {
            return Ok(());
        }
        let a = &self.permuted;
        let mut y_vals = vec![0.0; n];
        let mut y_marker = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            self.d[k] = 0.0;
            let mut nnz_y = 0;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let b = a.rowidx[p];
                if b == k {
                    self.d[k] = a.values[p];
                    continue;
                }
                y_vals[b] = a.values[p];
                if !y_marker[b] {
                    y_marker[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_marker[next] {
                            break;
                        }
                        y_marker[next] = true;
                        elim[ne] = next;
                        ne += 1;
                        next = self.etree[next];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }

            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marker[c] = false;
            }

            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(LdlError::ZeroPivot(self.perm[k]));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `K x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let mut work = vec![0.0; self.n];
        self.solve_with_work(b, &mut work);
    }

    /// Same as [`Ldl::solve_in_place`] with caller-owned scratch of length
    /// `dim()`, for hot loops.
    pub fn solve_with_work(&self, b: &mut [f64], work: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        assert_eq!(work.len(), n);
        let x = work;
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for i in 0..n {
            b[i] = x[self.iperm[i]];
        }
    }
}

fn elimination_tree(a: &CscMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = a.ncols;
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for p in a.colptr[j]..a.colptr[j + 1] {
            let mut i = a.rowidx[p];
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::sparse::sym_upper_mul_vec;

    fn quasi_definite() -> CscMatrix {
        // [ 4 1 | 1 0 ]
        // [ 1 3 | 0 2 ]
        // [ 1 0 |-1 0 ]
        // [ 0 2 | 0 -2]
        CscMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 1, 3.0),
                (0, 2, 1.0),
                (2, 2, -1.0),
                (1, 3, 2.0),
                (3, 3, -2.0),
            ],
        )
    }

    #[test]
    fn solves_quasi_definite_system() {
        let k = quasi_definite();
        let ldl = Ldl::new(&k).unwrap();
        let truth = [1.0, -2.0, 0.5, 3.0];
        let mut b = sym_upper_mul_vec(&k, &truth);
        ldl.solve_in_place(&mut b);
        for (x, t) in b.iter().zip(truth) {
            assert!((x - t).abs() < 1e-12, "{x} vs {t}");
        }
        assert_eq!(ldl.positive_pivots(), 2);
    }

    #[test]
    fn refactor_with_new_values() {
        let k = quasi_definite();
        let mut ldl = Ldl::new(&k).unwrap();
        let mut k2 = k.clone();
        k2.values.iter_mut().for_each(|v| *v *= 2.0);
        ldl.refactor(&k2.values).unwrap();
        let truth = [0.3, 0.1, -0.7, 2.0];
        let mut b = sym_upper_mul_vec(&k2, &truth);
        ldl.solve_in_place(&mut b);
        for (x, t) in b.iter().zip(truth) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let k = CscMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (1, 1, 1.0)]);
        assert!(matches!(Ldl::new(&k), Err(LdlError::ZeroPivot(0))));
    }

    #[test]
    fn rejects_lower_entries() {
        let k = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(Ldl::new(&k), Err(LdlError::NotUpper)));
    }
}
