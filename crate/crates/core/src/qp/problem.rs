use std::io::Write;

use super::ldl::Ldl;
use super::sparse::{dot, CscMatrix};
use crate::error::{Error, Result};

/// A convex quadratic program in standard form:
///
/// ```text
/// minimize    ½ xᵀ Q x + cᵀ x
/// subject to  A_eq x  = b_eq
///             A_in x <= b_in
/// ```
///
/// `q` stores the full symmetric matrix. Row labels name the constraint
/// family each row belongs to, which is what infeasibility reports point at.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub n: usize,
    pub q: CscMatrix,
    pub c: Vec<f64>,
    pub a_eq: CscMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: CscMatrix,
    pub b_in: Vec<f64>,
    pub var_names: Vec<String>,
    pub eq_labels: Vec<String>,
    pub in_labels: Vec<String>,
}

impl QpProblem {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.q.mul_vec(x)) + dot(&self.c, x)
    }

    /// Checks dimensions, symmetry and positive semidefiniteness of `Q`.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let dims_ok = self.q.nrows == n
            && self.q.ncols == n
            && self.c.len() == n
            && self.a_eq.ncols == n
            && self.a_in.ncols == n
            && self.a_eq.nrows == self.b_eq.len()
            && self.a_in.nrows == self.b_in.len()
            && self.var_names.len() == n
            && self.eq_labels.len() == self.b_eq.len()
            && self.in_labels.len() == self.b_in.len();
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "n={n}, Q={}x{}, c={}, A_eq={}x{} (b_eq {}), A_in={}x{} (b_in {})",
                self.q.nrows,
                self.q.ncols,
                self.c.len(),
                self.a_eq.nrows,
                self.a_eq.ncols,
                self.b_eq.len(),
                self.a_in.nrows,
                self.a_in.ncols,
                self.b_in.len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.c) || !finite(&self.q.values) || !finite(&self.a_eq.values) || !finite(&self.a_in.values) {
            return Err(Error::Dimension("non-finite problem data".into()));
        }

        let scale = self.q.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (r, c, v) in self.q.triplets() {
            if (v - self.q.get(c, r)).abs() > 1e-12 * scale {
                return Err(Error::NotPsd(format!("Q is not symmetric at ({r}, {c})")));
            }
        }
        if !is_psd(&self.q) {
            return Err(Error::NotPsd("Q has a negative eigenvalue beyond tolerance".into()));
        }
        Ok(())
    }

    /// Writes a plain-text dump: a header line, then one section per matrix
    /// or vector in `row col value` / `index value` form.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# qp n={} m_eq={} m_in={}", self.n, self.b_eq.len(), self.b_in.len())?;
        writeln!(w, "[vars]")?;
        for (i, name) in self.var_names.iter().enumerate() {
            writeln!(w, "{i} {name}")?;
        }
        writeln!(w, "[Q]")?;
        for (r, c, v) in self.q.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        writeln!(w, "[c]")?;
        for (i, v) in self.c.iter().enumerate() {
            writeln!(w, "{i} {v:e}")?;
        }
        writeln!(w, "[A_eq]")?;
        for (r, c, v) in self.a_eq.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        writeln!(w, "[b_eq]")?;
        for (i, v) in self.b_eq.iter().enumerate() {
            writeln!(w, "{i} {v:e} {}", self.eq_labels[i])?;
        }
        writeln!(w, "[A_in]")?;
        for (r, c, v) in self.a_in.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        writeln!(w, "[b_in]")?;
        for (i, v) in self.b_in.iter().enumerate() {
            writeln!(w, "{i} {v:e} {}", self.in_labels[i])?;
        }
        Ok(())
    }
}

fn is_psd(q: &CscMatrix) -> bool {
    let n = q.ncols;
    let mut diag = vec![0.0; n];
    let mut offsum = vec![0.0; n];
    for (r, c, v) in q.triplets() {
        if r == c {
            diag[r] = v;
        } else {
            offsum[c] += v.abs();
        }
    }
    let scale = diag.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if diag.iter().zip(&offsum).all(|(d, o)| d - o >= -1e-12 * scale) {
        return true;
    }
    // Q + δI is positive definite iff every LDLᵀ pivot is positive.
    let delta = 1e-9 * scale;
    let mut t: Vec<_> = q.triplets().filter(|&(r, c, _)| r <= c).collect();
    t.extend((0..n).map(|i| (i, i, delta)));
    let shifted = CscMatrix::from_triplets(n, n, &t);
    match Ldl::new(&shifted) {
        Ok(f) => f.positive_pivots() == n,
        Err(_) => false,
    }
}

/// Incremental construction of a [`QpProblem`].
#[derive(Debug, Default, Clone)]
pub struct QpBuilder {
    names: Vec<String>,
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    eq: Vec<(usize, usize, f64)>,
    b_eq: Vec<f64>,
    eq_labels: Vec<String>,
    ineq: Vec<(usize, usize, f64)>,
    b_in: Vec<f64>,
    in_labels: Vec<String>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.c.push(0.0);
        self.names.len() - 1
    }

    pub fn add_linear(&mut self, var: usize, coef: f64) {
        self.c[var] += coef;
    }

    /// Adds `weight · (Σ aᵢ xᵢ)²` to the objective.
    pub fn add_square(&mut self, terms: &[(usize, f64)], weight: f64) {
        if weight == 0.0 {
            return;
        }
        for &(i, ai) in terms {
            for &(j, aj) in terms {
                self.q.push((i, j, 2.0 * weight * ai * aj));
            }
        }
    }

    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64, label: &str) -> usize {
        let row = self.b_eq.len();
        self.eq.extend(terms.iter().map(|&(v, a)| (row, v, a)));
        self.b_eq.push(rhs);
        self.eq_labels.push(label.to_string());
        row
    }

    /// `Σ aᵢ xᵢ <= rhs`
    pub fn add_le(&mut self, terms: &[(usize, f64)], rhs: f64, label: &str) -> usize {
        let row = self.b_in.len();
        self.ineq.extend(terms.iter().map(|&(v, a)| (row, v, a)));
        self.b_in.push(rhs);
        self.in_labels.push(label.to_string());
        row
    }

    /// `Σ aᵢ xᵢ >= rhs`
    pub fn add_ge(&mut self, terms: &[(usize, f64)], rhs: f64, label: &str) -> usize {
        let neg: Vec<_> = terms.iter().map(|&(v, a)| (v, -a)).collect();
        self.add_le(&neg, -rhs, label)
    }

    /// `lo <= x <= hi`; infinite sides are skipped.
    pub fn add_bounds(&mut self, var: usize, lo: f64, hi: f64, label: &str) {
        if lo.is_finite() {
            self.add_ge(&[(var, 1.0)], lo, label);
        }
        if hi.is_finite() {
            self.add_le(&[(var, 1.0)], hi, label);
        }
    }

    pub fn build(self) -> QpProblem {
        let n = self.names.len();
        QpProblem {
            n,
            q: CscMatrix::from_triplets(n, n, &self.q),
            c: self.c,
            a_eq: CscMatrix::from_triplets(self.b_eq.len(), n, &self.eq),
            b_eq: self.b_eq,
            a_in: CscMatrix::from_triplets(self.b_in.len(), n, &self.ineq),
            b_in: self.b_in,
            var_names: self.names,
            eq_labels: self.eq_labels,
            in_labels: self.in_labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_square_term_is_symmetric() {
        let mut b = QpBuilder::new();
        let x = b.add_var("x");
        let y = b.add_var("y");
        b.add_square(&[(x, 1.0), (y, 1.0)], 5.0);
        let p = b.build();
        assert_eq!(p.q.get(0, 0), 10.0);
        assert_eq!(p.q.get(0, 1), 10.0);
        assert_eq!(p.q.get(1, 0), 10.0);
        // 5 (x + y)² at (1, 2) = 45
        assert!((p.objective(&[1.0, 2.0]) - 45.0).abs() < 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn indefinite_q_is_rejected() {
        let mut b = QpBuilder::new();
        let x = b.add_var("x");
        let y = b.add_var("y");
        b.add_square(&[(x, 1.0)], 1.0);
        b.add_square(&[(y, 1.0)], -1.0);
        assert!(matches!(b.build().validate(), Err(Error::NotPsd(_))));
    }

    #[test]
    fn psd_but_not_diagonally_dominant_passes() {
        let mut b = QpBuilder::new();
        let x = b.add_var("x");
        let y = b.add_var("y");
        let z = b.add_var("z");
        b.add_square(&[(x, 1.0), (y, 2.0), (z, -1.0)], 1.0);
        b.add_square(&[(x, 1.0)], 0.1);
        b.build().validate().unwrap();
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut p = QpBuilder::new();
        p.add_var("x");
        let mut p = p.build();
        p.c.push(1.0);
        assert!(matches!(p.validate(), Err(Error::Dimension(_))));
    }

    #[test]
    fn var_index_and_dump() {
        let mut b = QpBuilder::new();
        let x = b.add_var("dg[0](1,0)");
        b.add_bounds(x, 0.0, 1.0, "dg_bounds");
        let p = b.build();
        assert_eq!(p.var_index("dg[0](1,0)"), Some(0));
        let mut out = Vec::new();
        p.write_dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# qp n=1 m_eq=0 m_in=2"));
        assert!(text.contains("dg_bounds"));
    }
}
