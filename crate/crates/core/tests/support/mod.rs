//! Test-only reference solvers, written independently of the library's
//! sparse operator-splitting code.
#![allow(dead_code)]

use mmg_core::qp::{CscMatrix, QpProblem};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A strictly convex QP held densely:
/// minimize ½xᵀQx + cᵀx subject to Ex = d, Ax ≤ b.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| dot(r, x)).collect()
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
fn cholesky(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = m[i][i] - s;
                assert!(v > 0.0, "matrix is not positive definite");
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

fn chol_solve(l: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i][k] * y[k];
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k][i] * y[k];
        }
        y[i] /= l[i][i];
    }
    y
}

impl DenseQp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &mat_vec(&self.q, x)) + dot(&self.c, x)
    }

    pub fn to_problem(&self) -> QpProblem {
        let n = self.n();
        let trip = |m: &[Vec<f64>]| -> Vec<(usize, usize, f64)> {
            m.iter()
                .enumerate()
                .flat_map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(move |(j, v)| (i, j, *v))
                })
                .collect()
        };
        QpProblem {
            n,
            q: CscMatrix::from_triplets(n, n, &trip(&self.q)),
            c: self.c.clone(),
            a_eq: CscMatrix::from_triplets(self.d.len(), n, &trip(&self.e)),
            b_eq: self.d.clone(),
            a_in: CscMatrix::from_triplets(self.b.len(), n, &trip(&self.a)),
            b_in: self.b.clone(),
            var_names: (0..n).map(|i| format!("x{i}")).collect(),
            eq_labels: vec!["eq".into(); self.d.len()],
            in_labels: vec!["in".into(); self.b.len()],
        }
    }

    /// Solves the dual by accelerated projected gradient ascent with
    /// adaptive restart. The multipliers of the inequality rows are
    /// projected onto the nonnegative orthant, equality multipliers are
    /// free, and the primal point is recovered from the stationarity
    /// condition `Qx + c + Eᵀz + Aᵀy = 0`.
    pub fn solve_projected_gradient(&self, max_iter: usize) -> Vec<f64> {
        let n = self.n();
        let me = self.d.len();
        let rows: Vec<&Vec<f64>> = self.e.iter().chain(&self.a).collect();
        let rhs: Vec<f64> = self.d.iter().chain(&self.b).copied().collect();
        let m = rows.len();
        let l = cholesky(&self.q);
        let primal = |u: &[f64]| -> Vec<f64> {
            let mut g = self.c.clone();
            for (r, ui) in rows.iter().zip(u) {
                for j in 0..n {
                    g[j] += ui * r[j];
                }
            }
            chol_solve(&l, &g).into_iter().map(|v| -v).collect()
        };
        if m == 0 {
            return primal(&[]);
        }

        // Lipschitz constant of the dual gradient by power iteration on G Q⁻¹ Gᵀ
        let mut v = vec![1.0; m];
        let mut lip = 1.0;
        for _ in 0..200 {
            let mut gtv = vec![0.0; n];
            for (r, vi) in rows.iter().zip(&v) {
                for j in 0..n {
                    gtv[j] += vi * r[j];
                }
            }
            let w = chol_solve(&l, &gtv);
            let next: Vec<f64> = rows.iter().map(|r| dot(r, &w)).collect();
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = next.into_iter().map(|x| x / norm).collect();
        }
        let step = 1.0 / (1.05 * lip);

        let project = |u: &mut [f64]| {
            for ui in &mut u[me..] {
                *ui = ui.max(0.0);
            }
        };
        let mut u = vec![0.0; m];
        let mut u_prev = u.clone();
        let mut yk = u.clone();
        let mut theta: f64 = 1.0;
        for _ in 0..max_iter {
            let x = primal(&yk);
            let grad: Vec<f64> = rows.iter().zip(&rhs).map(|(r, bi)| dot(r, &x) - bi).collect();
            let mut next: Vec<f64> = yk.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            project(&mut next);

            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            // restart momentum when it points against the ascent direction
            let restart = next
                .iter()
                .zip(&u)
                .zip(&grad)
                .map(|((a, b), g)| (a - b) * g)
                .sum::<f64>()
                < 0.0;
            u_prev.clone_from(&u);
            u = next;
            if restart {
                theta = 1.0;
                yk.clone_from(&u);
            } else {
                let beta = (theta - 1.0) / theta_next;
                yk = u.iter().zip(&u_prev).map(|(a, b)| a + beta * (a - b)).collect();
                theta = theta_next;
            }

            let x = primal(&u);
            let mut worst = 0.0f64;
            for (i, (r, bi)) in rows.iter().zip(&rhs).enumerate() {
                let s = dot(r, &x) - bi;
                if i < me {
                    worst = worst.max(s.abs());
                } else {
                    worst = worst.max(s.max(0.0)).max((u[i] * s).abs());
                }
            }
            if worst < 1e-11 {
                break;
            }
        }
        primal(&u)
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.e.iter().zip(&self.d).map(|(r, d)| (dot(r, x) - d).abs());
        let ineq = self.a.iter().zip(&self.b).map(|(r, b)| (dot(r, x) - b).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }
}

/// Random strictly convex QP with up to `max_n` variables, a known
/// strictly feasible point, a few equality rows, general inequalities and
/// some simple bounds.
pub fn random_qp(seed: u64, max_n: usize) -> DenseQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_n);
    let k = rng.random_range(1..=n);
    let mf: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let shift = rng.random_range(0.05..1.0);
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| mf.iter().map(|r| r[i] * r[j]).sum::<f64>() + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let me = rng.random_range(0..=(n - 1).min(3));
    let e: Vec<Vec<f64>> = (0..me)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let d = mat_vec(&e, &x0);

    let mi = rng.random_range(0..=2 * n);
    let mut a: Vec<Vec<f64>> = (0..mi)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut b: Vec<f64> = a.iter().map(|r| dot(r, &x0) + rng.random_range(0.0..0.5)).collect();
    // box rows around the feasible point for a random subset of variables
    for j in 0..n {
        if rng.random_bool(0.4) {
            let mut up = vec![0.0; n];
            up[j] = 1.0;
            b.push(x0[j] + rng.random_range(0.05..0.5));
            a.push(up);
            let mut lo = vec![0.0; n];
            lo[j] = -1.0;
            b.push(-x0[j] + rng.random_range(0.05..0.5));
            a.push(lo);
        }
    }
    DenseQp { q, c, e, d, a, b }
}

/// Minimizes a convex function of one variable on `[lo, hi]` by golden
/// section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}
