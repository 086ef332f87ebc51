//! Alternating-direction (operator-splitting) QP solver.
//!
//! The problem is recast as `min ½xᵀPx + qᵀx  s.t.  l <= Ax <= u`, where
//! equality rows have `l = u` and single-variable inequality rows are merged
//! into one bound row per variable. Each iteration solves one quasi-definite
//! KKT system with a cached LDLᵀ factor. Once the iterates settle, a polish
//! step solves the KKT system restricted to the guessed active set, and the
//! result is only reported optimal if the KKT residuals of the original
//! problem are within tolerance.

use std::cell::RefCell;

use super::kkt::{kkt_residuals, KktResiduals};
use super::ldl::Ldl;
use super::problem::QpProblem;
use super::sparse::{inf_norm, CscMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    /// Absolute tolerance on every KKT residual of the original problem.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub relaxation: f64,
    pub scaling_iters: usize,
    pub adaptive_rho_interval: usize,
    pub check_interval: usize,
    pub polish: bool,
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            scaling_iters: 10,
            adaptive_rho_interval: 25,
            check_interval: 5,
            polish: true,
            infeasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub duals_eq: Vec<f64>,
    pub duals_in: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub polished: bool,
}

/// Solves `problem` from a cold start.
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Dimension(format!("tolerance must be positive, got {tol}")));
    }
    let settings = QpSettings {
        tol,
        max_iter,
        ..QpSettings::default()
    };
    QpSolver::new(problem.clone(), settings)?.solve()
}

#[derive(Debug, Clone, Copy)]
enum RowKind {
    Eq(usize),
    In(usize),
    Bound {
        upper: Option<(usize, f64)>,
        lower: Option<(usize, f64)>,
    },
}

/// Reusable solver state: scaling, factorization and warm-start iterates.
#[derive(Debug, Clone)]
pub struct QpSolver {
    problem: QpProblem,
    settings: QpSettings,
    n: usize,
    m: usize,
    kinds: Vec<RowKind>,
    // scaled data
    p: CscMatrix,
    a: CscMatrix,
    at: CscMatrix,
    q: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    cost_scale: f64,
    // factorization
    rho: f64,
    rho_vec: Vec<f64>,
    kkt: CscMatrix,
    rho_pos: Vec<usize>,
    ldl: Ldl,
    // iterates (scaled)
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    /// Tolerance the last optimal solve stopped at and whether it was
    /// polished; cleared by `reset`.
    warm_eps: Option<(f64, bool)>,
    /// Recent polish factorizations keyed by their active rows.
    polish_cache: RefCell<Vec<(Vec<usize>, Ldl)>>,
}

const MIN_SCALING: f64 = 1e-4;
const POLISH_CACHE: usize = 4;
const MAX_SCALING: f64 = 1e4;
const RHO_EQ_FACTOR: f64 = 1e3;

fn limit_scaling(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

impl QpSolver {
    pub fn new(problem: QpProblem, settings: QpSettings) -> Result<Self> {
        problem.validate()?;
        let n = problem.n;

        // Standard form rows: equalities, general inequalities, merged bounds.
        let mut row_nnz = vec![0usize; problem.b_in.len()];
        let mut row_entry = vec![(0usize, 0.0f64); problem.b_in.len()];
        for (r, c, v) in problem.a_in.triplets() {
            row_nnz[r] += 1;
            row_entry[r] = (c, v);
        }
        let mut triplets = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        let mut kinds = Vec::new();
        for (r, c, v) in problem.a_eq.triplets() {
            triplets.push((r, c, v));
        }
        for (k, &b) in problem.b_eq.iter().enumerate() {
            l.push(b);
            u.push(b);
            kinds.push(RowKind::Eq(k));
        }
        let general: Vec<usize> = (0..problem.b_in.len())
            .filter(|&r| !(row_nnz[r] == 1 && row_entry[r].1 != 0.0))
            .collect();
        let mut general_row = vec![usize::MAX; problem.b_in.len()];
        for &r in &general {
            general_row[r] = kinds.len();
            l.push(f64::NEG_INFINITY);
            u.push(problem.b_in[r]);
            kinds.push(RowKind::In(r));
        }
        for (r, c, v) in problem.a_in.triplets() {
            if general_row[r] != usize::MAX {
                triplets.push((general_row[r], c, v));
            }
        }
        let mut upper: Vec<Option<(usize, f64, f64)>> = vec![None; n];
        let mut lower: Vec<Option<(usize, f64, f64)>> = vec![None; n];
        for r in 0..problem.b_in.len() {
            if general_row[r] != usize::MAX {
                continue;
            }
            let (var, a) = row_entry[r];
            let bound = problem.b_in[r] / a;
            if a > 0.0 {
                if upper[var].is_none_or(|(_, _, b)| bound < b) {
                    upper[var] = Some((r, a, bound));
                }
            } else if lower[var].is_none_or(|(_, _, b)| bound > b) {
                lower[var] = Some((r, a, bound));
            }
        }
        for var in 0..n {
            if upper[var].is_none() && lower[var].is_none() {
                continue;
            }
            triplets.push((kinds.len(), var, 1.0));
            l.push(lower[var].map_or(f64::NEG_INFINITY, |t| t.2));
            u.push(upper[var].map_or(f64::INFINITY, |t| t.2));
            kinds.push(RowKind::Bound {
                upper: upper[var].map(|t| (t.0, t.1)),
                lower: lower[var].map(|t| (t.0, t.1)),
            });
        }
        let m = kinds.len();
        let mut a = CscMatrix::from_triplets(m, n, &triplets);
        let mut p = problem.q.clone();
        let mut q = problem.c.clone();

        // Ruiz equilibration of [P Aᵀ; A 0] plus cost scaling.
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut cost_scale = 1.0;
        for _ in 0..settings.scaling_iters {
            let pn = p.col_inf_norms();
            let an = a.col_inf_norms();
            let dx: Vec<f64> = (0..n).map(|j| 1.0 / limit_scaling(pn[j].max(an[j])).sqrt()).collect();
            let dz: Vec<f64> = a
                .row_inf_norms()
                .iter()
                .map(|&r| 1.0 / limit_scaling(r).sqrt())
                .collect();
            p.scale(&dx, &dx);
            a.scale(&dz, &dx);
            for j in 0..n {
                q[j] *= dx[j];
                d[j] *= dx[j];
            }
            for i in 0..m {
                e[i] *= dz[i];
            }
            let pn = p.col_inf_norms();
            let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let gamma = 1.0 / limit_scaling(mean.max(inf_norm(&q)));
            p.values.iter_mut().for_each(|v| *v *= gamma);
            q.iter_mut().for_each(|v| *v *= gamma);
            cost_scale *= gamma;
        }
        let l: Vec<f64> = l.iter().zip(&e).map(|(v, s)| v * s).collect();
        let u: Vec<f64> = u.iter().zip(&e).map(|(v, s)| v * s).collect();
        let at = a.transpose();

        let rho = settings.rho;
        let rho_vec = rho_vector(&l, &u, rho);
        let (kkt, rho_pos) = assemble_kkt(&p, &a, settings.sigma, &rho_vec);
        let ldl = Ldl::new(&kkt).map_err(|e| Error::Solver(format!("KKT factorization failed: {e}")))?;

        Ok(Self {
            problem,
            settings,
            n,
            m,
            kinds,
            p,
            a,
            at,
            q,
            l,
            u,
            d,
            e,
            cost_scale,
            rho,
            rho_vec,
            kkt,
            rho_pos,
            ldl,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            warm_eps: None,
            polish_cache: RefCell::new(Vec::new()),
        })
    }

    pub fn problem(&self) -> &QpProblem {
        &self.problem
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// Replaces the linear cost vector, keeping the factorization and the
    /// current iterates as a warm start.
    pub fn update_linear_cost(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.n);
        self.problem.c.copy_from_slice(c);
        for j in 0..self.n {
            self.q[j] = self.cost_scale * self.d[j] * c[j];
        }
    }

    /// Drops the warm start.
    pub fn reset(&mut self) {
        self.x.iter_mut().for_each(|v| *v = 0.0);
        self.z.iter_mut().for_each(|v| *v = 0.0);
        self.y.iter_mut().for_each(|v| *v = 0.0);
        self.warm_eps = None;
    }

    pub fn solve(&mut self) -> Result<QpSolution> {
        let (n, m) = (self.n, self.m);
        let alpha = self.settings.relaxation;
        let sigma = self.settings.sigma;
        let tol = self.settings.tol;
        // warm solves of the same model tend to finish at the same accuracy:
        // start one decade looser than the last polished finish, or right at
        // the last unpolished one so that doomed polish attempts are skipped
        let mut eps = match self.warm_eps {
            None => 1e-4,
            Some((e, true)) => (10.0 * e).min(1e-4),
            Some((e, false)) => e,
        }
        .max(tol);
        let mut rhs = vec![0.0; n + m];
        let mut work = vec![0.0; n + m];
        let mut x_tilde = vec![0.0; n];
        let mut z_tilde = vec![0.0; m];
        let mut y_prev = vec![0.0; m];
        let mut best: Option<QpSolution> = None;
        // each change of the penalty restarts the splitting dynamics, so
        // the wait before the next change doubles to stop it from swinging
        // back and forth between two values
        let mut rho_wait = self.settings.adaptive_rho_interval;
        let mut next_adapt = rho_wait;

        for iter in 1..=self.settings.max_iter {
            for j in 0..n {
                rhs[j] = sigma * self.x[j] - self.q[j];
            }
            for i in 0..m {
                rhs[n + i] = self.z[i] - self.y[i] / self.rho_vec[i];
            }
            self.ldl.solve_with_work(&mut rhs, &mut work);
            x_tilde.copy_from_slice(&rhs[..n]);
            for i in 0..m {
                z_tilde[i] = self.z[i] + (rhs[n + i] - self.y[i]) / self.rho_vec[i];
            }
            y_prev.copy_from_slice(&self.y);
            for j in 0..n {
                self.x[j] = alpha * x_tilde[j] + (1.0 - alpha) * self.x[j];
            }
            for i in 0..m {
                let relaxed = alpha * z_tilde[i] + (1.0 - alpha) * self.z[i];
                let z_new = (relaxed + self.y[i] / self.rho_vec[i]).clamp(self.l[i], self.u[i]);
                self.y[i] += self.rho_vec[i] * (relaxed - z_new);
                self.z[i] = z_new;
            }

            let last = iter == self.settings.max_iter;
            if iter % self.settings.check_interval != 0 && !last {
                continue;
            }
            let res = self.residuals();
            if res.converged(eps) || last {
                let cand = self.candidate(eps, iter);
                let ok = cand.kkt.max() <= tol;
                if best.as_ref().is_none_or(|b| cand.kkt.max() < b.kkt.max()) {
                    best = Some(cand);
                }
                if ok {
                    let mut sol = best.take().unwrap();
                    sol.status = QpStatus::Optimal;
                    self.warm_eps = Some((eps, sol.polished));
                    return Ok(sol);
                }
                eps = (eps * 0.1).max(1e-13);
            }
            if self.primal_infeasible(&y_prev) {
                let mut sol = self.candidate_unpolished(iter);
                sol.status = QpStatus::Infeasible;
                return Ok(sol);
            }
            if iter >= next_adapt {
                if self.adapt_rho(&res)? {
                    rho_wait *= 2;
                }
                next_adapt = iter + rho_wait;
            }
        }

        let mut sol = best.unwrap_or_else(|| self.candidate_unpolished(self.settings.max_iter));
        sol.status = QpStatus::IterationLimit;
        sol.iterations = self.settings.max_iter;
        Ok(sol)
    }

    fn residuals(&self) -> Residuals {
        let ax = self.a.mul_vec(&self.x);
        let px = self.p.mul_vec(&self.x);
        let aty = self.at.mul_vec(&self.y);
        let mut prim = 0.0f64;
        let mut prim_norm = 0.0f64;
        for i in 0..self.m {
            let inv = 1.0 / self.e[i];
            prim = prim.max(((ax[i] - self.z[i]) * inv).abs());
            prim_norm = prim_norm.max((ax[i] * inv).abs()).max((self.z[i] * inv).abs());
        }
        let cinv = 1.0 / self.cost_scale;
        let mut dual = 0.0f64;
        let mut dual_norm = 0.0f64;
        for j in 0..self.n {
            let inv = cinv / self.d[j];
            dual = dual.max(((px[j] + self.q[j] + aty[j]) * inv).abs());
            dual_norm = dual_norm
                .max((px[j] * inv).abs())
                .max((aty[j] * inv).abs())
                .max((self.q[j] * inv).abs());
        }
        // scaled counterparts drive the penalty update
        let sp = inf_norm(&ax.iter().zip(&self.z).map(|(a, z)| a - z).collect::<Vec<_>>());
        let sp_norm = inf_norm(&ax).max(inf_norm(&self.z));
        let sd = inf_norm(&(0..self.n).map(|j| px[j] + self.q[j] + aty[j]).collect::<Vec<_>>());
        let sd_norm = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&self.q));
        Residuals {
            prim,
            prim_norm,
            dual,
            dual_norm,
            scaled_ratio: (sp / (sp_norm + 1e-10)) / (sd / (sd_norm + 1e-10) + 1e-30),
        }
    }

    /// Rebalances the penalty; returns whether it changed.
    fn adapt_rho(&mut self, res: &Residuals) -> Result<bool> {
        if !res.scaled_ratio.is_finite() || res.scaled_ratio <= 0.0 {
            return Ok(false);
        }
        let new_rho = (self.rho * res.scaled_ratio.sqrt()).clamp(1e-6, 1e6);
        if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
            self.rho = new_rho;
            self.rho_vec = rho_vector(&self.l, &self.u, new_rho);
            for (i, &pos) in self.rho_pos.iter().enumerate() {
                self.kkt.values[pos] = -1.0 / self.rho_vec[i];
            }
            self.ldl
                .refactor(&self.kkt.values)
                .map_err(|e| Error::Solver(format!("KKT refactorization failed: {e}")))?;
            return Ok(true);
        }
        Ok(false)
    }

    fn primal_infeasible(&self, y_prev: &[f64]) -> bool {
        let mut dy: Vec<f64> = self.y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
        for i in 0..self.m {
            if self.u[i] == f64::INFINITY {
                dy[i] = dy[i].min(0.0);
            }
            if self.l[i] == f64::NEG_INFINITY {
                dy[i] = dy[i].max(0.0);
            }
        }
        let norm = (0..self.m).fold(0.0f64, |acc, i| acc.max((self.e[i] * dy[i]).abs()));
        if norm < 1e-30 {
            return false;
        }
        let tol = self.settings.infeasibility_tol * norm;
        let atdy = self.at.mul_vec(&dy);
        let stationary = (0..self.n).all(|j| (atdy[j] / self.d[j]).abs() <= tol);
        if !stationary {
            return false;
        }
        let support: f64 = (0..self.m)
            .map(|i| {
                if dy[i] > 0.0 {
                    self.u[i] * dy[i]
                } else if dy[i] < 0.0 {
                    self.l[i] * dy[i]
                } else {
                    0.0
                }
            })
            .sum();
        support < -tol
    }

    fn unscale(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let xs = x.iter().zip(&self.d).map(|(v, s)| v * s).collect();
        let ys = y.iter().zip(&self.e).map(|(v, s)| v * s / self.cost_scale).collect();
        (xs, ys)
    }

    fn original_duals(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut eq = vec![0.0; self.problem.b_eq.len()];
        let mut ineq = vec![0.0; self.problem.b_in.len()];
        for (i, kind) in self.kinds.iter().enumerate() {
            match *kind {
                RowKind::Eq(k) => eq[k] = y[i],
                RowKind::In(k) => ineq[k] = y[i],
                RowKind::Bound { upper, lower } => {
                    if y[i] > 0.0 {
                        if let Some((k, a)) = upper {
                            ineq[k] = y[i] / a;
                        }
                    } else if y[i] < 0.0 {
                        if let Some((k, a)) = lower {
                            ineq[k] = y[i] / a;
                        }
                    }
                }
            }
        }
        (eq, ineq)
    }

    fn package(&self, x_scaled: &[f64], y_scaled: &[f64], iterations: usize, polished: bool) -> QpSolution {
        let (x, y) = self.unscale(x_scaled, y_scaled);
        let (duals_eq, duals_in) = self.original_duals(&y);
        let kkt = kkt_residuals(&self.problem, &x, &duals_eq, &duals_in);
        QpSolution {
            objective: self.problem.objective(&x),
            x,
            duals_eq,
            duals_in,
            status: QpStatus::IterationLimit,
            kkt,
            iterations,
            polished,
        }
    }

    fn candidate_unpolished(&self, iterations: usize) -> QpSolution {
        self.package(&self.x, &self.y, iterations, false)
    }

    fn candidate(&self, eps: f64, iterations: usize) -> QpSolution {
        let mut best = self.candidate_unpolished(iterations);
        if !self.settings.polish || best.kkt.max() <= self.settings.tol {
            return best;
        }
        for near in [false, true] {
            if let Some((xp, yp)) = self.polish(near, 10.0 * eps) {
                let cand = self.package(&xp, &yp, iterations, true);
                if cand.kkt.max() < best.kkt.max() {
                    best = cand;
                }
                if best.kkt.max() <= self.settings.tol {
                    break;
                }
            }
        }
        best
    }

    /// Solves the equality-constrained problem on the guessed active set,
    /// regularized towards the current iterate and refined iteratively. A
    /// correction pass then adds rows the solution violates, or failing
    /// that drops rows whose multiplier has the wrong sign.
    fn polish(&self, near_active: bool, threshold: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        const PASSES: usize = 1;
        let m = self.m;
        let mut active: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            let (l, u, z, y) = (self.l[i], self.u[i], self.z[i], self.y[i]);
            let target = if l == u || (l.is_finite() && z - l < -y) {
                Some(l)
            } else if u.is_finite() && u - z < y {
                Some(u)
            } else if near_active && l.is_finite() && z - l <= threshold * (1.0 + l.abs()) {
                Some(l)
            } else if near_active && u.is_finite() && u - z <= threshold * (1.0 + u.abs()) {
                Some(u)
            } else {
                None
            };
            if let Some(t) = target {
                active.push((i, t));
            }
        }

        let mut result = self.solve_active(&active)?;
        for _ in 0..PASSES {
            let (x, y) = &result;
            let ax = self.a.mul_vec(x);
            let slack = 0.1 * self.settings.tol;
            let mut target: Vec<Option<f64>> = vec![None; m];
            for &(i, t) in &active {
                target[i] = Some(t);
            }
            // add violated rows first; drop wrong-sign multipliers only once
            // the point is feasible, which avoids cycling on degenerate rows
            let mut changed = false;
            for i in 0..m {
                if target[i].is_none() {
                    let inv = 1.0 / self.e[i];
                    if (self.l[i] - ax[i]) * inv > slack {
                        target[i] = Some(self.l[i]);
                        changed = true;
                    } else if (ax[i] - self.u[i]) * inv > slack {
                        target[i] = Some(self.u[i]);
                        changed = true;
                    }
                }
            }
            if !changed {
                for i in 0..m {
                    if let Some(t) = target[i] {
                        if self.l[i] == self.u[i] {
                            continue;
                        }
                        let unscaled = y[i] * self.e[i] / self.cost_scale;
                        let wrong = if t == self.l[i] {
                            unscaled > slack
                        } else {
                            unscaled < -slack
                        };
                        if wrong {
                            target[i] = None;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
            active = target
                .iter()
                .enumerate()
                .filter_map(|(i, t)| t.map(|t| (i, t)))
                .collect();
            result = self.solve_active(&active)?;
        }
        Some(result)
    }

    fn solve_active(&self, active: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.n, self.m);
        let na = active.len();
        let rows: Vec<usize> = active.iter().map(|a| a.0).collect();
        let a_act = self.a.select_rows(&rows);
        let delta = 1e-7;

        // the reduced matrix depends only on which rows are active, and
        // successive warm solves often land on the same set
        let cached = {
            let mut cache = self.polish_cache.borrow_mut();
            cache
                .iter()
                .position(|(r, _)| *r == rows)
                .map(|i| cache.swap_remove(i).1)
        };
        let ldl = match cached {
            Some(ldl) => ldl,
            None => {
                let mut t: Vec<(usize, usize, f64)> = self.p.triplets().filter(|&(r, c, _)| r <= c).collect();
                t.extend((0..n).map(|j| (j, j, delta)));
                t.extend(a_act.triplets().map(|(r, c, v)| (c, n + r, v)));
                t.extend((0..na).map(|k| (n + k, n + k, -delta)));
                let k_reg = CscMatrix::from_triplets(n + na, n + na, &t);
                Ldl::new(&k_reg).ok()?
            }
        };

        let mut rhs = vec![0.0; n + na];
        for j in 0..n {
            rhs[j] = -self.q[j];
        }
        for (k, &(_, target)) in active.iter().enumerate() {
            rhs[n + k] = target;
        }
        let mut w = rhs.clone();
        for j in 0..n {
            w[j] += delta * self.x[j];
        }
        for (k, &(i, _)) in active.iter().enumerate() {
            w[n + k] -= delta * self.y[i];
        }
        let mut work = vec![0.0; n + na];
        ldl.solve_with_work(&mut w, &mut work);

        let kmul = |w: &[f64]| -> Vec<f64> {
            let mut out = self.p.mul_vec(&w[..n]);
            let aty = a_act.tmul_vec(&w[n..]);
            for j in 0..n {
                out[j] += aty[j];
            }
            out.extend(a_act.mul_vec(&w[..n]));
            out
        };
        for _ in 0..8 {
            let kw = kmul(&w);
            let mut r: Vec<f64> = rhs.iter().zip(&kw).map(|(b, v)| b - v).collect();
            if inf_norm(&r) < 1e-14 {
                break;
            }
            ldl.solve_with_work(&mut r, &mut work);
            for (wi, ri) in w.iter_mut().zip(&r) {
                *wi += ri;
            }
        }
        {
            let mut cache = self.polish_cache.borrow_mut();
            if cache.len() >= POLISH_CACHE {
                cache.remove(0);
            }
            cache.push((rows, ldl));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = w[..n].to_vec();
        let mut y = vec![0.0; m];
        for (k, &(i, _)) in active.iter().enumerate() {
            y[i] = w[n + k];
        }
        Some((x, y))
    }
}

#[derive(Debug, Clone, Copy)]
struct Residuals {
    prim: f64,
    prim_norm: f64,
    dual: f64,
    dual_norm: f64,
    scaled_ratio: f64,
}

impl Residuals {
    fn converged(&self, eps: f64) -> bool {
        self.prim <= eps + eps * self.prim_norm && self.dual <= eps + eps * self.dual_norm
    }
}

fn rho_vector(l: &[f64], u: &[f64], rho: f64) -> Vec<f64> {
    l.iter()
        .zip(u)
        .map(|(lo, hi)| {
            if lo == hi {
                RHO_EQ_FACTOR * rho
            } else if lo.is_infinite() && hi.is_infinite() {
                1e-6
            } else {
                rho
            }
        })
        .collect()
}

/// Upper triangle of `[P + σI, Aᵀ; A, −diag(1/ρ)]` and the value positions of
/// the penalty diagonal.
fn assemble_kkt(p: &CscMatrix, a: &CscMatrix, sigma: f64, rho: &[f64]) -> (CscMatrix, Vec<usize>) {
    let n = p.ncols;
    let m = a.nrows;
    let mut t: Vec<(usize, usize, f64)> = p.triplets().filter(|&(r, c, _)| r <= c).collect();
    t.extend((0..n).map(|j| (j, j, sigma)));
    t.extend(a.triplets().map(|(r, c, v)| (c, n + r, v)));
    t.extend((0..m).map(|i| (n + i, n + i, -1.0 / rho[i])));
    let kkt = CscMatrix::from_triplets(n + m, n + m, &t);
    let pos = (0..m)
        .map(|i| {
            let col = n + i;
            // the diagonal is the last entry of an upper-triangular column
            let p = kkt.colptr[col + 1] - 1;
            debug_assert_eq!(kkt.rowidx[p], col);
            p
        })
        .collect();
    (kkt, pos)
}
