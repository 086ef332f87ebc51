use super::problem::QpProblem;
use super::sparse::{dot, inf_norm};

/// Absolute max-norm KKT residuals of a primal/dual pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    /// `‖Qx + c + A_eqᵀν + A_inᵀμ‖∞`
    pub stationarity: f64,
    /// `‖A_eq x − b_eq‖∞`
    pub primal_eq: f64,
    /// `max(A_in x − b_in)₊`
    pub primal_in: f64,
    /// `max(−μ)₊`
    pub dual: f64,
    /// `max |μᵢ (A_in x − b_in)ᵢ|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_in)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_residuals(problem: &QpProblem, x: &[f64], duals_eq: &[f64], duals_in: &[f64]) -> KktResiduals {
    assert_eq!(x.len(), problem.n);
    assert_eq!(duals_eq.len(), problem.b_eq.len());
    assert_eq!(duals_in.len(), problem.b_in.len());

    let mut grad = problem.q.mul_vec(x);
    for (g, c) in grad.iter_mut().zip(&problem.c) {
        *g += c;
    }
    for (g, v) in grad.iter_mut().zip(problem.a_eq.tmul_vec(duals_eq)) {
        *g += v;
    }
    for (g, v) in grad.iter_mut().zip(problem.a_in.tmul_vec(duals_in)) {
        *g += v;
    }

    let eq_res: Vec<f64> = problem
        .a_eq
        .mul_vec(x)
        .iter()
        .zip(&problem.b_eq)
        .map(|(ax, b)| ax - b)
        .collect();
    let slack: Vec<f64> = problem
        .a_in
        .mul_vec(x)
        .iter()
        .zip(&problem.b_in)
        .map(|(ax, b)| ax - b)
        .collect();

    KktResiduals {
        stationarity: inf_norm(&grad),
        primal_eq: inf_norm(&eq_res),
        primal_in: slack.iter().fold(0.0f64, |m, s| m.max(*s)),
        dual: duals_in.iter().fold(0.0f64, |m, mu| m.max(-mu)),
        complementarity: duals_in
            .iter()
            .zip(&slack)
            .fold(0.0f64, |m, (mu, s)| m.max((mu * s).abs())),
    }
}

/// Lagrangian dual objective `−½xᵀQx − b_eqᵀν − b_inᵀμ` evaluated at the
/// primal point; equals the dual function value when stationarity holds.
pub fn dual_objective(problem: &QpProblem, x: &[f64], duals_eq: &[f64], duals_in: &[f64]) -> f64 {
    -0.5 * dot(x, &problem.q.mul_vec(x)) - dot(&problem.b_eq, duals_eq) - dot(&problem.b_in, duals_in)
}
