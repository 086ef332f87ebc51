mod support;

use mmg_core::qp::{kkt_residuals, solve_qp, QpStatus};
use proptest::prelude::*;
use support::{golden_section, random_qp};

#[test]
fn random_problems_match_the_projected_gradient_oracle() {
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let dense = random_qp(seed, 20);
        let oracle = dense.solve_projected_gradient(400_000);
        assert!(dense.max_violation(&oracle) < 1e-8, "seed {seed}: oracle infeasible");
        let sol = solve_qp(&dense.to_problem(), 1e-7, 50_000).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "seed {seed}");
        assert!(sol.kkt.max() <= 1e-6, "seed {seed}: {:?}", sol.kkt);
        let ours = dense.objective(&sol.x);
        let theirs = dense.objective(&oracle);
        let gap = (ours - theirs).abs() / theirs.abs().max(1.0);
        worst = worst.max(gap);
        assert!(gap <= 1e-5, "seed {seed}: {ours} vs {theirs}");
    }
    eprintln!("largest relative objective gap {worst:.2e}");
}

#[test]
fn golden_section_finds_a_parabola_vertex() {
    let x = golden_section(|x| (x - 0.3) * (x - 0.3), -1.0, 2.0, 1e-10);
    assert!((x - 0.3).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    /// The reported residuals agree with a recomputation from the returned
    /// point and multipliers, and inequality multipliers are nonnegative.
    #[test]
    fn certificate_is_honest(seed in 1000u64..100_000) {
        let p = random_qp(seed, 12).to_problem();
        let sol = solve_qp(&p, 1e-6, 50_000).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let again = kkt_residuals(&p, &sol.x, &sol.duals_eq, &sol.duals_in);
        prop_assert!((again.max() - sol.kkt.max()).abs() <= 1e-9);
        prop_assert!(sol.duals_in.iter().all(|y| *y >= -1e-9));
        prop_assert!((p.objective(&sol.x) - sol.objective).abs() <= 1e-9 * sol.objective.abs().max(1.0));
    }

    /// Scaling the objective scales the optimum value and leaves the
    /// minimizer in place.
    #[test]
    fn objective_scaling(seed in 1000u64..100_000, s in 0.1f64..10.0) {
        let mut p = random_qp(seed, 10).to_problem();
        let a = solve_qp(&p, 1e-8, 50_000).unwrap();
        for v in &mut p.q.values {
            *v *= s;
        }
        for v in &mut p.c {
            *v *= s;
        }
        let b = solve_qp(&p, 1e-8, 50_000).unwrap();
        prop_assert!((b.objective - s * a.objective).abs() <= 1e-5 * (s * a.objective).abs().max(1.0));
    }
}
