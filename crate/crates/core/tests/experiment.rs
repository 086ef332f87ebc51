use std::path::PathBuf;

use mmg_core::experiment::{run, sweep, Mode, RunSpec, SweepParam};
use mmg_core::Error;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn isolated_prices_leave_the_internal_price_blank() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec::new(data("two_mg.toml"), Mode::Isolated, dir.path());
    let out = run(&spec).unwrap();
    assert!(out.market().is_none());
    let prices = std::fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    let mut lines = prices.lines();
    assert_eq!(lines.next(), Some("t,h,lambda_eq,beta_buy,beta_sell"));
    assert!(lines.all(|l| l.split(',').nth(2) == Some("")));
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn p0_sweep_pairs_each_point_with_its_isolated_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec::new(data("two_mg.toml"), Mode::Cooperative, dir.path());
    let points = sweep(&spec, SweepParam::P0, &[0.5, 1.0]).unwrap();
    for p in &points {
        assert!(p.converged);
        assert!(p.cooperative_total() <= p.isolated_total());
        // isolated 100 $ against the pooled 36.25 $
        assert!((p.reduction_pct() - 63.75).abs() < 0.1, "{}", p.reduction_pct());
    }
    assert!(dir.path().join("p0_0.5/isolated/summary.csv").exists());
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn sweep_errors_name_the_offending_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec::new(data("two_mg.toml"), Mode::Cooperative, dir.path());
    let err = sweep(&spec, SweepParam::P0, &[1.0, 1.5]).unwrap_err();
    assert!(err.to_string().contains("p0 = 1.5"), "{err}");
    assert!(matches!(err.root(), Error::Validation { .. }));
    assert!(matches!(
        sweep(&spec, SweepParam::Alpha, &[]),
        Err(Error::Validation { .. })
    ));
}

#[test]
fn centralized_run_reports_duals_and_matches_the_market() {
    let dir = tempfile::tempdir().unwrap();
    let central = run(&RunSpec::new(
        data("two_mg.toml"),
        Mode::Centralized,
        dir.path().join("c"),
    ))
    .unwrap();
    let market = run(&RunSpec::new(
        data("two_mg.toml"),
        Mode::Cooperative,
        dir.path().join("m"),
    ))
    .unwrap();
    assert!(dir.path().join("c/duals.csv").exists());
    let rel = (central.total_mg_cost() - market.total_mg_cost()).abs() / central.total_mg_cost();
    assert!(rel < 1e-3, "{rel}");
}
