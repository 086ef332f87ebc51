use mmg_core::domain::{load_config, MmgConfig};
use mmg_core::scenarios::{deterministic_scenarios, robust_scenarios};
use mmg_core::subproblem::{audit_dispatch, build_mg_problem, regrouped_expected_cost, solve_mg, TradingPrices};

fn case_study() -> MmgConfig {
    load_config(include_str!("../data/case_study.toml")).unwrap()
}

#[test]
fn storage_microgrid_variable_count() {
    let config = case_study();
    let scen = robust_scenarios(&config).unwrap();
    let prices = TradingPrices::grid(&scen);
    let qp = build_mg_problem(&config, 1, &scen, &prices, 0.5).unwrap();
    // per (t, h): dg, charge, discharge, soc, buy, sell; per t: eight envelopes
    let independent_count = 24 * 9 * (1 + 3 + 2) + 24 * (2 + 2 + 4);
    assert_eq!(qp.n, independent_count);
    assert_eq!(qp.n, 1488);
}

#[test]
fn every_microgrid_solves_and_passes_the_audit() {
    let config = case_study();
    let scen = robust_scenarios(&config).unwrap();
    let prices = TradingPrices::grid(&scen);
    for p0 in [0.1, 0.5] {
        for m in 0..config.num_mgs() {
            let start = std::time::Instant::now();
            let d = solve_mg(&config, m, &scen, &prices, p0).unwrap();
            let report = audit_dispatch(&config, m, &scen, &d, 1e-6);
            assert!(report.passed(), "{:?}", report.violations);
            let regrouped = regrouped_expected_cost(&d.hourly_cost, p0);
            assert!((d.cost_expected - regrouped).abs() <= 1e-6 * regrouped.abs().max(1.0));
            eprintln!("{} p0={p0}: {:?} C_exp={:.3}", d.id, start.elapsed(), d.cost_expected);
        }
    }
}

#[test]
fn deterministic_mode_has_no_reserve_cost() {
    let config = case_study();
    let scen = deterministic_scenarios(&config);
    let prices = TradingPrices::grid(&scen);
    for m in 0..config.num_mgs() {
        let d = solve_mg(&config, m, &scen, &prices, 0.5).unwrap();
        assert_eq!(d.cost_reserve, 0.0);
        assert_eq!(d.cost_expected, d.cost_energy);
    }
}
