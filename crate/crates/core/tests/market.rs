use mmg_core::centralized::{duality_gap, solve_centralized};
use mmg_core::domain::{load_config, Lambda0, MmgConfig, UncertainSeries};
use mmg_core::market::{clear_market, clear_market_with, pso_income, run_isolated, MarketOptions, MarketOutcome};
use mmg_core::parallel::Execution;
use mmg_core::scenarios::{deterministic_scenarios, robust_scenarios};

fn two_mg() -> MmgConfig {
    load_config(include_str!("../data/two_mg.toml")).unwrap()
}

/// Three hours, two microgrids with generators of different cost and
/// uncertain demand, so the robust set is non-trivial but tiny.
fn small_robust() -> MmgConfig {
    load_config(
        r#"
        [horizon]
        hours = 3

        [market]
        gamma_buy = { mean = [90.0, 120.0, 100.0], dev_plus_pct = 5.0, dev_minus_pct = 5.0 }
        gamma_sell = { mean = [30.0, 40.0, 35.0], dev_plus_pct = 5.0, dev_minus_pct = 5.0 }
        tau = 2.0
        p0 = 0.5

        [[mgs]]
        id = "cheap"
        p_pso_max = 1.5
        demand = { mean = [0.2, 0.3, 0.25], dev_plus_pct = 10.0, dev_minus_pct = 10.0 }

        [[mgs.dgs]]
        a = 5.0
        b = 55.0
        p_min = 0.0
        p_max = 1.0
        reserve_up = 0.3
        reserve_dn = 0.3
        ramp_up = 0.5
        ramp_dn = 0.5

        [[mgs]]
        id = "dear"
        p_pso_max = 1.5
        demand = { mean = [0.6, 0.7, 0.5], dev_plus_pct = 10.0, dev_minus_pct = 10.0 }

        [[mgs.dgs]]
        a = 5.0
        b = 85.0
        p_min = 0.0
        p_max = 1.0
        reserve_up = 0.3
        reserve_dn = 0.3
        ramp_up = 0.5
        ramp_dn = 0.5
        "#,
    )
    .unwrap()
}

fn assert_band_and_settlement(config: &MmgConfig, out: &MarketOutcome, gb: &[Vec<f64>], gs: &[Vec<f64>]) {
    for rec in &out.iterations {
        for t in 0..config.horizon.hours {
            for h in 0..gb[t].len() {
                let l = rec.lambda_eq[t][h];
                assert!(
                    gs[t][h] - 1e-12 <= l && l <= gb[t][h] + 1e-12,
                    "k={} t={t} h={h}: {l}",
                    rec.k
                );
            }
        }
    }
    for (rb, rs) in out.grid_buy.iter().zip(&out.grid_sell) {
        for (b, s) in rb.iter().zip(rs) {
            assert!(b * s == 0.0 && *b >= 0.0 && *s >= 0.0);
        }
    }
    for d in &out.dispatches {
        for (rb, rs) in d.buy.iter().zip(&d.sell) {
            for (b, s) in rb.iter().zip(rs) {
                assert!(b * s <= 1e-8, "{}: buy {b} sell {s}", d.id);
            }
        }
    }
}

#[test]
fn two_microgrids_meet_at_marginal_cost() {
    let config = two_mg();
    let scen = deterministic_scenarios(&config);
    let out = clear_market(&config, &scen).unwrap();
    assert!(out.converged);
    let lambda = out.final_prices.lambda_eq[0][0];
    assert!((lambda - 75.0).abs() < 0.05, "{lambda}");
    let a = &out.dispatches[0];
    let b = &out.dispatches[1];
    assert!((a.sell[0][0] - 0.5).abs() < 0.01);
    assert!((b.buy[0][0] - 0.5).abs() < 0.01);
    assert_eq!(out.grid_buy[0][0], 0.0);
    assert_eq!(out.grid_sell[0][0], 0.0);
    assert!((out.system_objective() - 36.25).abs() < 0.01);
}

#[test]
fn cheap_grid_caps_the_price() {
    let mut config = two_mg();
    config.market.gamma_buy = UncertainSeries::constant(72.0, 1);
    let scen = deterministic_scenarios(&config);
    let out = clear_market(&config, &scen).unwrap();
    assert!(out.converged);
    assert_eq!(out.final_prices.lambda_eq[0][0], 72.0);
    // A produces up to marginal cost 72, i.e. 0.2 MW; the rest comes from the grid
    assert!((out.dispatches[0].sell[0][0] - 0.2).abs() < 1e-4);
    assert!((out.grid_buy[0][0] - 0.3).abs() < 1e-4);

    let central = solve_centralized(&config, &scen, false).unwrap();
    assert!((central.prices[0][0] - 72.0).abs() < 1e-4);
    assert!((central.grid_buy[0][0] - 0.3).abs() < 1e-4);
}

#[test]
fn centralized_two_microgrids() {
    let config = two_mg();
    let scen = deterministic_scenarios(&config);
    let c = solve_centralized(&config, &scen, false).unwrap();
    assert!((c.objective - 36.25).abs() < 1e-6);
    assert!((c.prices[0][0] - 75.0).abs() < 1e-4);
    assert!(c.kkt_residual <= 1e-6);
}

#[test]
fn gap_on_two_microgrids_with_smaller_step() {
    let mut config = two_mg();
    config.market.alpha = 0.5;
    let scen = deterministic_scenarios(&config);
    let c = solve_centralized(&config, &scen, false).unwrap();
    let m = clear_market(&config, &scen).unwrap();
    let gap = duality_gap(&c, &m).unwrap();
    assert!(gap.objective_rel <= 1e-3, "{gap:?}");
    assert!(gap.max_price_dev <= 0.1, "{gap:?}");
}

#[test]
fn zero_weight_scenarios_do_not_block_convergence() {
    // p0 = 1 leaves the eight uncertain scenarios without weight
    let config = two_mg();
    let scen = robust_scenarios(&config).unwrap();
    let out = clear_market(&config, &scen).unwrap();
    assert!(out.converged);
    assert!((out.final_prices.lambda_eq[0][0] - 75.0).abs() < 0.05);
}

#[test]
fn isolated_trading_costs_more() {
    let config = two_mg();
    let scen = deterministic_scenarios(&config);
    let iso = run_isolated(&config, &scen).unwrap();
    assert!((iso[1].buy[0][0] - 0.5).abs() < 1e-6);
    let iso_total: f64 = iso.iter().map(|d| d.cost_expected).sum();
    assert!((iso_total - 100.0).abs() < 1e-4);
    let coop = clear_market(&config, &scen).unwrap();
    assert!(coop.system_objective() < iso_total);
}

#[test]
fn isolated_mode_ignores_fees() {
    let mut config = small_robust();
    let scen = robust_scenarios(&config).unwrap();
    let a = run_isolated(&config, &scen).unwrap();
    config.market.tau = 7.0;
    let b = run_isolated(&config, &scen).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.cost_expected, y.cost_expected);
        assert_eq!(x.buy, y.buy);
    }
}

#[test]
fn self_sufficient_microgrid_does_not_trade() {
    let config = load_config(
        r#"
        [horizon]
        hours = 2
        [market]
        gamma_buy = { mean = 100.0 }
        gamma_sell = { mean = 20.0 }
        tau = 0.0
        [[mgs]]
        id = "solo"
        p_pso_max = 1.0
        demand = { mean = 0.4 }
        [[mgs.dgs]]
        a = 5.0
        b = 50.0
        p_min = 0.0
        p_max = 1.0
        reserve_up = 0.3
        reserve_dn = 0.3
        ramp_up = 0.5
        ramp_dn = 0.5
        "#,
    )
    .unwrap();
    let scen = deterministic_scenarios(&config);
    let out = clear_market(&config, &scen).unwrap();
    assert!(out.converged);
    // with nobody to trade with, the price settles at the local marginal
    // cost 2·5·0.4 + 50 and the leftover bid is within the tolerance
    let d = &out.dispatches[0];
    for t in 0..2 {
        assert!(d.buy[t][0] < config.market.eps && d.sell[t][0] < config.market.eps);
        let l = out.final_prices.lambda_eq[t][0];
        assert!((l - 54.0).abs() < 0.1, "{l}");
    }
    let iso = run_isolated(&config, &scen).unwrap();
    assert!(iso[0].buy.iter().flatten().all(|v| v.abs() < 1e-9));
    assert!((iso[0].cost_expected - d.cost_expected).abs() < 1e-3);
}

#[test]
fn robust_run_keeps_prices_in_band() {
    let config = small_robust();
    let scen = robust_scenarios(&config).unwrap();
    let out = clear_market(&config, &scen).unwrap();
    assert!(out.converged);
    assert_band_and_settlement(&config, &out, &scen.gamma_buy_th(), &scen.gamma_sell_th());
}

#[test]
fn robust_run_matches_pooled_problem_with_fees() {
    let config = small_robust();
    let scen = robust_scenarios(&config).unwrap();
    let central = solve_centralized(&config, &scen, true).unwrap();
    let market = clear_market(&config, &scen).unwrap();
    let gap = duality_gap(&central, &market).unwrap();
    assert!(gap.objective_rel <= 1e-3, "{gap:?}");
    assert!(gap.max_trade_dev <= 0.01, "{gap:?}");
}

#[test]
fn unprojected_variant_reaches_the_same_price() {
    let config = two_mg();
    let scen = deterministic_scenarios(&config);
    let opts = MarketOptions {
        projected: false,
        ..MarketOptions::default()
    };
    let out = clear_market_with(&config, &scen, &opts).unwrap();
    assert!(out.converged);
    assert!((out.final_prices.lambda_eq[0][0] - 75.0).abs() < 0.05);
}

#[test]
fn initial_price_does_not_change_the_outcome() {
    let mut config = small_robust();
    let scen = robust_scenarios(&config).unwrap();
    let mut objectives = Vec::new();
    for l0 in [Lambda0::GridSell, Lambda0::Mid, Lambda0::GridBuy] {
        config.market.lambda0 = l0;
        let out = clear_market(&config, &scen).unwrap();
        assert!(out.converged);
        objectives.push(out.system_objective());
    }
    let reference = objectives[1];
    for o in objectives {
        assert!((o - reference).abs() <= 1e-3 * reference.abs());
    }
}

#[test]
fn sequential_and_parallel_agree_exactly() {
    let config = small_robust();
    let scen = robust_scenarios(&config).unwrap();
    let run = |execution| {
        clear_market_with(
            &config,
            &scen,
            &MarketOptions {
                execution,
                ..MarketOptions::default()
            },
        )
        .unwrap()
    };
    let a = run(Execution::Sequential);
    let b = run(Execution::Parallel);
    assert_eq!(a.num_iterations(), b.num_iterations());
    assert_eq!(a.final_prices, b.final_prices);
    assert_eq!(a.system_objective(), b.system_objective());
}

#[test]
fn large_step_is_flagged_not_hidden() {
    let mut config = two_mg();
    config.market.alpha = 25.0;
    config.market.max_iter = 400;
    let scen = deterministic_scenarios(&config);
    let out = clear_market(&config, &scen).unwrap();
    assert!(!out.converged);
    assert!(out.oscillating || out.num_iterations() == 400);
}

#[test]
fn fee_income_examples() {
    let config = small_robust();
    let scen = robust_scenarios(&config).unwrap();
    let out = clear_market(&config, &scen).unwrap();
    let income = pso_income(&out.dispatches, 0.0);
    assert!(income.iter().flatten().all(|v| *v == 0.0));
    let with_fee = pso_income(&out.dispatches, 5.0);
    let gross: f64 = out.dispatches.iter().map(|d| d.buy[0][0] + d.sell[0][0]).sum();
    assert!((with_fee[0][0] - 5.0 * gross).abs() < 1e-12);
}

#[test]
fn mismatched_outcomes_are_rejected() {
    let config = two_mg();
    let det = deterministic_scenarios(&config);
    let robust = robust_scenarios(&config).unwrap();
    let c = solve_centralized(&config, &robust, false).unwrap();
    let m = clear_market(&config, &det).unwrap();
    assert!(duality_gap(&c, &m).is_err());
}
