//! The pooled problem over all microgrids with a single grid connection.
//!
//! This is the problem whose dual the market iteration climbs, so its
//! optimum and the multipliers of the coupling rows are the reference the
//! distributed result is checked against.

use crate::domain::MmgConfig;
use crate::error::{Error, Result};
use crate::market::MarketOutcome;
use crate::qp::{QpBuilder, QpProblem, QpSettings, QpSolver, QpStatus};
use crate::scenarios::ScenarioSet;
use crate::subproblem::{
    add_mg_block, binding_family, cost_breakdown, extract_dispatch, scenario_weights, CostBreakdown, MgDispatch,
    TradingPrices, VarIndex,
};

#[derive(Debug, Clone)]
pub struct CentralOutcome {
    pub dispatches: Vec<MgDispatch>,
    pub grid_buy: Vec<Vec<f64>>,
    pub grid_sell: Vec<Vec<f64>>,
    /// Optimal expected social cost in $.
    pub objective: f64,
    /// Raw multipliers of the coupling rows, `[t][h]`.
    pub duals: Vec<Vec<f64>>,
    /// Multipliers divided by scenario weight and interval length, i.e. in
    /// $/MWh and directly comparable with the market price. Scenarios with
    /// zero weight fall back to the middle of the grid band.
    pub prices: Vec<Vec<f64>>,
    /// System-level cost per `[t][h]`: local device costs, grid settlement
    /// and, if included, trading fees.
    pub system_hourly: Vec<Vec<f64>>,
    pub system_costs: CostBreakdown,
    pub include_fees: bool,
    pub kkt_residual: f64,
}

/// Grid arc columns `[t][h]`.
type GridColumns = Vec<Vec<usize>>;

/// Builds the pooled problem. Returns the problem, each microgrid's index
/// map, and the grid arc columns `[t][h]`.
pub fn build_central_problem(
    config: &MmgConfig,
    scen: &ScenarioSet,
    include_fees: bool,
) -> (QpProblem, Vec<VarIndex>, GridColumns, GridColumns) {
    let hours = config.horizon.hours;
    let dt = config.horizon.dt;
    let nh = scen.len();
    let p0 = config.market.p0;
    let w = scenario_weights(nh, p0);
    let gb = scen.gamma_buy_th();
    let gs = scen.gamma_sell_th();
    let tau = config.market.tau;

    let mut b = QpBuilder::new();
    let blocks: Vec<VarIndex> = (0..config.num_mgs())
        .map(|m| add_mg_block(&mut b, config, m, scen, p0))
        .collect();
    let mut grid_b = vec![vec![0; nh]; hours];
    let mut grid_s = vec![vec![0; nh]; hours];
    let cap = config.market.grid_cap.unwrap_or(f64::INFINITY);
    for t in 0..hours {
        for h in 0..nh {
            let k = w[h] * dt;
            grid_b[t][h] = b.add_var(format!("grid.buy[{},{h}]", t + 1));
            grid_s[t][h] = b.add_var(format!("grid.sell[{},{h}]", t + 1));
            b.add_linear(grid_b[t][h], k * gb[t][h]);
            b.add_linear(grid_s[t][h], -k * gs[t][h]);
            b.add_bounds(grid_b[t][h], 0.0, cap, "grid:grid_capacity");
            b.add_bounds(grid_s[t][h], 0.0, cap, "grid:grid_capacity");

            let mut terms = vec![(grid_b[t][h], -1.0), (grid_s[t][h], 1.0)];
            for ix in &blocks {
                terms.push((ix.buy[t][h], 1.0));
                terms.push((ix.sell[t][h], -1.0));
                if include_fees {
                    b.add_linear(ix.buy[t][h], k * tau);
                    b.add_linear(ix.sell[t][h], k * tau);
                }
            }
            b.add_eq(&terms, 0.0, "grid:coupling");
        }
    }
    (b.build(), blocks, grid_b, grid_s)
}

pub fn solve_centralized(config: &MmgConfig, scen: &ScenarioSet, include_fees: bool) -> Result<CentralOutcome> {
    let hours = config.horizon.hours;
    let dt = config.horizon.dt;
    let nh = scen.len();
    let p0 = config.market.p0;
    let tau = config.market.tau;
    let w = scenario_weights(nh, p0);
    let gb = scen.gamma_buy_th();
    let gs = scen.gamma_sell_th();

    let (problem, blocks, grid_b, grid_s) = build_central_problem(config, scen, include_fees);
    let coupling_rows: Vec<usize> = problem
        .eq_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.as_str() == "grid:coupling")
        .map(|(i, _)| i)
        .collect();
    let mut solver = QpSolver::new(problem, QpSettings::default())?;
    let sol = solver.solve()?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            let label = binding_family(solver.problem(), &sol);
            return Err(Error::Infeasible {
                mg: "centralized".into(),
                family: label,
            });
        }
        QpStatus::IterationLimit => {
            return Err(Error::Solver(format!(
                "centralized QP stopped at the iteration limit with KKT residual {:.2e}",
                sol.kkt.max()
            )))
        }
    }

    let mut duals = vec![vec![0.0; nh]; hours];
    let mut prices = vec![vec![0.0; nh]; hours];
    for t in 0..hours {
        for h in 0..nh {
            let nu = sol.duals_eq[coupling_rows[t * nh + h]];
            duals[t][h] = nu;
            prices[t][h] = if w[h] > 0.0 {
                nu / (w[h] * dt)
            } else {
                0.5 * (gb[t][h] + gs[t][h])
            };
        }
    }

    let fee = if include_fees { tau } else { 0.0 };
    let shadow = TradingPrices::from_market_price(&prices, fee);
    let free = TradingPrices {
        buy: vec![vec![0.0; nh]; hours],
        sell: vec![vec![0.0; nh]; hours],
    };
    let mut dispatches = Vec::new();
    let mut system_hourly = vec![vec![0.0; nh]; hours];
    for (m, ix) in blocks.iter().enumerate() {
        let mg = &config.mgs[m];
        let d = extract_dispatch(mg, ix, &sol.x, &shadow, dt, p0);
        let local = extract_dispatch(mg, ix, &sol.x, &free, dt, p0);
        for t in 0..hours {
            for h in 0..nh {
                system_hourly[t][h] += local.hourly_cost[t][h] + dt * fee * (d.buy[t][h] + d.sell[t][h]);
            }
        }
        dispatches.push(d);
    }
    let mut grid_buy = vec![vec![0.0; nh]; hours];
    let mut grid_sell = vec![vec![0.0; nh]; hours];
    for t in 0..hours {
        for h in 0..nh {
            let net: f64 = dispatches.iter().map(|d| d.buy[t][h] - d.sell[t][h]).sum();
            let raw = sol.x[grid_b[t][h]] - sol.x[grid_s[t][h]];
            // keep the solver's settlement, netted like the microgrid trades
            let settle = if (raw - net).abs() <= 1e-6 { net } else { raw };
            grid_buy[t][h] = settle.max(0.0);
            grid_sell[t][h] = (-settle).max(0.0);
            system_hourly[t][h] += dt * (gb[t][h] * grid_buy[t][h] - gs[t][h] * grid_sell[t][h]);
        }
    }
    let system_costs = cost_breakdown(&system_hourly, p0);
    Ok(CentralOutcome {
        dispatches,
        grid_buy,
        grid_sell,
        objective: sol.objective,
        duals,
        prices,
        system_hourly,
        system_costs,
        include_fees,
        kkt_residual: sol.kkt.max(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapMetrics {
    /// `|market − central| / max(1, |central|)` on the expected cost.
    pub objective_rel: f64,
    /// Largest difference in any microgrid's net purchase (MW).
    pub max_trade_dev: f64,
    /// Largest difference between market price and coupling price ($/MWh).
    pub max_price_dev: f64,
}

pub fn duality_gap(central: &CentralOutcome, market: &MarketOutcome) -> Result<GapMetrics> {
    if central.dispatches.len() != market.dispatches.len()
        || central.prices.len() != market.final_prices.lambda_eq.len()
        || central.prices.first().map(Vec::len) != market.final_prices.lambda_eq.first().map(Vec::len)
    {
        return Err(Error::Dimension(
            "market and centralized outcomes cover different systems".into(),
        ));
    }
    let obj_market = market.system_objective();
    let objective_rel = (obj_market - central.objective).abs() / central.objective.abs().max(1.0);
    // zero-weight scenarios are unconstrained by either objective
    let w = scenario_weights(central.prices[0].len(), market.p0);
    let mut max_trade_dev = 0.0f64;
    for (c, m) in central.dispatches.iter().zip(&market.dispatches) {
        for (rc, rm) in c.trade_schedule().iter().zip(m.trade_schedule()) {
            for (h, (a, b)) in rc.iter().zip(rm).enumerate() {
                if w[h] > 0.0 {
                    max_trade_dev = max_trade_dev.max((a - b).abs());
                }
            }
        }
    }
    let mut max_price_dev = 0.0f64;
    for (rc, rm) in central.prices.iter().zip(&market.final_prices.lambda_eq) {
        for (h, (a, b)) in rc.iter().zip(rm).enumerate() {
            if w[h] > 0.0 {
                max_price_dev = max_price_dev.max((a - b).abs());
            }
        }
    }
    Ok(GapMetrics {
        objective_rel,
        max_trade_dev,
        max_price_dev,
    })
}
