//! Iterative market clearing between the microgrid operators and the power
//! sharing operator (PSO).
//!
//! Each round the PSO posts buyer and seller prices for every (hour,
//! scenario) pair, each operator answers with the purchases and sales that
//! minimize its own expected cost, and the PSO moves the price along the net
//! demand (a projected sub-gradient step on the dual of the pooled problem).
//! Prices are kept inside the main-grid band; whatever cannot be matched
//! internally at a band edge is settled with the grid.
//!
//! Only bids cross the operator boundary ([`BidRequest`] out, [`BidReply`]
//! back); device data and costs stay with the operator.

use crate::domain::{Lambda0, MgConfig, MmgConfig};
use crate::error::Result;
use crate::parallel::{self, Execution};
use crate::qp::QpSolver;
use crate::scenarios::ScenarioSet;
use crate::subproblem::{cost_breakdown, scenario_weights, CostBreakdown, MgDispatch, MgModel, TradingPrices};

/// `λ + α·ΔP`: raise the price under net demand, lower it under net supply.
pub fn subgradient_step(lambda: f64, net_bid: f64, alpha: f64) -> f64 {
    lambda + alpha * net_bid
}

/// Projects the next price onto the grid band and settles the residual with
/// the grid. Returns `(λ_eq, grid_buy, grid_sell)`.
pub fn clamp_and_settle(lambda_next: f64, gamma_buy: f64, gamma_sell: f64, net_bid: f64) -> (f64, f64, f64) {
    if lambda_next >= gamma_buy {
        (gamma_buy, net_bid, 0.0)
    } else if lambda_next <= gamma_sell {
        (gamma_sell, 0.0, -net_bid)
    } else {
        (lambda_next, 0.0, 0.0)
    }
}

/// Fee income of the PSO per `[t][h]`: τ on every MW bought or sold.
pub fn pso_income(dispatches: &[MgDispatch], tau: f64) -> Vec<Vec<f64>> {
    let Some(first) = dispatches.first() else {
        return Vec::new();
    };
    let (hours, nh) = (first.hours(), first.num_scenarios());
    (0..hours)
        .map(|t| {
            (0..nh)
                .map(|h| tau * dispatches.iter().map(|d| d.buy[t][h] + d.sell[t][h]).sum::<f64>())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceState {
    /// Internal multiplier before projection, `[t][h]`.
    pub lambda: Vec<Vec<f64>>,
    /// Market equilibrium price inside the grid band.
    pub lambda_eq: Vec<Vec<f64>>,
    pub beta_buy: Vec<Vec<f64>>,
    pub beta_sell: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// Net internal demand `Σ_m (buy − sell)` per `[t][h]`.
    pub net_bid: Vec<Vec<f64>>,
    /// Grid purchase minus grid sale per `[t][h]`.
    pub grid_settlement: Vec<Vec<f64>>,
    pub mismatch: f64,
    /// Sum of the operators' expected costs at this round's prices.
    pub system_objective: f64,
    /// Prices the bids of this round were computed at.
    pub lambda_eq: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MarketOutcome {
    pub converged: bool,
    /// Stopped by the opt-in stall guard.
    pub stalled: bool,
    /// Stopped because the mismatch kept growing while prices toggled.
    pub oscillating: bool,
    pub iterations: Vec<IterationRecord>,
    pub final_prices: PriceState,
    pub dispatches: Vec<MgDispatch>,
    pub grid_buy: Vec<Vec<f64>>,
    pub grid_sell: Vec<Vec<f64>>,
    pub pso_income: Vec<Vec<f64>>,
    pub p0: f64,
    pub dt: f64,
}

impl MarketOutcome {
    pub fn num_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_mismatch(&self) -> f64 {
        self.iterations.last().map_or(f64::INFINITY, |r| r.mismatch)
    }

    /// Sum of the operators' expected costs.
    pub fn system_objective(&self) -> f64 {
        self.dispatches.iter().map(|d| d.cost_expected).sum()
    }

    /// PSO fee income split like the operators' costs (base case, reserve,
    /// expectation), in $ over the horizon.
    pub fn pso_income_breakdown(&self) -> CostBreakdown {
        let scaled: Vec<Vec<f64>> = self
            .pso_income
            .iter()
            .map(|r| r.iter().map(|v| v * self.dt).collect())
            .collect();
        cost_breakdown(&scaled, self.p0)
    }

    /// Expected cost of the whole system: fees are transfers to the PSO, so
    /// they cancel out.
    pub fn social_cost(&self) -> f64 {
        self.system_objective() - self.pso_income_breakdown().expected
    }
}

/// Prices the coordinator sends out in one round.
#[derive(Debug, Clone)]
pub struct BidRequest {
    pub round: usize,
    pub prices: TradingPrices,
}

/// An operator's answer: quantities only, per `[t][h]`, plus the operator's
/// own expected cost which the coordinator uses for reporting.
#[derive(Debug, Clone)]
pub struct BidReply {
    pub id: String,
    pub buy: Vec<Vec<f64>>,
    pub sell: Vec<Vec<f64>>,
    pub expected_cost: f64,
}

/// A microgrid operator as seen by the coordinator.
pub trait MicrogridOperator: Send {
    fn id(&self) -> &str;
    fn bid(&mut self, request: &BidRequest) -> Result<BidReply>;
    /// The dispatch behind the most recent bid, released for reporting once
    /// the market has closed.
    fn final_dispatch(&self) -> Option<MgDispatch>;
}

/// Operator that solves its own robust dispatch problem in-process and keeps
/// the solver warm between rounds.
pub struct LocalOperator {
    mg: MgConfig,
    model: MgModel,
    solver: QpSolver,
    last: Option<MgDispatch>,
}

impl LocalOperator {
    pub fn new(config: &MmgConfig, m: usize, scen: &ScenarioSet, prices: &TradingPrices, p0: f64) -> Result<Self> {
        let model = MgModel::build(config, m, scen, prices, p0)?;
        let solver = model.solver()?;
        Ok(Self {
            mg: config.mgs[m].clone(),
            model,
            solver,
            last: None,
        })
    }
}

impl MicrogridOperator for LocalOperator {
    fn id(&self) -> &str {
        &self.mg.id
    }

    fn bid(&mut self, request: &BidRequest) -> Result<BidReply> {
        let c = self.model.linear_cost(&request.prices)?;
        self.solver.update_linear_cost(&c);
        let sol = self.solver.solve()?;
        let d = self.model.finish(&self.mg, &sol, &request.prices)?;
        let reply = BidReply {
            id: self.mg.id.clone(),
            buy: d.buy.clone(),
            sell: d.sell.clone(),
            expected_cost: d.cost_expected,
        };
        self.last = Some(d);
        Ok(reply)
    }

    fn final_dispatch(&self) -> Option<MgDispatch> {
        self.last.clone()
    }
}

#[derive(Debug, Clone)]
pub struct MarketOptions {
    pub execution: Execution,
    /// Step from the projected price (default). When false, the raw
    /// multiplier is carried between rounds and only the posted price is
    /// clamped.
    pub projected: bool,
    /// Stop when the system objective has not moved by more than 1e-6
    /// (relative) over the last five rounds. Never counts as convergence.
    pub stall_guard: bool,
    /// Rounds per window for the oscillation detector.
    pub oscillation_window: usize,
    /// After convergence, let every operator bid once more at the settled
    /// prices so the reported dispatch matches the final price.
    pub final_rebid: bool,
}

impl Default for MarketOptions {
    fn default() -> Self {
        Self {
            execution: Execution::default(),
            projected: true,
            stall_guard: false,
            oscillation_window: 25,
            final_rebid: true,
        }
    }
}

fn initial_price(choice: &Lambda0, gb: f64, gs: f64) -> f64 {
    match *choice {
        Lambda0::Mid => 0.5 * (gb + gs),
        Lambda0::GridBuy => gb,
        Lambda0::GridSell => gs,
        Lambda0::Value(v) => v,
    }
}

pub fn clear_market(config: &MmgConfig, scen: &ScenarioSet) -> Result<MarketOutcome> {
    clear_market_with(config, scen, &MarketOptions::default())
}

pub fn clear_market_with(config: &MmgConfig, scen: &ScenarioSet, opts: &MarketOptions) -> Result<MarketOutcome> {
    let market = &config.market;
    let gb = scen.gamma_buy_th();
    let gs = scen.gamma_sell_th();
    let hours = config.horizon.hours;
    let nh = scen.len();
    // with p0 = 1 the uncertain scenarios carry no weight, so no objective
    // sees their trades and their prices are left alone
    let weighted: Vec<bool> = scenario_weights(nh, market.p0).iter().map(|w| *w > 0.0).collect();

    let mut lambda: Vec<Vec<f64>> = (0..hours)
        .map(|t| {
            (0..nh)
                .map(|h| initial_price(&market.lambda0, gb[t][h], gs[t][h]))
                .collect()
        })
        .collect();
    let mut lambda_eq: Vec<Vec<f64>> = (0..hours)
        .map(|t| (0..nh).map(|h| lambda[t][h].clamp(gs[t][h], gb[t][h])).collect())
        .collect();

    let prices = TradingPrices::from_market_price(&lambda_eq, market.tau);
    let built: Vec<Result<LocalOperator>> =
        parallel::map(opts.execution, &(0..config.num_mgs()).collect::<Vec<_>>(), |&m| {
            LocalOperator::new(config, m, scen, &prices, market.p0)
        });
    let mut operators = built.into_iter().collect::<Result<Vec<_>>>()?;

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut grid_buy = vec![vec![0.0; nh]; hours];
    let mut grid_sell = vec![vec![0.0; nh]; hours];
    let mut converged = false;
    let mut stalled = false;
    let mut oscillating = false;
    let mut detector = OscillationDetector::new(opts.oscillation_window);

    for k in 1..=market.max_iter {
        let request = BidRequest {
            round: k,
            prices: TradingPrices::from_market_price(&lambda_eq, market.tau),
        };
        let replies = collect_bids(opts.execution, &mut operators, &request)?;
        let net = net_bids(&replies, hours, nh);

        let posted = lambda_eq.clone();
        let mut mismatch = 0.0f64;
        for t in 0..hours {
            for h in (0..nh).filter(|&h| weighted[h]) {
                let base = if opts.projected { lambda_eq[t][h] } else { lambda[t][h] };
                let next = subgradient_step(base, net[t][h], market.alpha);
                let (eq, buy, sell) = clamp_and_settle(next, gb[t][h], gs[t][h], net[t][h]);
                lambda[t][h] = next;
                lambda_eq[t][h] = eq;
                grid_buy[t][h] = buy;
                grid_sell[t][h] = sell;
                mismatch = mismatch.max((net[t][h] - (buy - sell)).abs());
            }
        }
        let system_objective = replies.iter().map(|r| r.expected_cost).sum();
        iterations.push(IterationRecord {
            k,
            grid_settlement: (0..hours)
                .map(|t| (0..nh).map(|h| grid_buy[t][h] - grid_sell[t][h]).collect())
                .collect(),
            net_bid: net,
            mismatch,
            system_objective,
            lambda_eq: posted,
        });

        if mismatch < market.eps {
            converged = true;
            break;
        }
        if opts.stall_guard && is_stalled(&iterations) {
            stalled = true;
            break;
        }
        if detector.push(mismatch, &lambda_eq) {
            oscillating = true;
            break;
        }
    }

    let last_posted = iterations
        .last()
        .map(|r| r.lambda_eq.clone())
        .unwrap_or_else(|| lambda_eq.clone());
    let final_eq = if converged && opts.final_rebid {
        let request = BidRequest {
            round: iterations.len() + 1,
            prices: TradingPrices::from_market_price(&lambda_eq, market.tau),
        };
        let replies = collect_bids(opts.execution, &mut operators, &request)?;
        let net = net_bids(&replies, hours, nh);
        for t in 0..hours {
            for h in 0..nh {
                let (buy, sell) = settle_at(lambda_eq[t][h], gb[t][h], gs[t][h], net[t][h]);
                grid_buy[t][h] = buy;
                grid_sell[t][h] = sell;
            }
        }
        lambda_eq.clone()
    } else {
        last_posted
    };

    let dispatches: Vec<MgDispatch> = operators
        .iter()
        .map(|o| o.final_dispatch().expect("every operator has bid at least once"))
        .collect();
    let income = pso_income(&dispatches, market.tau);
    let final_prices = PriceState {
        lambda,
        beta_buy: final_eq
            .iter()
            .map(|r| r.iter().map(|l| l + market.tau).collect())
            .collect(),
        beta_sell: final_eq
            .iter()
            .map(|r| r.iter().map(|l| l - market.tau).collect())
            .collect(),
        lambda_eq: final_eq,
    };
    Ok(MarketOutcome {
        converged,
        stalled,
        oscillating,
        iterations,
        final_prices,
        dispatches,
        grid_buy,
        grid_sell,
        pso_income: income,
        p0: market.p0,
        dt: config.horizon.dt,
    })
}

/// Grid settlement at a price that is already final: the grid takes the
/// residual only when the price sits on a band edge.
fn settle_at(lambda_eq: f64, gb: f64, gs: f64, net: f64) -> (f64, f64) {
    if lambda_eq >= gb {
        (net, 0.0)
    } else if lambda_eq <= gs {
        (0.0, -net)
    } else {
        (0.0, 0.0)
    }
}

fn collect_bids<O: MicrogridOperator>(
    exec: Execution,
    operators: &mut [O],
    request: &BidRequest,
) -> Result<Vec<BidReply>> {
    parallel::map_mut(exec, operators, |op| op.bid(request))
        .into_iter()
        .collect()
}

fn net_bids(replies: &[BidReply], hours: usize, nh: usize) -> Vec<Vec<f64>> {
    (0..hours)
        .map(|t| {
            (0..nh)
                .map(|h| replies.iter().map(|r| r.buy[t][h] - r.sell[t][h]).sum())
                .collect()
        })
        .collect()
}

fn is_stalled(iterations: &[IterationRecord]) -> bool {
    const SPAN: usize = 5;
    if iterations.len() <= SPAN {
        return false;
    }
    let recent = &iterations[iterations.len() - SPAN - 1..];
    let reference = recent[0].system_objective;
    recent
        .iter()
        .all(|r| (r.system_objective - reference).abs() <= 1e-6 * reference.abs().max(1.0))
}

/// Flags a price iteration that toggles instead of settling: over several
/// consecutive windows the largest mismatch does not shrink while the
/// price steps keep changing sign.
struct OscillationDetector {
    window: usize,
    current_max: f64,
    count: usize,
    window_maxima: Vec<f64>,
    prev_lambda: Option<Vec<Vec<f64>>>,
    prev_step: Option<Vec<Vec<f64>>>,
    sign_flips: usize,
    window_flips: Vec<usize>,
}

impl OscillationDetector {
    const WINDOWS: usize = 4;

    fn new(window: usize) -> Self {
        Self {
            window: window.max(2),
            current_max: 0.0,
            count: 0,
            window_maxima: Vec::new(),
            prev_lambda: None,
            prev_step: None,
            sign_flips: 0,
            window_flips: Vec::new(),
        }
    }

    fn push(&mut self, mismatch: f64, lambda_eq: &[Vec<f64>]) -> bool {
        if let Some(prev) = &self.prev_lambda {
            let step: Vec<Vec<f64>> = lambda_eq
                .iter()
                .zip(prev)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            if let Some(prev_step) = &self.prev_step {
                let flipped = step
                    .iter()
                    .flatten()
                    .zip(prev_step.iter().flatten())
                    .any(|(a, b)| a * b < 0.0);
                self.sign_flips += usize::from(flipped);
            }
            self.prev_step = Some(step);
        }
        self.prev_lambda = Some(lambda_eq.to_vec());
        self.current_max = self.current_max.max(mismatch);
        self.count += 1;
        if self.count < self.window {
            return false;
        }
        self.window_maxima.push(self.current_max);
        self.window_flips.push(self.sign_flips);
        self.current_max = 0.0;
        self.count = 0;
        self.sign_flips = 0;

        let n = self.window_maxima.len();
        if n < Self::WINDOWS {
            return false;
        }
        let maxima = &self.window_maxima[n - Self::WINDOWS..];
        let not_shrinking = maxima.windows(2).all(|w| w[1] >= 0.99 * w[0]);
        let toggling = self.window_flips[n - Self::WINDOWS..]
            .iter()
            .all(|&f| f * 2 >= self.window);
        not_shrinking && toggling
    }
}

/// Every operator trades with the main grid alone at the grid prices.
pub fn run_isolated(config: &MmgConfig, scen: &ScenarioSet) -> Result<Vec<MgDispatch>> {
    run_isolated_with(config, scen, Execution::default())
}

pub fn run_isolated_with(config: &MmgConfig, scen: &ScenarioSet, exec: Execution) -> Result<Vec<MgDispatch>> {
    let prices = TradingPrices::grid(scen);
    let idx: Vec<usize> = (0..config.num_mgs()).collect();
    parallel::map(exec, &idx, |&m| {
        crate::subproblem::solve_mg(config, m, scen, &prices, config.market.p0)
    })
    .into_iter()
    .collect()
}

/// Weighted average over scenarios of a `[t][h]` array, summed over hours.
pub fn expected_total(values: &[Vec<f64>], p0: f64) -> f64 {
    values
        .iter()
        .map(|r| {
            scenario_weights(r.len(), p0)
                .iter()
                .zip(r)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .sum()
}
