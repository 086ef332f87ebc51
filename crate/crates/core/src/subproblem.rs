//! One microgrid's robust day-ahead dispatch problem.
//!
//! Every device has a copy of its decisions per hour and per scenario. The
//! robust coupling across scenarios (reserve band, ramping between the worst
//! cases of adjacent hours, SOC envelopes, worst-case load shedding) is kept
//! convex through per-hour envelope variables that bound the scenario copies
//! from above or below.
//!
//! The objective is `Σ_t [p0·C₀(t) + (1−p0)/H · Σ_{h≥1} C_h(t)]`, which is the
//! expected cost `C_E + (1−p0)·C_R` regrouped into a nonnegatively weighted
//! sum of convex terms.

use crate::domain::{MgConfig, MmgConfig};
use crate::error::{Error, Result};
use crate::qp::{QpBuilder, QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};
use crate::scenarios::ScenarioSet;

/// Per-(hour, scenario) trading prices `[t][h]` seen by the microgrids.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingPrices {
    pub buy: Vec<Vec<f64>>,
    pub sell: Vec<Vec<f64>>,
}

impl TradingPrices {
    /// The main-grid prices of each scenario, as used for isolated trading.
    pub fn grid(scen: &ScenarioSet) -> Self {
        Self {
            buy: scen.gamma_buy_th(),
            sell: scen.gamma_sell_th(),
        }
    }

    /// Buyer and seller prices around a market price with a per-unit fee.
    pub fn from_market_price(lambda_eq: &[Vec<f64>], tau: f64) -> Self {
        Self {
            buy: lambda_eq.iter().map(|r| r.iter().map(|l| l + tau).collect()).collect(),
            sell: lambda_eq.iter().map(|r| r.iter().map(|l| l - tau).collect()).collect(),
        }
    }

    fn check(&self, hours: usize, nh: usize) -> Result<()> {
        let ok =
            |p: &Vec<Vec<f64>>| p.len() == hours && p.iter().all(|r| r.len() == nh && r.iter().all(|v| v.is_finite()));
        if ok(&self.buy) && ok(&self.sell) {
            Ok(())
        } else {
            Err(Error::MissingPrices(format!(
                "expected finite {hours}x{nh} buy and sell price arrays"
            )))
        }
    }
}

/// Probability weight of each scenario in the expected cost.
pub fn scenario_weights(nh: usize, p0: f64) -> Vec<f64> {
    if nh == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - p0) / (nh - 1) as f64;
    std::iter::once(p0).chain(std::iter::repeat_n(rest, nh - 1)).collect()
}

/// Column indices of every decision variable of one microgrid.
#[derive(Debug, Clone)]
pub struct VarIndex {
    pub hours: usize,
    pub nh: usize,
    /// `[t][h][g]`
    pub dg: Vec<Vec<Vec<usize>>>,
    /// `[t][h][e]`
    pub chg: Vec<Vec<Vec<usize>>>,
    pub dis: Vec<Vec<Vec<usize>>>,
    pub soc: Vec<Vec<Vec<usize>>>,
    /// `[t][h]`, present only when the flexible load can move anything.
    pub rd: Option<Vec<Vec<usize>>>,
    pub cd: Option<Vec<Vec<usize>>>,
    pub buy: Vec<Vec<usize>>,
    pub sell: Vec<Vec<usize>>,
    /// `[t][g]`
    pub dg_hi: Vec<Vec<usize>>,
    pub dg_lo: Vec<Vec<usize>>,
    /// `[t][e]`
    pub soc_hi: Vec<Vec<usize>>,
    pub soc_lo: Vec<Vec<usize>>,
    pub chg_hi: Vec<Vec<usize>>,
    pub chg_lo: Vec<Vec<usize>>,
    pub dis_hi: Vec<Vec<usize>>,
    pub dis_lo: Vec<Vec<usize>>,
    /// `[t]`
    pub rd_lo: Option<Vec<usize>>,
    pub cd_hi: Option<Vec<usize>>,
}

/// Appends one microgrid's variables, costs (without trading) and
/// constraints to `b`. Names and constraint labels are prefixed with the
/// microgrid id; labels end in the constraint family name.
pub fn add_mg_block(b: &mut QpBuilder, config: &MmgConfig, m: usize, scen: &ScenarioSet, p0: f64) -> VarIndex {
    let mg = &config.mgs[m];
    let id = mg.id.as_str();
    let hours = config.horizon.hours;
    let dt = config.horizon.dt;
    let nh = scen.len();
    let w = scenario_weights(nh, p0);
    let flex = mg.active_flex();
    let lbl = |family: &str| format!("{id}:{family}");

    let per_th = |name: &str, count: usize, b: &mut QpBuilder| -> Vec<Vec<Vec<usize>>> {
        (0..hours)
            .map(|t| {
                (0..nh)
                    .map(|h| {
                        (0..count)
                            .map(|k| b.add_var(format!("{id}.{name}{k}[{},{h}]", t + 1)))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let dg = per_th("dg", mg.dgs.len(), b);
    let chg = per_th("chg", mg.esses.len(), b);
    let dis = per_th("dis", mg.esses.len(), b);
    let soc = per_th("soc", mg.esses.len(), b);
    let scalar_th = |name: &str, b: &mut QpBuilder| -> Vec<Vec<usize>> {
        (0..hours)
            .map(|t| {
                (0..nh)
                    .map(|h| b.add_var(format!("{id}.{name}[{},{h}]", t + 1)))
                    .collect()
            })
            .collect()
    };
    let rd = flex.map(|_| scalar_th("rd", b));
    let cd = flex.map(|_| scalar_th("cd", b));
    let buy = scalar_th("buy", b);
    let sell = scalar_th("sell", b);
    let per_t = |name: &str, count: usize, b: &mut QpBuilder| -> Vec<Vec<usize>> {
        (0..hours)
            .map(|t| {
                (0..count)
                    .map(|k| b.add_var(format!("{id}.{name}{k}[{}]", t + 1)))
                    .collect()
            })
            .collect()
    };
    let dg_hi = per_t("dg_hi", mg.dgs.len(), b);
    let dg_lo = per_t("dg_lo", mg.dgs.len(), b);
    let soc_hi = per_t("soc_hi", mg.esses.len(), b);
    let soc_lo = per_t("soc_lo", mg.esses.len(), b);
    let chg_hi = per_t("chg_hi", mg.esses.len(), b);
    let chg_lo = per_t("chg_lo", mg.esses.len(), b);
    let dis_hi = per_t("dis_hi", mg.esses.len(), b);
    let dis_lo = per_t("dis_lo", mg.esses.len(), b);
    let rd_lo = flex.map(|_| {
        (0..hours)
            .map(|t| b.add_var(format!("{id}.rd_lo[{}]", t + 1)))
            .collect::<Vec<_>>()
    });
    let cd_hi = flex.map(|_| {
        (0..hours)
            .map(|t| b.add_var(format!("{id}.cd_hi[{}]", t + 1)))
            .collect::<Vec<_>>()
    });

    // Costs.
    for t in 0..hours {
        for h in 0..nh {
            let k = w[h] * dt;
            for (g, p) in mg.dgs.iter().enumerate() {
                b.add_square(&[(dg[t][h][g], 1.0)], k * p.a);
                b.add_linear(dg[t][h][g], k * p.b);
            }
            for (e, s) in mg.esses.iter().enumerate() {
                b.add_square(&[(chg[t][h][e], 1.0), (dis[t][h][e], 1.0)], k * s.a);
            }
            if let (Some(f), Some(rd), Some(cd)) = (flex, &rd, &cd) {
                b.add_square(&[(rd[t][h], 1.0), (cd[t][h], 1.0)], k * f.a);
            }
        }
    }

    // Power balance and per-scenario bounds.
    for t in 0..hours {
        for h in 0..nh {
            let s = &scen.scenarios[h];
            let mut terms: Vec<(usize, f64)> = dg[t][h].iter().map(|&v| (v, 1.0)).collect();
            for e in 0..mg.esses.len() {
                terms.push((dis[t][h][e], 1.0));
                terms.push((chg[t][h][e], -1.0));
            }
            terms.push((buy[t][h], 1.0));
            terms.push((sell[t][h], -1.0));
            if let (Some(rd), Some(cd)) = (&rd, &cd) {
                terms.push((rd[t][h], -1.0));
                terms.push((cd[t][h], 1.0));
            }
            b.add_eq(&terms, s.net_demand(m, t), &lbl("balance"));

            for (g, p) in mg.dgs.iter().enumerate() {
                b.add_bounds(dg[t][h][g], p.p_min, p.p_max, &lbl("dg_bounds"));
                if h > 0 {
                    let pair = [(dg[t][h][g], 1.0), (dg[t][0][g], -1.0)];
                    b.add_le(&pair, p.reserve_up, &lbl("reserve_band"));
                    b.add_ge(&pair, -p.reserve_dn, &lbl("reserve_band"));
                }
                b.add_ge(&[(dg_hi[t][g], 1.0), (dg[t][h][g], -1.0)], 0.0, &lbl("dg_envelope"));
                b.add_le(&[(dg_lo[t][g], 1.0), (dg[t][h][g], -1.0)], 0.0, &lbl("dg_envelope"));
            }
            for (e, ess) in mg.esses.iter().enumerate() {
                b.add_bounds(chg[t][h][e], 0.0, ess.pc_max, &lbl("ess_power"));
                b.add_bounds(dis[t][h][e], 0.0, ess.pd_max, &lbl("ess_power"));
                b.add_bounds(soc[t][h][e], ess.soc_min, ess.soc_max, &lbl("soc_bounds"));
                b.add_ge(&[(soc_hi[t][e], 1.0), (soc[t][h][e], -1.0)], 0.0, &lbl("soc_envelope"));
                b.add_le(&[(soc_lo[t][e], 1.0), (soc[t][h][e], -1.0)], 0.0, &lbl("soc_envelope"));
                b.add_ge(
                    &[(chg_hi[t][e], 1.0), (chg[t][h][e], -1.0)],
                    0.0,
                    &lbl("ess_power_envelope"),
                );
                b.add_le(
                    &[(chg_lo[t][e], 1.0), (chg[t][h][e], -1.0)],
                    0.0,
                    &lbl("ess_power_envelope"),
                );
                b.add_ge(
                    &[(dis_hi[t][e], 1.0), (dis[t][h][e], -1.0)],
                    0.0,
                    &lbl("ess_power_envelope"),
                );
                b.add_le(
                    &[(dis_lo[t][e], 1.0), (dis[t][h][e], -1.0)],
                    0.0,
                    &lbl("ess_power_envelope"),
                );
            }
            if let (Some(f), Some(rd), Some(cd), Some(rd_lo), Some(cd_hi)) = (flex, &rd, &cd, &rd_lo, &cd_hi) {
                b.add_bounds(rd[t][h], 0.0, f.rd_max[t], &lbl("flex_caps"));
                b.add_bounds(cd[t][h], 0.0, f.cd_max[t], &lbl("flex_caps"));
                b.add_le(&[(rd_lo[t], 1.0), (rd[t][h], -1.0)], 0.0, &lbl("flex_envelope"));
                b.add_ge(&[(cd_hi[t], 1.0), (cd[t][h], -1.0)], 0.0, &lbl("flex_envelope"));
            }
            b.add_bounds(buy[t][h], 0.0, mg.p_pso_max, &lbl("trade_capacity"));
            b.add_bounds(sell[t][h], 0.0, mg.p_pso_max, &lbl("trade_capacity"));
        }
    }

    // Intertemporal DG ramping between the extreme scenarios of adjacent hours.
    for (g, p) in mg.dgs.iter().enumerate() {
        for t in 0..hours {
            b.add_bounds(dg_hi[t][g], p.p_min, p.p_max, &lbl("dg_envelope"));
            b.add_bounds(dg_lo[t][g], p.p_min, p.p_max, &lbl("dg_envelope"));
            if t > 0 {
                b.add_le(
                    &[(dg_hi[t][g], 1.0), (dg_lo[t - 1][g], -1.0)],
                    p.ramp_up * dt,
                    &lbl("ramp_up"),
                );
                b.add_le(
                    &[(dg_hi[t - 1][g], 1.0), (dg_lo[t][g], -1.0)],
                    p.ramp_dn * dt,
                    &lbl("ramp_dn"),
                );
            }
        }
    }

    // Storage dynamics.
    for (e, ess) in mg.esses.iter().enumerate() {
        let k = dt / ess.capacity;
        let (term_lo, term_hi) = ess.terminal_band();
        for t in 0..hours {
            // base-case recursion from the reference SOC
            let mut terms = vec![
                (soc[t][0][e], 1.0),
                (chg[t][0][e], -k * ess.eta_c),
                (dis[t][0][e], k / ess.eta_d),
            ];
            let mut hi = vec![
                (soc_hi[t][e], 1.0),
                (chg_hi[t][e], -k * ess.eta_c),
                (dis_lo[t][e], k / ess.eta_d),
            ];
            let mut lo = vec![
                (soc_lo[t][e], 1.0),
                (chg_lo[t][e], -k * ess.eta_c),
                (dis_hi[t][e], k / ess.eta_d),
            ];
            let rhs = if t == 0 {
                ess.soc_ref
            } else {
                terms.push((soc[t - 1][0][e], -1.0));
                hi.push((soc_hi[t - 1][e], -1.0));
                lo.push((soc_lo[t - 1][e], -1.0));
                0.0
            };
            b.add_eq(&terms, rhs, &lbl("soc_recursion"));
            b.add_ge(&hi, rhs, &lbl("soc_envelope_recursion"));
            b.add_le(&lo, rhs, &lbl("soc_envelope_recursion"));

            b.add_bounds(soc_hi[t][e], ess.soc_min, ess.soc_max, &lbl("soc_bounds"));
            b.add_bounds(soc_lo[t][e], ess.soc_min, ess.soc_max, &lbl("soc_bounds"));
            for v in [chg_hi[t][e], chg_lo[t][e]] {
                b.add_bounds(v, 0.0, ess.pc_max, &lbl("ess_power_envelope"));
            }
            for v in [dis_hi[t][e], dis_lo[t][e]] {
                b.add_bounds(v, 0.0, ess.pd_max, &lbl("ess_power_envelope"));
            }
            // The envelopes must be attained by some scenario, otherwise the
            // envelope recursion says nothing about the scenario SOCs.
            if nh >= 2 {
                b.add_eq(
                    &[(soc[t][1][e], 1.0), (soc_hi[t][e], -1.0)],
                    0.0,
                    &lbl("soc_attainment"),
                );
            }
            if nh >= 3 {
                b.add_eq(
                    &[(soc[t][2][e], 1.0), (soc_lo[t][e], -1.0)],
                    0.0,
                    &lbl("soc_attainment"),
                );
            }
        }
        let last = hours - 1;
        b.add_eq(&[(soc[last][0][e], 1.0)], ess.soc_ref, &lbl("terminal_soc"));
        for h in 1..nh {
            b.add_bounds(soc[last][h][e], term_lo, term_hi, &lbl("terminal_soc"));
        }
    }

    // Flexible load: base-case neutrality and worst-case shed budget.
    if let (Some(f), Some(rd), Some(cd), Some(rd_lo), Some(cd_hi)) = (flex, &rd, &cd, &rd_lo, &cd_hi) {
        let neutral: Vec<_> = (0..hours).flat_map(|t| [(rd[t][0], 1.0), (cd[t][0], -1.0)]).collect();
        b.add_eq(&neutral, 0.0, &lbl("load_neutrality"));
        for t in 0..hours {
            b.add_bounds(rd_lo[t], 0.0, f.rd_max[t], &lbl("flex_envelope"));
            b.add_bounds(cd_hi[t], 0.0, f.cd_max[t], &lbl("flex_envelope"));
        }
        let shed: Vec<_> = (0..hours).flat_map(|t| [(cd_hi[t], dt), (rd_lo[t], -dt)]).collect();
        b.add_le(&shed, f.e_shed, &lbl("shed_budget"));
    }

    VarIndex {
        hours,
        nh,
        dg,
        chg,
        dis,
        soc,
        rd,
        cd,
        buy,
        sell,
        dg_hi,
        dg_lo,
        soc_hi,
        soc_lo,
        chg_hi,
        chg_lo,
        dis_hi,
        dis_lo,
        rd_lo,
        cd_hi,
    }
}

/// A microgrid's problem with its index map; the trading prices only enter
/// the linear cost, so the model can be re-priced without rebuilding.
#[derive(Debug, Clone)]
pub struct MgModel {
    pub m: usize,
    pub id: String,
    pub problem: QpProblem,
    pub index: VarIndex,
    base_c: Vec<f64>,
    weights: Vec<f64>,
    dt: f64,
    p0: f64,
}

impl MgModel {
    pub fn build(config: &MmgConfig, m: usize, scen: &ScenarioSet, prices: &TradingPrices, p0: f64) -> Result<Self> {
        let hours = config.horizon.hours;
        prices.check(hours, scen.len())?;
        if scen.hours() != hours {
            return Err(Error::Dimension(format!(
                "scenarios cover {} hours, config has {hours}",
                scen.hours()
            )));
        }
        let mut b = QpBuilder::new();
        let index = add_mg_block(&mut b, config, m, scen, p0);
        let problem = b.build();
        let mut model = Self {
            m,
            id: config.mgs[m].id.clone(),
            base_c: problem.c.clone(),
            problem,
            index,
            weights: scenario_weights(scen.len(), p0),
            dt: config.horizon.dt,
            p0,
        };
        model.problem.c = model.linear_cost(prices)?;
        Ok(model)
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// Linear cost vector of the problem at the given trading prices.
    pub fn linear_cost(&self, prices: &TradingPrices) -> Result<Vec<f64>> {
        let ix = &self.index;
        prices.check(ix.hours, ix.nh)?;
        let mut c = self.base_c.clone();
        for t in 0..ix.hours {
            for h in 0..ix.nh {
                let k = self.weights[h] * self.dt;
                c[ix.buy[t][h]] += k * prices.buy[t][h];
                c[ix.sell[t][h]] -= k * prices.sell[t][h];
            }
        }
        Ok(c)
    }

    pub fn solver(&self) -> Result<QpSolver> {
        QpSolver::new(self.problem.clone(), QpSettings::default())
    }

    /// Turns a solver result into a dispatch, or an error naming what failed.
    pub fn finish(&self, mg: &MgConfig, sol: &QpSolution, prices: &TradingPrices) -> Result<MgDispatch> {
        match sol.status {
            QpStatus::Optimal => Ok(extract_dispatch(mg, &self.index, &sol.x, prices, self.dt, self.p0)),
            QpStatus::Infeasible => Err(Error::Infeasible {
                mg: self.id.clone(),
                family: binding_family(&self.problem, sol),
            }),
            QpStatus::IterationLimit => Err(Error::Solver(format!(
                "{}: QP stopped at the iteration limit with KKT residual {:.2e}",
                self.id,
                sol.kkt.max()
            ))),
        }
    }
}

/// Constraint family carrying the largest multiplier; on an infeasible
/// problem the multipliers grow along the infeasibility certificate.
pub fn binding_family(problem: &QpProblem, sol: &QpSolution) -> String {
    let mut best = (0.0f64, String::from("unknown"));
    for (v, label) in sol
        .duals_eq
        .iter()
        .zip(&problem.eq_labels)
        .chain(sol.duals_in.iter().zip(&problem.in_labels))
    {
        if v.abs() > best.0 {
            best = (v.abs(), label.clone());
        }
    }
    best.1.rsplit(':').next().unwrap_or("unknown").to_string()
}

pub fn build_mg_problem(
    config: &MmgConfig,
    m: usize,
    scen: &ScenarioSet,
    prices: &TradingPrices,
    p0: f64,
) -> Result<QpProblem> {
    Ok(MgModel::build(config, m, scen, prices, p0)?.problem)
}

pub fn solve_mg(
    config: &MmgConfig,
    m: usize,
    scen: &ScenarioSet,
    prices: &TradingPrices,
    p0: f64,
) -> Result<MgDispatch> {
    let model = MgModel::build(config, m, scen, prices, p0)?;
    let sol = model.solver()?.solve()?;
    model.finish(&config.mgs[m], &sol, prices)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub energy: f64,
    pub reserve: f64,
    pub expected: f64,
}

/// Energy cost (base case), reserve cost (average excess of the other
/// scenarios) and their expectation, from per-hour scenario costs `[t][h]`.
pub fn cost_breakdown(hourly: &[Vec<f64>], p0: f64) -> CostBreakdown {
    let energy: f64 = hourly.iter().map(|r| r[0]).sum();
    let reserve: f64 = hourly
        .iter()
        .map(|r| {
            let nh = r.len();
            if nh <= 1 {
                0.0
            } else {
                r[1..].iter().sum::<f64>() / (nh - 1) as f64 - r[0]
            }
        })
        .sum();
    CostBreakdown {
        energy,
        reserve,
        expected: energy + (1.0 - p0) * reserve,
    }
}

/// The same expectation written as a weighted sum over scenarios.
pub fn regrouped_expected_cost(hourly: &[Vec<f64>], p0: f64) -> f64 {
    hourly
        .iter()
        .map(|r| {
            scenario_weights(r.len(), p0)
                .iter()
                .zip(r)
                .map(|(w, c)| w * c)
                .sum::<f64>()
        })
        .sum()
}

/// A solved dispatch. Arrays follow the index layout of [`VarIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct MgDispatch {
    pub id: String,
    pub dg: Vec<Vec<Vec<f64>>>,
    pub chg: Vec<Vec<Vec<f64>>>,
    pub dis: Vec<Vec<Vec<f64>>>,
    pub soc: Vec<Vec<Vec<f64>>>,
    pub rd: Vec<Vec<f64>>,
    pub cd: Vec<Vec<f64>>,
    pub buy: Vec<Vec<f64>>,
    pub sell: Vec<Vec<f64>>,
    pub dg_hi: Vec<Vec<f64>>,
    pub dg_lo: Vec<Vec<f64>>,
    pub soc_hi: Vec<Vec<f64>>,
    pub soc_lo: Vec<Vec<f64>>,
    pub chg_hi: Vec<Vec<f64>>,
    pub chg_lo: Vec<Vec<f64>>,
    pub dis_hi: Vec<Vec<f64>>,
    pub dis_lo: Vec<Vec<f64>>,
    pub rd_lo: Vec<f64>,
    pub cd_hi: Vec<f64>,
    /// Cost of hour `t` in scenario `h`, `[t][h]`, trading included.
    pub hourly_cost: Vec<Vec<f64>>,
    pub cost_energy: f64,
    pub cost_reserve: f64,
    pub cost_expected: f64,
}

impl MgDispatch {
    pub fn hours(&self) -> usize {
        self.buy.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.buy[0].len()
    }

    /// Net purchase `buy − sell` per `[t][h]`.
    pub fn trade_schedule(&self) -> Vec<Vec<f64>> {
        self.buy
            .iter()
            .zip(&self.sell)
            .map(|(b, s)| b.iter().zip(s).map(|(b, s)| b - s).collect())
            .collect()
    }

    /// Long-format rows `(t, h, device, value)` with 1-based hours.
    pub fn rows(&self) -> Vec<(usize, usize, String, f64)> {
        let mut out = Vec::new();
        for t in 0..self.hours() {
            for h in 0..self.num_scenarios() {
                let mut push = |name: String, v: f64| out.push((t + 1, h, name, v));
                for (g, v) in self.dg[t][h].iter().enumerate() {
                    push(format!("dg{g}"), *v);
                }
                for e in 0..self.chg[t][h].len() {
                    push(format!("ess{e}_charge"), self.chg[t][h][e]);
                    push(format!("ess{e}_discharge"), self.dis[t][h][e]);
                    push(format!("ess{e}_soc"), self.soc[t][h][e]);
                }
                push("load_rd".into(), self.rd[t][h]);
                push("load_cd".into(), self.cd[t][h]);
                push("buy".into(), self.buy[t][h]);
                push("sell".into(), self.sell[t][h]);
            }
        }
        out
    }
}

fn pick3(x: &[f64], ix: &[Vec<Vec<usize>>]) -> Vec<Vec<Vec<f64>>> {
    ix.iter()
        .map(|a| a.iter().map(|b| b.iter().map(|&i| x[i]).collect()).collect())
        .collect()
}

fn pick2(x: &[f64], ix: &[Vec<usize>]) -> Vec<Vec<f64>> {
    ix.iter().map(|a| a.iter().map(|&i| x[i]).collect()).collect()
}

fn extremes(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Reads the solution back and puts zero-cost slack into canonical form:
/// power envelopes are tightened to the scenario extremes and simultaneous
/// purchases and sales are netted when that cannot cost more.
pub fn extract_dispatch(
    mg: &MgConfig,
    ix: &VarIndex,
    x: &[f64],
    prices: &TradingPrices,
    dt: f64,
    p0: f64,
) -> MgDispatch {
    let (hours, nh) = (ix.hours, ix.nh);
    let dg = pick3(x, &ix.dg);
    let chg = pick3(x, &ix.chg);
    let dis = pick3(x, &ix.dis);
    let soc = pick3(x, &ix.soc);
    let rd = ix.rd.as_ref().map_or(vec![vec![0.0; nh]; hours], |i| pick2(x, i));
    let cd = ix.cd.as_ref().map_or(vec![vec![0.0; nh]; hours], |i| pick2(x, i));
    let mut buy = pick2(x, &ix.buy);
    let mut sell = pick2(x, &ix.sell);
    for t in 0..hours {
        for h in 0..nh {
            if prices.buy[t][h] >= prices.sell[t][h] {
                let net = buy[t][h] - sell[t][h];
                buy[t][h] = net.max(0.0);
                sell[t][h] = (-net).max(0.0);
            }
        }
    }

    let env = |vals: &Vec<Vec<Vec<f64>>>, count: usize| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut lo = vec![vec![0.0; count]; hours];
        let mut hi = vec![vec![0.0; count]; hours];
        for t in 0..hours {
            for k in 0..count {
                let (l, u) = extremes((0..nh).map(|h| vals[t][h][k]));
                lo[t][k] = l;
                hi[t][k] = u;
            }
        }
        (lo, hi)
    };
    let (dg_lo, dg_hi) = env(&dg, mg.dgs.len());
    let (chg_lo, chg_hi) = env(&chg, mg.esses.len());
    let (dis_lo, dis_hi) = env(&dis, mg.esses.len());
    let soc_hi = pick2(x, &ix.soc_hi);
    let soc_lo = pick2(x, &ix.soc_lo);
    let rd_lo: Vec<f64> = (0..hours).map(|t| extremes(rd[t].iter().copied()).0).collect();
    let cd_hi: Vec<f64> = (0..hours).map(|t| extremes(cd[t].iter().copied()).1).collect();

    let flex_a = mg.active_flex().map_or(0.0, |f| f.a);
    let hourly_cost: Vec<Vec<f64>> = (0..hours)
        .map(|t| {
            (0..nh)
                .map(|h| {
                    let gen: f64 = mg.dgs.iter().zip(&dg[t][h]).map(|(p, v)| p.a * v * v + p.b * v).sum();
                    let ess: f64 = mg
                        .esses
                        .iter()
                        .enumerate()
                        .map(|(e, s)| s.a * (chg[t][h][e] + dis[t][h][e]).powi(2))
                        .sum();
                    let load = flex_a * (rd[t][h] + cd[t][h]).powi(2);
                    let trade = prices.buy[t][h] * buy[t][h] - prices.sell[t][h] * sell[t][h];
                    dt * (gen + ess + load + trade)
                })
                .collect()
        })
        .collect();
    let costs = cost_breakdown(&hourly_cost, p0);

    MgDispatch {
        id: mg.id.clone(),
        dg,
        chg,
        dis,
        soc,
        rd,
        cd,
        buy,
        sell,
        dg_hi,
        dg_lo,
        soc_hi,
        soc_lo,
        chg_hi,
        chg_lo,
        dis_hi,
        dis_lo,
        rd_lo,
        cd_hi,
        hourly_cost,
        cost_energy: costs.energy,
        cost_reserve: costs.reserve,
        cost_expected: costs.expected,
    }
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    /// Violations of the model constraints beyond the tolerance.
    pub violations: Vec<String>,
    /// Economically odd but allowed patterns, such as charging and
    /// discharging the same storage unit in the same hour.
    pub warnings: Vec<String>,
    /// Largest violation seen.
    pub max_violation: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, excess: f64, tol: f64, what: impl FnOnce() -> String) {
        if excess > self.max_violation {
            self.max_violation = excess;
        }
        if excess > tol {
            self.violations.push(format!("{} (by {excess:.3e})", what()));
        }
    }
}

/// Evaluates the original component constraints on a dispatch, including
/// the nonconvex max/min forms that the envelope variables linearize.
pub fn audit_dispatch(config: &MmgConfig, m: usize, scen: &ScenarioSet, d: &MgDispatch, tol: f64) -> AuditReport {
    let mg = &config.mgs[m];
    let dt = config.horizon.dt;
    let hours = config.horizon.hours;
    let nh = scen.len();
    let mut r = AuditReport::default();
    let id = &mg.id;
    let max_h = |f: &dyn Fn(usize) -> f64| (0..nh).map(f).fold(f64::NEG_INFINITY, f64::max);
    let min_h = |f: &dyn Fn(usize) -> f64| (0..nh).map(f).fold(f64::INFINITY, f64::min);

    for t in 0..hours {
        for h in 0..nh {
            let supply: f64 = d.dg[t][h].iter().sum::<f64>()
                + (0..mg.esses.len())
                    .map(|e| d.dis[t][h][e] - d.chg[t][h][e])
                    .sum::<f64>()
                + d.buy[t][h]
                - d.sell[t][h];
            let demand = scen.scenarios[h].net_demand(m, t) + d.rd[t][h] - d.cd[t][h];
            r.check((supply - demand).abs(), tol, || {
                format!("{id} balance t={} h={h}", t + 1)
            });
            for (g, p) in mg.dgs.iter().enumerate() {
                let v = d.dg[t][h][g];
                r.check(p.p_min - v, tol, || format!("{id} dg{g} below p_min t={} h={h}", t + 1));
                r.check(v - p.p_max, tol, || format!("{id} dg{g} above p_max t={} h={h}", t + 1));
                if h > 0 {
                    let dev = v - d.dg[t][0][g];
                    r.check(dev - p.reserve_up, tol, || {
                        format!("{id} dg{g} up reserve t={} h={h}", t + 1)
                    });
                    r.check(-dev - p.reserve_dn, tol, || {
                        format!("{id} dg{g} down reserve t={} h={h}", t + 1)
                    });
                }
            }
            for (e, s) in mg.esses.iter().enumerate() {
                let (c, dch, soc) = (d.chg[t][h][e], d.dis[t][h][e], d.soc[t][h][e]);
                r.check(-c.min(dch), tol, || {
                    format!("{id} ess{e} negative power t={} h={h}", t + 1)
                });
                r.check(c - s.pc_max, tol, || {
                    format!("{id} ess{e} charge limit t={} h={h}", t + 1)
                });
                r.check(dch - s.pd_max, tol, || {
                    format!("{id} ess{e} discharge limit t={} h={h}", t + 1)
                });
                r.check(s.soc_min - soc, tol, || {
                    format!("{id} ess{e} soc below min t={} h={h}", t + 1)
                });
                r.check(soc - s.soc_max, tol, || {
                    format!("{id} ess{e} soc above max t={} h={h}", t + 1)
                });
                if c > 1e-6 && dch > 1e-6 {
                    r.warnings.push(format!(
                        "{id} ess{e} charges {c:.4} and discharges {dch:.4} MW at t={} h={h}",
                        t + 1
                    ));
                }
            }
            if let Some(f) = &mg.flex {
                r.check(-d.rd[t][h].min(d.cd[t][h]), tol, || {
                    format!("{id} negative load shift t={} h={h}", t + 1)
                });
                r.check(d.rd[t][h] - f.rd_max[t], tol, || {
                    format!("{id} redispatch cap t={} h={h}", t + 1)
                });
                r.check(d.cd[t][h] - f.cd_max[t], tol, || {
                    format!("{id} curtailment cap t={} h={h}", t + 1)
                });
            }
            r.check(-d.buy[t][h].min(d.sell[t][h]), tol, || {
                format!("{id} negative trade t={} h={h}", t + 1)
            });
            r.check(d.buy[t][h].max(d.sell[t][h]) - mg.p_pso_max, tol, || {
                format!("{id} trade capacity t={} h={h}", t + 1)
            });
        }
        for (g, p) in mg.dgs.iter().enumerate() {
            if t > 0 {
                let up = max_h(&|h| d.dg[t][h][g]) - min_h(&|h| d.dg[t - 1][h][g]);
                let dn = max_h(&|h| d.dg[t - 1][h][g]) - min_h(&|h| d.dg[t][h][g]);
                r.check(up - p.ramp_up * dt, tol, || {
                    format!("{id} dg{g} robust ramp-up t={}", t + 1)
                });
                r.check(dn - p.ramp_dn * dt, tol, || {
                    format!("{id} dg{g} robust ramp-down t={}", t + 1)
                });
            }
        }
    }

    for (e, s) in mg.esses.iter().enumerate() {
        let k = dt / s.capacity;
        let soc_at = |t: usize, h: usize| if t == 0 { s.soc_ref } else { d.soc[t - 1][h][e] };
        for t in 0..hours {
            let prev0 = soc_at(t, 0);
            let base = prev0 + k * (s.eta_c * d.chg[t][0][e] - d.dis[t][0][e] / s.eta_d);
            r.check((d.soc[t][0][e] - base).abs(), tol, || {
                format!("{id} ess{e} soc recursion t={}", t + 1)
            });

            let hi_now = max_h(&|h| d.soc[t][h][e]);
            let lo_now = min_h(&|h| d.soc[t][h][e]);
            let hi_prev = max_h(&|h| soc_at(t, h));
            let lo_prev = min_h(&|h| soc_at(t, h));
            let c_hi = max_h(&|h| d.chg[t][h][e]);
            let c_lo = min_h(&|h| d.chg[t][h][e]);
            let d_hi = max_h(&|h| d.dis[t][h][e]);
            let d_lo = min_h(&|h| d.dis[t][h][e]);
            let need_hi = hi_prev + k * (s.eta_c * c_hi - d_lo / s.eta_d);
            let need_lo = lo_prev + k * (s.eta_c * c_lo - d_hi / s.eta_d);
            r.check(need_hi - hi_now, tol, || {
                format!("{id} ess{e} robust upper soc t={}", t + 1)
            });
            r.check(lo_now - need_lo, tol, || {
                format!("{id} ess{e} robust lower soc t={}", t + 1)
            });
        }
        let last = hours - 1;
        let (lo, hi) = s.terminal_band();
        r.check((d.soc[last][0][e] - s.soc_ref).abs(), tol, || {
            format!("{id} ess{e} terminal soc base")
        });
        for h in 1..nh {
            let v = d.soc[last][h][e];
            r.check((lo - v).max(v - hi), tol, || format!("{id} ess{e} terminal band h={h}"));
        }
    }

    if let Some(f) = &mg.flex {
        let neutral: f64 = (0..hours).map(|t| d.rd[t][0] - d.cd[t][0]).sum();
        r.check(neutral.abs(), tol, || format!("{id} base-case load neutrality"));
        let shed: f64 = dt
            * (0..hours)
                .map(|t| max_h(&|h| d.cd[t][h]) - min_h(&|h| d.rd[t][h]))
                .sum::<f64>();
        r.check(shed - f.e_shed, tol, || format!("{id} worst-case shed budget"));
    }
    r
}
