//! Run and sweep pipelines behind the command-line tool, and the CSV files
//! they leave in the output directory.
//!
//! Nothing here is random: the same config and overrides always produce
//! byte-identical files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::centralized::{solve_centralized, CentralOutcome};
use crate::domain::{load_config_file, Lambda0, MmgConfig};
use crate::error::{Error, Result};
use crate::market::{clear_market_with, pso_income, run_isolated_with, MarketOptions, MarketOutcome};
use crate::output::{csv_writer, fmt_num};
use crate::parallel::Execution;
use crate::scenarios::{deterministic_scenarios, robust_scenarios, ScenarioSet};
use crate::subproblem::{cost_breakdown, CostBreakdown, MgDispatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Robust scenarios, internal market (Algorithm 1).
    Cooperative,
    /// Robust scenarios, every microgrid trades with the grid alone.
    Isolated,
    /// Internal market on the base case only.
    Deterministic,
    /// Pooled problem over all microgrids.
    Centralized,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Cooperative => "cooperative",
            Mode::Isolated => "isolated",
            Mode::Deterministic => "deterministic",
            Mode::Centralized => "centralized",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cooperative" => Ok(Mode::Cooperative),
            "isolated" => Ok(Mode::Isolated),
            "deterministic" => Ok(Mode::Deterministic),
            "centralized" => Ok(Mode::Centralized),
            other => Err(Error::validation(
                "mode",
                format!("unknown mode `{other}` (cooperative, isolated, deterministic, centralized)"),
            )),
        }
    }
}

/// Command-line overrides of the market section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    pub p0: Option<f64>,
    pub lambda0: Option<Lambda0>,
    pub max_iter: Option<usize>,
    /// Accepted for reproducibility bookkeeping. No part of the pipeline
    /// draws random numbers, so it does not change any result.
    pub seed: Option<u64>,
}

impl Overrides {
    /// Applies the overrides and re-validates the whole config.
    pub fn apply(&self, config: &mut MmgConfig) -> Result<()> {
        let m = &mut config.market;
        if let Some(v) = self.alpha {
            m.alpha = v;
        }
        if let Some(v) = self.eps {
            m.eps = v;
        }
        if let Some(v) = self.tau {
            m.tau = v;
        }
        if let Some(v) = self.p0 {
            m.p0 = v;
        }
        if let Some(v) = &self.lambda0 {
            m.lambda0 = v.clone();
        }
        if let Some(v) = self.max_iter {
            m.max_iter = v;
        }
        config.validate()
    }
}

/// Parses `mean`/`mid`, `grid_buy`, `grid_sell` or a number.
pub fn parse_lambda0(s: &str) -> Result<Lambda0> {
    match s {
        "mean" | "mid" => Ok(Lambda0::Mid),
        "grid_buy" | "gamma_buy" => Ok(Lambda0::GridBuy),
        "grid_sell" | "gamma_sell" => Ok(Lambda0::GridSell),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Lambda0::Value)
            .ok_or_else(|| {
                Error::validation(
                    "lambda0",
                    format!("expected mean, grid_buy, grid_sell or a number, got `{other}`"),
                )
            }),
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: PathBuf,
    pub mode: Mode,
    pub overrides: Overrides,
    pub out_dir: PathBuf,
    /// Charge trading fees inside the pooled problem (centralized mode).
    pub include_fees: bool,
    pub execution: Execution,
}

impl RunSpec {
    pub fn new(config: impl Into<PathBuf>, mode: Mode, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            mode,
            overrides: Overrides::default(),
            out_dir: out_dir.into(),
            include_fees: false,
            execution: Execution::default(),
        }
    }

    /// Loads the config and applies the overrides.
    pub fn load(&self) -> Result<MmgConfig> {
        let mut config = load_config_file(&self.config)?;
        self.overrides.apply(&mut config)?;
        Ok(config)
    }
}

#[derive(Debug, Clone)]
pub enum Solved {
    Market(Box<MarketOutcome>),
    Isolated(Vec<MgDispatch>),
    Central(Box<CentralOutcome>),
}

/// One row of the cost summary: a microgrid or the PSO.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub entity: String,
    pub costs: CostBreakdown,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mode: Mode,
    pub config: MmgConfig,
    pub scenarios: ScenarioSet,
    pub solved: Solved,
}

/// Solves `config` in the given mode without touching the file system.
pub fn execute(config: &MmgConfig, mode: Mode, include_fees: bool, execution: Execution) -> Result<RunOutcome> {
    let scenarios = match mode {
        Mode::Deterministic => deterministic_scenarios(config),
        _ => robust_scenarios(config)?,
    };
    let solved = match mode {
        Mode::Cooperative | Mode::Deterministic => {
            let opts = MarketOptions {
                execution,
                ..MarketOptions::default()
            };
            Solved::Market(Box::new(clear_market_with(config, &scenarios, &opts)?))
        }
        Mode::Isolated => Solved::Isolated(run_isolated_with(config, &scenarios, execution)?),
        Mode::Centralized => Solved::Central(Box::new(solve_centralized(config, &scenarios, include_fees)?)),
    };
    Ok(RunOutcome {
        mode,
        config: config.clone(),
        scenarios,
        solved,
    })
}

/// Loads, solves and writes every artifact into `spec.out_dir`. A market
/// that did not converge still gets its files written; call
/// [`RunOutcome::ensure_converged`] to turn that into an error.
pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    let config = spec.load()?;
    let outcome = execute(&config, spec.mode, spec.include_fees, spec.execution)?;
    outcome.write_artifacts(&spec.out_dir)?;
    Ok(outcome)
}

impl RunOutcome {
    pub fn dispatches(&self) -> &[MgDispatch] {
        match &self.solved {
            Solved::Market(m) => &m.dispatches,
            Solved::Isolated(d) => d,
            Solved::Central(c) => &c.dispatches,
        }
    }

    pub fn market(&self) -> Option<&MarketOutcome> {
        match &self.solved {
            Solved::Market(m) => Some(m),
            _ => None,
        }
    }

    pub fn central(&self) -> Option<&CentralOutcome> {
        match &self.solved {
            Solved::Central(c) => Some(c),
            _ => None,
        }
    }

    pub fn converged(&self) -> bool {
        self.market().is_none_or(|m| m.converged)
    }

    pub fn ensure_converged(&self) -> Result<()> {
        let Some(m) = self.market() else {
            return Ok(());
        };
        if m.converged {
            return Ok(());
        }
        let hint = if m.oscillating {
            format!("; prices oscillate, try a step size below {}", self.config.market.alpha)
        } else if m.stalled {
            "; objective stalled".to_string()
        } else {
            "; raise max_iter or the step size".to_string()
        };
        Err(Error::NonConvergence {
            iterations: m.num_iterations(),
            mismatch: m.final_mismatch(),
            hint,
        })
    }

    /// Fee income per `[t][h]` in $/h; zero when no internal market runs.
    fn fee_income(&self) -> Vec<Vec<f64>> {
        let tau = match &self.solved {
            Solved::Market(m) => return m.pso_income.clone(),
            Solved::Isolated(_) => 0.0,
            Solved::Central(c) if c.include_fees => self.config.market.tau,
            Solved::Central(_) => 0.0,
        };
        pso_income(self.dispatches(), tau)
    }

    fn fee_hourly(&self) -> Vec<Vec<f64>> {
        let dt = self.config.horizon.dt;
        self.fee_income()
            .iter()
            .map(|r| r.iter().map(|v| v * dt).collect())
            .collect()
    }

    /// Microgrid rows followed by the PSO's fee income.
    pub fn summary(&self) -> Vec<CostRow> {
        let p0 = self.config.market.p0;
        let mut rows: Vec<CostRow> = self
            .dispatches()
            .iter()
            .map(|d| CostRow {
                entity: d.id.clone(),
                costs: CostBreakdown {
                    energy: d.cost_energy,
                    reserve: d.cost_reserve,
                    expected: d.cost_expected,
                },
            })
            .collect();
        rows.push(CostRow {
            entity: "PSO".into(),
            costs: cost_breakdown(&self.fee_hourly(), p0),
        });
        rows
    }

    /// Sum of the microgrids' expected costs.
    pub fn total_mg_cost(&self) -> f64 {
        self.dispatches().iter().map(|d| d.cost_expected).sum()
    }

    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut file = |name: &str| {
            let p = dir.join(name);
            written.push(p.clone());
            p
        };

        let cfg_path = file("config.toml");
        std::fs::write(&cfg_path, self.config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
        if let Some(m) = self.market() {
            write_trace(m, &file("trace.csv"))?;
        }
        self.write_prices(&file("prices.csv"))?;
        self.write_trades(&file("trades.csv"))?;
        self.write_dispatch(&file("dispatch.csv"))?;
        self.write_costs(&file("costs.csv"))?;
        self.write_summary(&file("summary.csv"))?;
        if let Some(c) = self.central() {
            write_duals(c, &file("duals.csv"))?;
        }
        Ok(written)
    }

    fn write_prices(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["t", "h", "lambda_eq", "beta_buy", "beta_sell"])?;
        let gb = self.scenarios.gamma_buy_th();
        let gs = self.scenarios.gamma_sell_th();
        let tau = self.config.market.tau;
        for t in 0..gb.len() {
            for h in 0..gb[t].len() {
                let (lambda, bb, bs) = match &self.solved {
                    Solved::Market(m) => {
                        let p = &m.final_prices;
                        (fmt_num(p.lambda_eq[t][h]), p.beta_buy[t][h], p.beta_sell[t][h])
                    }
                    // no internal market: the grid prices are what the operators see
                    Solved::Isolated(_) => (String::new(), gb[t][h], gs[t][h]),
                    Solved::Central(c) => {
                        let l = c.prices[t][h];
                        let fee = if c.include_fees { tau } else { 0.0 };
                        (fmt_num(l), l + fee, l - fee)
                    }
                };
                w.write_record([(t + 1).to_string(), h.to_string(), lambda, fmt_num(bb), fmt_num(bs)])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_trades(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["t", "h", "entity", "buy", "sell"])?;
        let (grid_buy, grid_sell) = self.grid_trades();
        let ds = self.dispatches();
        for t in 0..grid_buy.len() {
            for h in 0..grid_buy[t].len() {
                for d in ds {
                    w.write_record([
                        (t + 1).to_string(),
                        h.to_string(),
                        d.id.clone(),
                        fmt_num(d.buy[t][h]),
                        fmt_num(d.sell[t][h]),
                    ])?;
                }
                w.write_record([
                    (t + 1).to_string(),
                    h.to_string(),
                    "grid".into(),
                    fmt_num(grid_buy[t][h]),
                    fmt_num(grid_sell[t][h]),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// What the PSO (or, in isolated mode, all microgrids together) buys
    /// from and sells to the main grid, `[t][h]`.
    pub fn grid_trades(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        match &self.solved {
            Solved::Market(m) => (m.grid_buy.clone(), m.grid_sell.clone()),
            Solved::Central(c) => (c.grid_buy.clone(), c.grid_sell.clone()),
            Solved::Isolated(ds) => {
                let hours = self.scenarios.hours();
                let nh = self.scenarios.len();
                let sum = |f: &dyn Fn(&MgDispatch, usize, usize) -> f64| -> Vec<Vec<f64>> {
                    (0..hours)
                        .map(|t| (0..nh).map(|h| ds.iter().map(|d| f(d, t, h)).sum()).collect())
                        .collect()
                };
                (sum(&|d, t, h| d.buy[t][h]), sum(&|d, t, h| d.sell[t][h]))
            }
        }
    }

    fn write_dispatch(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["mg", "t", "h", "device", "value"])?;
        for d in self.dispatches() {
            for (t, h, device, v) in d.rows() {
                w.write_record([d.id.clone(), t.to_string(), h.to_string(), device, fmt_num(v)])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Hour-by-hour split of every entity's expected cost.
    fn write_costs(&self, path: &Path) -> Result<()> {
        let p0 = self.config.market.p0;
        let mut w = csv_writer(path)?;
        w.write_record(["entity", "t", "C_E", "C_R", "C_exp"])?;
        let fees = self.fee_hourly();
        let entities = self
            .dispatches()
            .iter()
            .map(|d| (d.id.as_str(), &d.hourly_cost))
            .chain(std::iter::once(("PSO", &fees)));
        for (id, hourly) in entities {
            for (t, row) in hourly.iter().enumerate() {
                let c = cost_breakdown(std::slice::from_ref(row), p0);
                w.write_record([
                    id.to_string(),
                    (t + 1).to_string(),
                    fmt_num(c.energy),
                    fmt_num(c.reserve),
                    fmt_num(c.expected),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_summary(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["entity", "C_E", "C_R", "C_exp"])?;
        for row in self.summary() {
            w.write_record([
                row.entity,
                fmt_num(row.costs.energy),
                fmt_num(row.costs.reserve),
                fmt_num(row.costs.expected),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn write_trace(m: &MarketOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "mismatch", "objective"])?;
    for r in &m.iterations {
        w.write_record([r.k.to_string(), fmt_num(r.mismatch), fmt_num(r.system_objective)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_duals(c: &CentralOutcome, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "h", "dual", "price"])?;
    for (t, (rd, rp)) in c.duals.iter().zip(&c.prices).enumerate() {
        for (h, (d, p)) in rd.iter().zip(rp).enumerate() {
            w.write_record([(t + 1).to_string(), h.to_string(), fmt_num(*d), fmt_num(*p)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    P0,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::P0 => "p0",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "p0" => Ok(SweepParam::P0),
            other => Err(Error::validation(
                "sweep.param",
                format!("can sweep alpha or p0, not `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub oscillating: bool,
    pub final_mismatch: f64,
    /// Expected cost of every microgrid in the swept mode.
    pub cooperative: Vec<f64>,
    /// Expected cost of every microgrid trading with the grid alone; only
    /// filled for a p0 sweep.
    pub isolated: Vec<f64>,
}

impl SweepPoint {
    pub fn cooperative_total(&self) -> f64 {
        self.cooperative.iter().sum()
    }

    pub fn isolated_total(&self) -> f64 {
        self.isolated.iter().sum()
    }

    /// Saving of cooperation relative to isolated trading, in percent.
    pub fn reduction_pct(&self) -> f64 {
        let iso = self.isolated_total();
        100.0 * (iso - self.cooperative_total()) / iso.abs().max(f64::MIN_POSITIVE)
    }
}

/// Reruns `spec` once per value. Each point writes its artifacts into its
/// own subdirectory and the table goes to `sweep.csv`. A market that does
/// not converge is a data point here, not an error.
pub fn sweep(spec: &RunSpec, param: SweepParam, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::validation("sweep.values", "no values to sweep"));
    }
    let base = load_config_file(&spec.config)?;
    let mut points = Vec::with_capacity(values.len());
    let mut ids = Vec::new();
    for &value in values {
        let annotate = |e: Error| Error::SweepPoint {
            param: param.name().into(),
            value,
            source: Box::new(e),
        };
        let mut overrides = spec.overrides.clone();
        match param {
            SweepParam::Alpha => overrides.alpha = Some(value),
            SweepParam::P0 => overrides.p0 = Some(value),
        }
        let mut config = base.clone();
        overrides.apply(&mut config).map_err(annotate)?;
        let dir = spec.out_dir.join(format!("{}_{}", param.name(), value));

        let main = execute(&config, spec.mode, spec.include_fees, spec.execution).map_err(annotate)?;
        main.write_artifacts(&dir).map_err(annotate)?;
        let (iterations, converged, oscillating, final_mismatch) = match main.market() {
            Some(m) => (m.num_iterations(), m.converged, m.oscillating, m.final_mismatch()),
            None => (0, true, false, 0.0),
        };
        let isolated = if param == SweepParam::P0 {
            let iso = execute(&config, Mode::Isolated, false, spec.execution).map_err(annotate)?;
            iso.write_artifacts(&dir.join("isolated")).map_err(annotate)?;
            iso.dispatches().iter().map(|d| d.cost_expected).collect()
        } else {
            Vec::new()
        };
        ids = main.dispatches().iter().map(|d| d.id.clone()).collect();
        points.push(SweepPoint {
            value,
            iterations,
            converged,
            oscillating,
            final_mismatch,
            cooperative: main.dispatches().iter().map(|d| d.cost_expected).collect(),
            isolated,
        });
    }
    write_sweep(&spec.out_dir.join("sweep.csv"), param, &ids, &points)?;
    Ok(points)
}

fn write_sweep(path: &Path, param: SweepParam, ids: &[String], points: &[SweepPoint]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv_writer(path)?;
    let mut header = vec![param.name().to_string()];
    match param {
        SweepParam::Alpha => {
            header.extend(["iterations", "converged", "oscillating", "final_mismatch", "objective"].map(String::from));
        }
        SweepParam::P0 => {
            header.extend(ids.iter().map(|id| format!("coop[{id}]")));
            header.extend(ids.iter().map(|id| format!("iso[{id}]")));
            header.extend(["coop_total", "iso_total", "reduction_pct"].map(String::from));
        }
    }
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![fmt_num(p.value)];
        match param {
            SweepParam::Alpha => {
                row.push(p.iterations.to_string());
                row.push(p.converged.to_string());
                row.push(p.oscillating.to_string());
                row.push(fmt_num(p.final_mismatch));
                row.push(fmt_num(p.cooperative_total()));
            }
            SweepParam::P0 => {
                row.extend(p.cooperative.iter().map(|v| fmt_num(*v)));
                row.extend(p.isolated.iter().map(|v| fmt_num(*v)));
                row.push(fmt_num(p.cooperative_total()));
                row.push(fmt_num(p.isolated_total()));
                row.push(fmt_num(p.reduction_pct()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in [
            Mode::Cooperative,
            Mode::Isolated,
            Mode::Deterministic,
            Mode::Centralized,
        ] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("robust".parse::<Mode>().is_err());
    }

    #[test]
    fn lambda0_forms() {
        assert_eq!(parse_lambda0("mean").unwrap(), Lambda0::Mid);
        assert_eq!(parse_lambda0("grid_sell").unwrap(), Lambda0::GridSell);
        assert_eq!(parse_lambda0("82.5").unwrap(), Lambda0::Value(82.5));
        assert!(parse_lambda0("cheap").is_err());
        assert!(parse_lambda0("NaN").is_err());
    }

    #[test]
    fn reduction_is_relative_to_isolated() {
        let p = SweepPoint {
            value: 0.5,
            iterations: 1,
            converged: true,
            oscillating: false,
            final_mismatch: 0.0,
            cooperative: vec![30.0, 40.0],
            isolated: vec![50.0, 50.0],
        };
        assert!((p.reduction_pct() - 30.0).abs() < 1e-12);
    }
}
