//! System description: device parameters, uncertain forecasts and market
//! settings, loaded from a TOML document and validated once.
//!
//! Forecast deviations may be written either in absolute units or as a
//! percentage of the hourly mean; both are stored as absolute values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSpec {
    pub hours: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgParams {
    pub a: f64,
    pub b: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub reserve_up: f64,
    pub reserve_dn: f64,
    pub ramp_up: f64,
    pub ramp_dn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssParams {
    pub a: f64,
    /// Energy capacity in MWh.
    pub capacity: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub pc_max: f64,
    pub pd_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_ref: f64,
}

impl EssParams {
    /// Terminal SOC band for the non-base scenarios, clipped to the SOC limits.
    pub fn terminal_band(&self) -> (f64, f64) {
        (
            (0.8 * self.soc_ref).max(self.soc_min),
            (1.2 * self.soc_ref).min(self.soc_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexLoadParams {
    pub a: f64,
    pub rd_max: Vec<f64>,
    pub cd_max: Vec<f64>,
    pub e_shed: f64,
}

impl FlexLoadParams {
    /// True when neither redispatch nor curtailment is possible in any hour.
    pub fn is_degenerate(&self) -> bool {
        self.rd_max.iter().chain(&self.cd_max).all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertainSeries {
    pub mean: Vec<f64>,
    pub dev_plus: Vec<f64>,
    pub dev_minus: Vec<f64>,
}

impl UncertainSeries {
    pub fn constant(value: f64, hours: usize) -> Self {
        Self {
            mean: vec![value; hours],
            dev_plus: vec![0.0; hours],
            dev_minus: vec![0.0; hours],
        }
    }

    pub fn with_relative_deviation(mean: Vec<f64>, plus: f64, minus: f64) -> Self {
        Self {
            dev_plus: mean.iter().map(|m| m * plus).collect(),
            dev_minus: mean.iter().map(|m| m * minus).collect(),
            mean,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Demand,
    Res,
    Price,
}

/// Values at the `+1` and `−1` factor levels for every hour.
///
/// Demand and prices sit at their upper bound on `+1`. Renewable output is
/// the other way round: `+1` means a generation dip, so it takes the low
/// bound, which is what creates a positive reserve requirement.
pub fn expand_bounds(series: &UncertainSeries, kind: SeriesKind) -> (Vec<f64>, Vec<f64>) {
    let up: Vec<f64> = series.mean.iter().zip(&series.dev_plus).map(|(m, d)| m + d).collect();
    let down: Vec<f64> = series.mean.iter().zip(&series.dev_minus).map(|(m, d)| m - d).collect();
    match kind {
        SeriesKind::Demand | SeriesKind::Price => (up, down),
        SeriesKind::Res => (down, up),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgConfig {
    pub id: String,
    pub dgs: Vec<DgParams>,
    pub esses: Vec<EssParams>,
    pub flex: Option<FlexLoadParams>,
    pub demand: UncertainSeries,
    pub wind: Vec<UncertainSeries>,
    pub pv: Vec<UncertainSeries>,
    pub p_pso_max: f64,
}

impl MgConfig {
    pub fn res(&self) -> impl Iterator<Item = &UncertainSeries> {
        self.wind.iter().chain(&self.pv)
    }

    /// Flexible-load parameters, or `None` if they cannot move any load.
    pub fn active_flex(&self) -> Option<&FlexLoadParams> {
        self.flex.as_ref().filter(|f| !f.is_degenerate())
    }
}

/// Where the market price iteration starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Lambda0 {
    /// Midpoint of the grid band, hour by hour.
    Mid,
    GridBuy,
    GridSell,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub gamma_buy: UncertainSeries,
    pub gamma_sell: UncertainSeries,
    pub tau: f64,
    pub alpha: f64,
    pub eps: f64,
    pub lambda0: Lambda0,
    pub p0: f64,
    pub max_iter: usize,
    /// Optional cap on PSO–grid exchange (MW); unbounded when `None`.
    pub grid_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmgConfig {
    pub horizon: HorizonSpec,
    pub mgs: Vec<MgConfig>,
    pub market: MarketParams,
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Values {
    Scalar(f64),
    Series(Vec<f64>),
}

impl Values {
    fn expand(&self, hours: usize, path: &str) -> Result<Vec<f64>> {
        match self {
            Values::Scalar(v) => Ok(vec![*v; hours]),
            Values::Series(v) if v.len() == hours => Ok(v.clone()),
            Values::Series(v) => Err(Error::validation(
                path,
                format!("expected {hours} hourly values, found {}", v.len()),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    mean: Values,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dev_plus: Option<Values>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dev_minus: Option<Values>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dev_plus_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dev_minus_pct: Option<f64>,
}

impl RawSeries {
    fn resolve(&self, hours: usize, path: &str) -> Result<UncertainSeries> {
        let mean = self.mean.expand(hours, &format!("{path}.mean"))?;
        let side = |abs: &Option<Values>, pct: Option<f64>, name: &str| -> Result<Vec<f64>> {
            match (abs, pct) {
                (Some(_), Some(_)) => Err(Error::validation(
                    format!("{path}.{name}"),
                    format!("give either {name} or {name}_pct, not both"),
                )),
                (Some(v), None) => v.expand(hours, &format!("{path}.{name}")),
                (None, Some(p)) => Ok(mean.iter().map(|m| m * p / 100.0).collect()),
                (None, None) => Ok(vec![0.0; hours]),
            }
        };
        Ok(UncertainSeries {
            dev_plus: side(&self.dev_plus, self.dev_plus_pct, "dev_plus")?,
            dev_minus: side(&self.dev_minus, self.dev_minus_pct, "dev_minus")?,
            mean,
        })
    }

    fn from_series(s: &UncertainSeries) -> Self {
        Self {
            mean: Values::Series(s.mean.clone()),
            dev_plus: Some(Values::Series(s.dev_plus.clone())),
            dev_minus: Some(Values::Series(s.dev_minus.clone())),
            dev_plus_pct: None,
            dev_minus_pct: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlex {
    a: f64,
    rd_max: Values,
    cd_max: Values,
    e_shed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMg {
    id: String,
    p_pso_max: f64,
    #[serde(default)]
    dgs: Vec<DgParams>,
    #[serde(default)]
    esses: Vec<EssParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flex: Option<RawFlex>,
    demand: RawSeries,
    #[serde(default)]
    wind: Vec<RawSeries>,
    #[serde(default)]
    pv: Vec<RawSeries>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLambda0 {
    Named(String),
    Value(f64),
}

fn default_alpha() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    0.005
}
fn default_p0() -> f64 {
    0.5
}
fn default_max_iter() -> usize {
    5000
}
fn default_lambda0() -> RawLambda0 {
    RawLambda0::Named("mid".into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    gamma_buy: RawSeries,
    gamma_sell: RawSeries,
    #[serde(default)]
    tau: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_lambda0")]
    lambda0: RawLambda0,
    #[serde(default = "default_p0")]
    p0: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_cap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHorizon {
    hours: usize,
    #[serde(default = "default_dt")]
    dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: RawHorizon,
    market: RawMarket,
    mgs: Vec<RawMg>,
}

/// Parses and validates a configuration document.
pub fn load_config(text: &str) -> Result<MmgConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let config = resolve(&raw)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config_file(path: &std::path::Path) -> Result<MmgConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_config(&text)
}

fn resolve(raw: &RawConfig) -> Result<MmgConfig> {
    let hours = raw.horizon.hours;
    if hours == 0 {
        return Err(Error::validation("horizon.hours", "must be at least 1"));
    }
    let lambda0 = match &raw.market.lambda0 {
        RawLambda0::Value(v) => Lambda0::Value(*v),
        RawLambda0::Named(name) => match name.as_str() {
            "mid" | "mean" => Lambda0::Mid,
            "grid_buy" => Lambda0::GridBuy,
            "grid_sell" => Lambda0::GridSell,
            other => {
                return Err(Error::validation(
                    "market.lambda0",
                    format!("unknown choice `{other}` (mid, grid_buy, grid_sell or a number)"),
                ))
            }
        },
    };
    let market = MarketParams {
        gamma_buy: raw.market.gamma_buy.resolve(hours, "market.gamma_buy")?,
        gamma_sell: raw.market.gamma_sell.resolve(hours, "market.gamma_sell")?,
        tau: raw.market.tau,
        alpha: raw.market.alpha,
        eps: raw.market.eps,
        lambda0,
        p0: raw.market.p0,
        max_iter: raw.market.max_iter,
        grid_cap: raw.market.grid_cap,
    };
    let mut mgs = Vec::with_capacity(raw.mgs.len());
    for (i, mg) in raw.mgs.iter().enumerate() {
        let path = format!("mgs[{i}]");
        let flex = match &mg.flex {
            None => None,
            Some(f) => Some(FlexLoadParams {
                a: f.a,
                rd_max: f.rd_max.expand(hours, &format!("{path}.flex.rd_max"))?,
                cd_max: f.cd_max.expand(hours, &format!("{path}.flex.cd_max"))?,
                e_shed: f.e_shed,
            }),
        };
        let res = |list: &[RawSeries], name: &str| -> Result<Vec<UncertainSeries>> {
            list.iter()
                .enumerate()
                .map(|(k, s)| s.resolve(hours, &format!("{path}.{name}[{k}]")))
                .collect()
        };
        mgs.push(MgConfig {
            id: mg.id.clone(),
            dgs: mg.dgs.clone(),
            esses: mg.esses.clone(),
            flex,
            demand: mg.demand.resolve(hours, &format!("{path}.demand"))?,
            wind: res(&mg.wind, "wind")?,
            pv: res(&mg.pv, "pv")?,
            p_pso_max: mg.p_pso_max,
        });
    }
    Ok(MmgConfig {
        horizon: HorizonSpec {
            hours,
            dt: raw.horizon.dt,
        },
        mgs,
        market,
    })
}

fn check(cond: bool, path: impl Into<String>, message: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::validation(path, message))
    }
}

fn check_series(s: &UncertainSeries, hours: usize, path: &str, nonneg_low: bool) -> Result<()> {
    check(
        s.mean.len() == hours && s.dev_plus.len() == hours && s.dev_minus.len() == hours,
        path,
        format!("series must have {hours} values"),
    )?;
    for t in 0..hours {
        check(
            s.mean[t].is_finite() && s.dev_plus[t].is_finite() && s.dev_minus[t].is_finite(),
            format!("{path}[{t}]"),
            "values must be finite",
        )?;
        check(
            s.dev_plus[t] >= 0.0 && s.dev_minus[t] >= 0.0,
            format!("{path}[{t}]"),
            "deviations must be nonnegative",
        )?;
        if nonneg_low {
            check(
                s.mean[t] - s.dev_minus[t] >= -1e-12,
                format!("{path}[{t}]"),
                "lower confidence bound must be nonnegative",
            )?;
        }
    }
    Ok(())
}

impl MmgConfig {
    pub fn num_mgs(&self) -> usize {
        self.mgs.len()
    }

    /// Checks every invariant, reporting the first violation with its path.
    pub fn validate(&self) -> Result<()> {
        let hours = self.horizon.hours;
        check(hours >= 1, "horizon.hours", "must be at least 1")?;
        check(
            self.horizon.dt > 0.0 && self.horizon.dt.is_finite(),
            "horizon.dt",
            "must be positive",
        )?;
        check(!self.mgs.is_empty(), "mgs", "at least one microgrid is required")?;

        let m = &self.market;
        check_series(&m.gamma_buy, hours, "market.gamma_buy", false)?;
        check_series(&m.gamma_sell, hours, "market.gamma_sell", false)?;
        let (bp, bm) = expand_bounds(&m.gamma_buy, SeriesKind::Price);
        let (sp, sm) = expand_bounds(&m.gamma_sell, SeriesKind::Price);
        for t in 0..hours {
            // buy and sell prices share the PSO factor level
            let ok = m.gamma_buy.mean[t] > m.gamma_sell.mean[t] && bp[t] > sp[t] && bm[t] > sm[t];
            check(
                ok,
                format!("market.gamma_sell[{t}]"),
                "grid selling price must stay below the buying price in every scenario",
            )?;
        }
        check(m.tau >= 0.0 && m.tau.is_finite(), "market.tau", "must be nonnegative")?;
        check(m.alpha > 0.0 && m.alpha.is_finite(), "market.alpha", "must be positive")?;
        check(m.eps > 0.0 && m.eps.is_finite(), "market.eps", "must be positive")?;
        check(m.p0 > 0.0 && m.p0 <= 1.0, "market.p0", "must lie in (0, 1]")?;
        check(m.max_iter >= 1, "market.max_iter", "must be at least 1")?;
        if let Lambda0::Value(v) = m.lambda0 {
            check(v.is_finite(), "market.lambda0", "must be finite")?;
        }
        if let Some(cap) = m.grid_cap {
            check(cap >= 0.0, "market.grid_cap", "must be nonnegative")?;
        }

        let mut ids = std::collections::HashSet::new();
        for (i, mg) in self.mgs.iter().enumerate() {
            let path = format!("mgs[{i}]");
            check(
                ids.insert(mg.id.as_str()),
                format!("{path}.id"),
                format!("duplicate id `{}`", mg.id),
            )?;
            check(mg.p_pso_max >= 0.0, format!("{path}.p_pso_max"), "must be nonnegative")?;
            check_series(&mg.demand, hours, &format!("{path}.demand"), true)?;
            for (k, s) in mg.wind.iter().enumerate() {
                check_series(s, hours, &format!("{path}.wind[{k}]"), true)?;
            }
            for (k, s) in mg.pv.iter().enumerate() {
                check_series(s, hours, &format!("{path}.pv[{k}]"), true)?;
            }
            for (k, g) in mg.dgs.iter().enumerate() {
                let p = format!("{path}.dgs[{k}]");
                check(g.a >= 0.0, format!("{p}.a"), "must be nonnegative")?;
                check(g.b.is_finite(), format!("{p}.b"), "must be finite")?;
                check(
                    0.0 <= g.p_min && g.p_min <= g.p_max,
                    format!("{p}.p_min"),
                    "requires 0 <= p_min <= p_max",
                )?;
                for (name, v) in [
                    ("reserve_up", g.reserve_up),
                    ("reserve_dn", g.reserve_dn),
                    ("ramp_up", g.ramp_up),
                    ("ramp_dn", g.ramp_dn),
                ] {
                    check(v >= 0.0, format!("{p}.{name}"), "must be nonnegative")?;
                }
            }
            for (k, e) in mg.esses.iter().enumerate() {
                let p = format!("{path}.esses[{k}]");
                check(e.a >= 0.0, format!("{p}.a"), "must be nonnegative")?;
                check(e.capacity > 0.0, format!("{p}.capacity"), "must be positive")?;
                check(
                    e.eta_c > 0.0 && e.eta_c <= 1.0,
                    format!("{p}.eta_c"),
                    "must lie in (0, 1]",
                )?;
                check(
                    e.eta_d > 0.0 && e.eta_d <= 1.0,
                    format!("{p}.eta_d"),
                    "must lie in (0, 1]",
                )?;
                check(e.pc_max >= 0.0, format!("{p}.pc_max"), "must be nonnegative")?;
                check(e.pd_max >= 0.0, format!("{p}.pd_max"), "must be nonnegative")?;
                check(
                    0.0 <= e.soc_min && e.soc_min <= e.soc_ref && e.soc_ref <= e.soc_max && e.soc_max <= 1.0,
                    format!("{p}.soc_ref"),
                    "requires 0 <= soc_min <= soc_ref <= soc_max <= 1",
                )?;
            }
            if let Some(f) = &mg.flex {
                let p = format!("{path}.flex");
                check(f.a >= 0.0, format!("{p}.a"), "must be nonnegative")?;
                check(f.e_shed >= 0.0, format!("{p}.e_shed"), "must be nonnegative")?;
                check(
                    f.rd_max.len() == hours && f.cd_max.len() == hours,
                    &p,
                    format!("caps must have {hours} values"),
                )?;
                check(
                    f.rd_max.iter().chain(&f.cd_max).all(|&v| v >= 0.0),
                    &p,
                    "caps must be nonnegative",
                )?;
            }
        }
        Ok(())
    }

    /// Hours in which a microgrid's worst-case demand exceeds everything it
    /// could possibly draw on. Not an error: the solve will say infeasible.
    pub fn supply_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for mg in &self.mgs {
            let (demand_hi, _) = expand_bounds(&mg.demand, SeriesKind::Demand);
            let dg: f64 = mg.dgs.iter().map(|g| g.p_max).sum();
            let ess: f64 = mg.esses.iter().map(|e| e.pd_max).sum();
            let shed = mg.active_flex();
            for t in 0..self.horizon.hours {
                let res: f64 = mg.res().map(|s| expand_bounds(s, SeriesKind::Res).0[t]).sum();
                let cut = shed.map_or(0.0, |f| f.cd_max[t]);
                let supply = dg + ess + res + cut + mg.p_pso_max;
                if demand_hi[t] > supply + 1e-9 {
                    out.push(format!(
                        "{}: hour {} worst-case demand {:.3} MW exceeds available supply {:.3} MW",
                        mg.id,
                        t + 1,
                        demand_hi[t],
                        supply
                    ));
                }
            }
        }
        out
    }

    /// Serializes to the document format with absolute deviations.
    pub fn to_toml(&self) -> String {
        let lambda0 = match self.market.lambda0 {
            Lambda0::Mid => RawLambda0::Named("mid".into()),
            Lambda0::GridBuy => RawLambda0::Named("grid_buy".into()),
            Lambda0::GridSell => RawLambda0::Named("grid_sell".into()),
            Lambda0::Value(v) => RawLambda0::Value(v),
        };
        let raw = RawConfig {
            horizon: RawHorizon {
                hours: self.horizon.hours,
                dt: self.horizon.dt,
            },
            market: RawMarket {
                gamma_buy: RawSeries::from_series(&self.market.gamma_buy),
                gamma_sell: RawSeries::from_series(&self.market.gamma_sell),
                tau: self.market.tau,
                alpha: self.market.alpha,
                eps: self.market.eps,
                lambda0,
                p0: self.market.p0,
                max_iter: self.market.max_iter,
                grid_cap: self.market.grid_cap,
            },
            mgs: self
                .mgs
                .iter()
                .map(|mg| RawMg {
                    id: mg.id.clone(),
                    p_pso_max: mg.p_pso_max,
                    dgs: mg.dgs.clone(),
                    esses: mg.esses.clone(),
                    flex: mg.flex.as_ref().map(|f| RawFlex {
                        a: f.a,
                        rd_max: Values::Series(f.rd_max.clone()),
                        cd_max: Values::Series(f.cd_max.clone()),
                        e_shed: f.e_shed,
                    }),
                    demand: RawSeries::from_series(&mg.demand),
                    wind: mg.wind.iter().map(RawSeries::from_series).collect(),
                    pv: mg.pv.iter().map(RawSeries::from_series).collect(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [horizon]
        hours = 1

        [market]
        gamma_buy = { mean = 120.0 }
        gamma_sell = { mean = 40.0 }

        [[mgs]]
        id = "solo"
        p_pso_max = 1.0
        demand = { mean = 0.5 }

        [[mgs.dgs]]
        a = 5.0
        b = 70.0
        p_min = 0.0
        p_max = 1.0
        reserve_up = 0.3
        reserve_dn = 0.3
        ramp_up = 0.5
        ramp_dn = 0.5
    "#;

    #[test]
    fn minimal_document_loads() {
        let c = load_config(MINIMAL).unwrap();
        assert_eq!(c.horizon.hours, 1);
        assert_eq!(c.horizon.dt, 1.0);
        assert_eq!(c.mgs[0].dgs[0].b, 70.0);
        assert_eq!(c.market.eps, 0.005);
        assert_eq!(c.market.lambda0, Lambda0::Mid);
        assert!(c.mgs[0].esses.is_empty() && c.mgs[0].flex.is_none());
    }

    #[test]
    fn inverted_grid_prices_are_rejected() {
        let text = MINIMAL.replace("mean = 40.0", "mean = 130.0");
        match load_config(&text) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "market.gamma_sell[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_p0_names_path() {
        let text = MINIMAL.replace("gamma_sell = { mean = 40.0 }", "gamma_sell = { mean = 40.0 }\np0 = 1.5");
        match load_config(&text) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "market.p0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(load_config("[horizon"), Err(Error::Parse(_))));
        assert!(matches!(load_config("[horizon]\nhours = 1\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn demand_expansion() {
        let s = UncertainSeries {
            mean: vec![1.0],
            dev_plus: vec![0.1],
            dev_minus: vec![0.1],
        };
        let (plus, minus) = expand_bounds(&s, SeriesKind::Demand);
        assert!((plus[0] - 1.1).abs() < 1e-12 && (minus[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn res_expansion_flips_sign() {
        let s = UncertainSeries {
            mean: vec![0.5],
            dev_plus: vec![0.05],
            dev_minus: vec![0.10],
        };
        let (plus, minus) = expand_bounds(&s, SeriesKind::Res);
        assert!((plus[0] - 0.40).abs() < 1e-12);
        assert!((minus[0] - 0.55).abs() < 1e-12);
    }

    #[test]
    fn price_expansion_five_percent() {
        let s = UncertainSeries::with_relative_deviation(vec![100.0], 0.05, 0.05);
        let (plus, minus) = expand_bounds(&s, SeriesKind::Price);
        assert!((plus[0] - 105.0).abs() < 1e-12 && (minus[0] - 95.0).abs() < 1e-12);
    }

    #[test]
    fn percent_deviations_become_absolute() {
        let text = MINIMAL.replace(
            "demand = { mean = 0.5 }",
            "demand = { mean = 0.5, dev_plus_pct = 10.0, dev_minus_pct = 20.0 }",
        );
        let c = load_config(&text).unwrap();
        assert!((c.mgs[0].demand.dev_plus[0] - 0.05).abs() < 1e-12);
        assert!((c.mgs[0].demand.dev_minus[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let c = load_config(MINIMAL).unwrap();
        let again = load_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn insufficient_supply_is_warning_not_error() {
        let text = MINIMAL.replace("demand = { mean = 0.5 }", "demand = { mean = 3.0 }");
        let c = load_config(&text).unwrap();
        assert_eq!(c.supply_warnings().len(), 1);
    }
}
