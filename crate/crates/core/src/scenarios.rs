//! Orthogonal-array scenario design and scenario realization.
//!
//! Each cooperative entity (the PSO, then every microgrid) is a two-level
//! factor. Rows of the L8(2^7) array pick which confidence bound each factor
//! sits at; scenario 0 is the mean forecast.

use std::io::Write;

use crate::domain::{expand_bounds, MmgConfig, SeriesKind};
use crate::error::{Error, Result};
use crate::output::fmt_num;

/// Columns of the standard L8(2^7) array in the order a, b, ab, c, ac, bc,
/// abc. The first five give the published five-factor scenario table.
const L8: [[i8; 8]; 7] = [
    [1, 1, 1, 1, -1, -1, -1, -1],
    [1, 1, -1, -1, 1, 1, -1, -1],
    [1, 1, -1, -1, -1, -1, 1, 1],
    [1, -1, 1, -1, 1, -1, 1, -1],
    [1, -1, 1, -1, -1, 1, -1, 1],
    [1, -1, -1, 1, 1, -1, -1, 1],
    [1, -1, -1, 1, -1, 1, 1, -1],
];

pub const MAX_FACTORS: usize = 7;

/// Two-level design: `rows[h-1][f]` is the level of factor `f` in scenario `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMatrix {
    pub rows: Vec<Vec<i8>>,
}

impl LevelMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn column(&self, f: usize) -> Vec<i8> {
        self.rows.iter().map(|r| r[f]).collect()
    }

    /// Balanced columns, and every pair of columns covers each level
    /// combination equally often.
    pub fn is_orthogonal(&self) -> bool {
        let n = self.num_rows();
        if n == 0 || !n.is_multiple_of(4) {
            return false;
        }
        let cols = self.num_cols();
        for a in 0..cols {
            if self.rows.iter().filter(|r| r[a] == 1).count() * 2 != n {
                return false;
            }
            for b in a + 1..cols {
                let mut counts = [0usize; 4];
                for r in &self.rows {
                    counts[usize::from(r[a] < 0) * 2 + usize::from(r[b] < 0)] += 1;
                }
                if counts.iter().any(|&c| c * 4 != n) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn build_orthogonal_array(num_factors: usize) -> Result<LevelMatrix> {
    if !(1..=MAX_FACTORS).contains(&num_factors) {
        return Err(Error::UnsupportedFactors(num_factors));
    }
    let rows = (0..8).map(|r| (0..num_factors).map(|f| L8[f][r]).collect()).collect();
    Ok(LevelMatrix { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub h: usize,
    /// `demand[m][t]`
    pub demand: Vec<Vec<f64>>,
    /// `wind[m][w][t]`
    pub wind: Vec<Vec<Vec<f64>>>,
    /// `pv[m][s][t]`
    pub pv: Vec<Vec<Vec<f64>>>,
    pub gamma_buy: Vec<f64>,
    pub gamma_sell: Vec<f64>,
}

impl Scenario {
    /// Demand left after renewables for microgrid `m` in hour `t`.
    pub fn net_demand(&self, m: usize, t: usize) -> f64 {
        let res: f64 = self.wind[m].iter().chain(&self.pv[m]).map(|s| s[t]).sum();
        self.demand[m][t] - res
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    /// Empty (zero rows) for the deterministic, base-case-only set.
    pub levels: LevelMatrix,
}

impl ScenarioSet {
    /// Number of non-base scenarios, `H`.
    pub fn num_uncertain(&self) -> usize {
        self.scenarios.len() - 1
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn hours(&self) -> usize {
        self.scenarios[0].gamma_buy.len()
    }

    /// Grid buying price `γ_b(t, h)` as `[t][h]`.
    pub fn gamma_buy_th(&self) -> Vec<Vec<f64>> {
        (0..self.hours())
            .map(|t| self.scenarios.iter().map(|s| s.gamma_buy[t]).collect())
            .collect()
    }

    pub fn gamma_sell_th(&self) -> Vec<Vec<f64>> {
        (0..self.hours())
            .map(|t| self.scenarios.iter().map(|s| s.gamma_sell[t]).collect())
            .collect()
    }

    /// Writes one row per scenario, hour and quantity.
    pub fn write_csv<W: Write>(&self, config: &MmgConfig, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["h", "t", "quantity", "value"])?;
        for s in &self.scenarios {
            for t in 0..self.hours() {
                let mut row =
                    |q: String, v: f64| out.write_record([s.h.to_string(), (t + 1).to_string(), q, fmt_num(v)]);
                for (m, mg) in config.mgs.iter().enumerate() {
                    row(format!("demand[{}]", mg.id), s.demand[m][t])?;
                    for (w, series) in s.wind[m].iter().enumerate() {
                        row(format!("wind[{}][{w}]", mg.id), series[t])?;
                    }
                    for (k, series) in s.pv[m].iter().enumerate() {
                        row(format!("pv[{}][{k}]", mg.id), series[t])?;
                    }
                }
                row("gamma_buy".into(), s.gamma_buy[t])?;
                row("gamma_sell".into(), s.gamma_sell[t])?;
            }
        }
        out.flush().map_err(|e| Error::io("<scenario csv>", e))?;
        Ok(())
    }
}

fn pick(levels: (Vec<f64>, Vec<f64>), level: Option<i8>, mean: &[f64]) -> Vec<f64> {
    match level {
        None => mean.to_vec(),
        Some(l) if l > 0 => levels.0,
        Some(_) => levels.1,
    }
}

fn realize_one(config: &MmgConfig, h: usize, row: Option<&[i8]>) -> Scenario {
    let level = |f: usize| row.map(|r| r[f]);
    let market = &config.market;
    let mut s = Scenario {
        h,
        demand: Vec::new(),
        wind: Vec::new(),
        pv: Vec::new(),
        gamma_buy: pick(
            expand_bounds(&market.gamma_buy, SeriesKind::Price),
            level(0),
            &market.gamma_buy.mean,
        ),
        gamma_sell: pick(
            expand_bounds(&market.gamma_sell, SeriesKind::Price),
            level(0),
            &market.gamma_sell.mean,
        ),
    };
    for (m, mg) in config.mgs.iter().enumerate() {
        let l = level(m + 1);
        s.demand
            .push(pick(expand_bounds(&mg.demand, SeriesKind::Demand), l, &mg.demand.mean));
        s.wind.push(
            mg.wind
                .iter()
                .map(|w| pick(expand_bounds(w, SeriesKind::Res), l, &w.mean))
                .collect(),
        );
        s.pv.push(
            mg.pv
                .iter()
                .map(|p| pick(expand_bounds(p, SeriesKind::Res), l, &p.mean))
                .collect(),
        );
    }
    s
}

/// Base case plus one scenario per row of `levels` (PSO column first).
pub fn realize_scenarios(config: &MmgConfig, levels: &LevelMatrix) -> Result<ScenarioSet> {
    let expected = 1 + config.num_mgs();
    if levels.num_rows() > 0 && levels.num_cols() != expected {
        return Err(Error::ColumnMismatch {
            expected,
            got: levels.num_cols(),
        });
    }
    let mut scenarios = vec![realize_one(config, 0, None)];
    for (i, row) in levels.rows.iter().enumerate() {
        scenarios.push(realize_one(config, i + 1, Some(row)));
    }
    Ok(ScenarioSet {
        scenarios,
        levels: levels.clone(),
    })
}

/// The full robust set: base case plus the eight array rows.
pub fn robust_scenarios(config: &MmgConfig) -> Result<ScenarioSet> {
    let levels = build_orthogonal_array(1 + config.num_mgs())?;
    realize_scenarios(config, &levels)
}

/// Base case only, as if every forecast were exact.
pub fn deterministic_scenarios(config: &MmgConfig) -> ScenarioSet {
    ScenarioSet {
        scenarios: vec![realize_one(config, 0, None)],
        levels: LevelMatrix { rows: Vec::new() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_factor_array_matches_published_table() {
        let oa = build_orthogonal_array(5).unwrap();
        let expected: [[i8; 5]; 8] = [
            [1, 1, 1, 1, 1],
            [1, 1, 1, -1, -1],
            [1, -1, -1, 1, 1],
            [1, -1, -1, -1, -1],
            [-1, 1, -1, 1, -1],
            [-1, 1, -1, -1, 1],
            [-1, -1, 1, 1, -1],
            [-1, -1, 1, -1, 1],
        ];
        for (row, exp) in oa.rows.iter().zip(expected) {
            assert_eq!(row.as_slice(), exp.as_slice());
        }
    }

    #[test]
    fn single_factor_is_first_column() {
        let oa = build_orthogonal_array(1).unwrap();
        assert_eq!(oa.column(0), vec![1, 1, 1, 1, -1, -1, -1, -1]);
    }

    #[test]
    fn every_prefix_is_orthogonal() {
        for f in 1..=7 {
            assert!(build_orthogonal_array(f).unwrap().is_orthogonal(), "{f} factors");
        }
    }

    #[test]
    fn too_many_factors_rejected() {
        assert!(matches!(build_orthogonal_array(8), Err(Error::UnsupportedFactors(8))));
        assert!(matches!(build_orthogonal_array(0), Err(Error::UnsupportedFactors(0))));
    }

    #[test]
    fn non_orthogonal_matrix_detected() {
        let m = LevelMatrix {
            rows: vec![vec![1, 1], vec![1, 1], vec![-1, -1], vec![-1, -1]],
        };
        assert!(!m.is_orthogonal());
    }
}
