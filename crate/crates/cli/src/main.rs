use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmg_core::experiment::{self, parse_lambda0, CostRow, Mode, Overrides, RunSpec, SweepParam};
use mmg_core::parallel::Execution;
use mmg_core::scenarios::{deterministic_scenarios, robust_scenarios};
use mmg_core::subproblem::{audit_dispatch, build_mg_problem, solve_mg, TradingPrices};
use mmg_core::{domain::load_config_file, Error};

/// Robust day-ahead scheduling of cooperating microgrids with an internal
/// energy market.
///
/// Exit status: 0 success, 2 invalid input or config, 3 infeasible
/// microgrid, 4 market did not converge, 1 anything else.
#[derive(Parser)]
#[command(name = "mmg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a config in any mode and write the CSV artifacts.
    Run(RunArgs),
    /// Clear the internal market (cooperative, isolated or deterministic).
    Clear(ClearArgs),
    /// Solve the pooled problem over all microgrids; also writes duals.csv.
    Central(CentralArgs),
    /// Repeat a run over values of the step size or the base-case weight.
    Sweep(SweepArgs),
    /// Scenario utilities.
    #[command(subcommand)]
    Scenarios(ScenarioCommand),
    /// Single-microgrid utilities.
    #[command(subcommand)]
    Mg(MgCommand),
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory for the CSV files.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Sub-gradient step size α ($/MWh per MW).
    #[arg(long)]
    alpha: Option<f64>,
    /// Convergence tolerance on the market mismatch (MW).
    #[arg(long)]
    eps: Option<f64>,
    /// Trading fee τ ($/MWh) charged by the PSO on every purchase and sale.
    #[arg(long)]
    tau: Option<f64>,
    /// Weight of the base-case scenario in the expected cost, in (0, 1].
    #[arg(long)]
    p0: Option<f64>,
    /// Initial market price: mean (band midpoint), grid_buy, grid_sell or a number.
    #[arg(long)]
    lambda0: Option<String>,
    /// Iteration limit of the market.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Recorded for reproducibility; nothing in the pipeline is random.
    #[arg(long)]
    seed: Option<u64>,
    /// Solve the microgrid subproblems one after another.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn spec(&self, mode: Mode, include_fees: bool) -> Result<RunSpec, Error> {
        let overrides = Overrides {
            alpha: self.alpha,
            eps: self.eps,
            tau: self.tau,
            p0: self.p0,
            lambda0: self.lambda0.as_deref().map(parse_lambda0).transpose()?,
            max_iter: self.max_iter,
            seed: self.seed,
        };
        Ok(RunSpec {
            config: self.config.clone(),
            mode,
            overrides,
            out_dir: self.out.clone(),
            include_fees,
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cooperative,
    Isolated,
    Deterministic,
    Centralized,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cooperative => Mode::Cooperative,
            ModeArg::Isolated => Mode::Isolated,
            ModeArg::Deterministic => Mode::Deterministic,
            ModeArg::Centralized => Mode::Centralized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MarketModeArg {
    Cooperative,
    Isolated,
    Deterministic,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "cooperative")]
    mode: ModeArg,
    /// In centralized mode, charge the trading fee inside the pooled objective.
    #[arg(long)]
    include_fees: bool,
}

#[derive(Args)]
struct ClearArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "cooperative")]
    mode: MarketModeArg,
}

#[derive(Args)]
struct CentralArgs {
    #[command(flatten)]
    common: Common,
    /// Charge the trading fee inside the pooled objective.
    #[arg(long)]
    include_fees: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParamArg {
    Alpha,
    P0,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Parameter to sweep.
    #[arg(long, value_enum)]
    param: SweepParamArg,
    /// Comma-separated values, e.g. 0.5,1,2,4.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<f64>,
    /// Mode of the swept runs; a p0 sweep always adds the isolated baseline.
    #[arg(long, value_enum, default_value = "cooperative")]
    mode: MarketModeArg,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Write the realized scenarios as CSV (h, t, quantity, value).
    Dump {
        #[arg(long, short)]
        config: PathBuf,
        /// Base case only.
        #[arg(long)]
        deterministic: bool,
        /// Output file; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MgCommand {
    /// Solve one microgrid against the grid prices and audit the result.
    Solve {
        #[arg(long, short)]
        config: PathBuf,
        /// Microgrid id, or its 1-based position in the config.
        #[arg(long)]
        mg: String,
        #[arg(long)]
        p0: Option<f64>,
        /// Base case only.
        #[arg(long)]
        deterministic: bool,
        /// Write dispatch.csv here.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write the assembled QP in text form to this file.
        #[arg(long)]
        qp_dump: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Parse(_) | Error::Validation { .. } | Error::UnsupportedFactors(_) | Error::ColumnMismatch { .. } => 2,
        Error::Infeasible { .. } => 3,
        Error::NonConvergence { .. } => 4,
        _ => 1,
    }
}

fn print_summary(rows: &[CostRow]) {
    println!("{:<10} {:>14} {:>14} {:>14}", "entity", "C_E", "C_R", "C_exp");
    for r in rows {
        println!(
            "{:<10} {:>14.4} {:>14.4} {:>14.4}",
            r.entity, r.costs.energy, r.costs.reserve, r.costs.expected
        );
    }
}

fn run_and_report(spec: &RunSpec) -> Result<(), Error> {
    let outcome = experiment::run(spec)?;
    if let Some(m) = outcome.market() {
        println!(
            "{} market: {} after {} iterations (mismatch {:.3e} MW)",
            outcome.mode,
            if m.converged { "converged" } else { "not converged" },
            m.num_iterations(),
            m.final_mismatch()
        );
    }
    if let Some(c) = outcome.central() {
        println!(
            "centralized objective {:.4} $ (KKT residual {:.1e})",
            c.objective, c.kkt_residual
        );
    }
    print_summary(&outcome.summary());
    println!("artifacts in {}", spec.out_dir.display());
    outcome.ensure_converged()
}

fn find_mg(config: &mmg_core::domain::MmgConfig, key: &str) -> Result<usize, Error> {
    if let Some(m) = config.mgs.iter().position(|mg| mg.id == key) {
        return Ok(m);
    }
    match key.parse::<usize>() {
        Ok(i) if (1..=config.num_mgs()).contains(&i) => Ok(i - 1),
        _ => Err(Error::Validation {
            path: "mg".into(),
            message: format!("no microgrid `{key}`"),
        }),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut std::fs::File) -> Result<(), Error>) -> Result<(), Error> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    f(&mut file)
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(a) => run_and_report(&a.common.spec(a.mode.into(), a.include_fees)?),
        Command::Clear(a) => {
            let mode = match a.mode {
                MarketModeArg::Cooperative => Mode::Cooperative,
                MarketModeArg::Isolated => Mode::Isolated,
                MarketModeArg::Deterministic => Mode::Deterministic,
            };
            run_and_report(&a.common.spec(mode, false)?)
        }
        Command::Central(a) => run_and_report(&a.common.spec(Mode::Centralized, a.include_fees)?),
        Command::Sweep(a) => {
            let mode = match a.mode {
                MarketModeArg::Cooperative => Mode::Cooperative,
                MarketModeArg::Isolated => Mode::Isolated,
                MarketModeArg::Deterministic => Mode::Deterministic,
            };
            let param = match a.param {
                SweepParamArg::Alpha => SweepParam::Alpha,
                SweepParamArg::P0 => SweepParam::P0,
            };
            let spec = a.common.spec(mode, false)?;
            let points = experiment::sweep(&spec, param, &a.values)?;
            for p in &points {
                match param {
                    SweepParam::Alpha => println!(
                        "alpha {:>8}: {:>5} iterations, converged {}",
                        p.value, p.iterations, p.converged
                    ),
                    SweepParam::P0 => println!(
                        "p0 {:>5}: cooperative {:.2} isolated {:.2} ({:.2}% lower)",
                        p.value,
                        p.cooperative_total(),
                        p.isolated_total(),
                        p.reduction_pct()
                    ),
                }
            }
            println!("sweep table in {}", spec.out_dir.join("sweep.csv").display());
            Ok(())
        }
        Command::Scenarios(ScenarioCommand::Dump {
            config,
            deterministic,
            out,
        }) => {
            let config = load_config_file(&config)?;
            let scen = if deterministic {
                deterministic_scenarios(&config)
            } else {
                robust_scenarios(&config)?
            };
            match out {
                Some(path) => write_file(&path, |f| scen.write_csv(&config, f)),
                None => scen.write_csv(&config, std::io::stdout().lock()),
            }
        }
        Command::Mg(MgCommand::Solve {
            config,
            mg,
            p0,
            deterministic,
            out,
            qp_dump,
        }) => {
            let mut config = load_config_file(&config)?;
            Overrides {
                p0,
                ..Overrides::default()
            }
            .apply(&mut config)?;
            let m = find_mg(&config, &mg)?;
            let scen = if deterministic {
                deterministic_scenarios(&config)
            } else {
                robust_scenarios(&config)?
            };
            let prices = TradingPrices::grid(&scen);
            let p0 = config.market.p0;
            if let Some(path) = qp_dump {
                let qp = build_mg_problem(&config, m, &scen, &prices, p0)?;
                write_file(&path, |f| {
                    qp.write_dump(f).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?;
            }
            let d = solve_mg(&config, m, &scen, &prices, p0)?;
            let audit = audit_dispatch(&config, m, &scen, &d, 1e-6);
            println!(
                "{}: C_E {:.4}  C_R {:.4}  C_exp {:.4}",
                d.id, d.cost_energy, d.cost_reserve, d.cost_expected
            );
            println!(
                "audit: {} (largest violation {:.2e})",
                if audit.passed() { "passed" } else { "FAILED" },
                audit.max_violation
            );
            for w in &audit.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let path = dir.join("dispatch.csv");
                write_file(&path, |f| {
                    writeln!(f, "t,h,device,value").map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    for (t, h, device, v) in d.rows() {
                        writeln!(f, "{t},{h},{device},{}", mmg_core::output::fmt_num(v)).map_err(|e| Error::Io {
                            path: path.clone(),
                            source: e,
                        })?;
                    }
                    Ok(())
                })?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
