//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or missing
//! input, 3 fixed-point stall at the noise floor, 4 divergence, 5 failed
//! self-test.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, warn};
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{self, RunOutcome};
use crate::io::{self, Manifest};
use crate::qsolver::{ConvergenceStatus, RateField};
use crate::valuepde::{self, ValueKind};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MERTON_OUT_DIR";

/// Relative error accepted by the PDE self-test.
pub const SELF_TEST_TOL: f64 = 1e-4;

pub mod exit {
    pub const OK: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const STALL: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const SELF_TEST: i32 = 5;
}

#[derive(Parser, Debug)]
#[command(
    name = "merton",
    version,
    about = "Consumption-investment strategies under non-exponential discounting"
)]
pub struct Cli {
    /// Worker threads for the Monte Carlo kernels (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory [default: $MERTON_OUT_DIR or ./out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Use a shipped preset instead of a config file.
    #[arg(long, value_parser = ["constant", "cev"])]
    pub preset: Option<String>,
    /// Override the random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Subgame,
    Precommit,
}

impl From<KindArg> for ValueKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Subgame => ValueKind::Subgame,
            KindArg::Precommit => ValueKind::Precommitment,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct QSourceArgs {
    /// Solve for the rate field instead of reading it.
    #[arg(long)]
    pub solve_q_first: bool,
    /// Rate field to read [default: <out>/qfield.csv].
    #[arg(long)]
    pub qfield: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the fixed point for the utility-weighted discount rate.
    SolveQ {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Solve the value-function PDE of one agent and extract its strategy.
    SolveV {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        q: QSourceArgs,
        /// Check the PDE solver against the closed form before solving.
        #[arg(long)]
        self_test: bool,
    },
    /// Both strategies and their investment difference.
    Strategies {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        q: QSourceArgs,
    },
    /// Monte Carlo value of a strategy at one state.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[command(flatten)]
        q: QSourceArgs,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Stock price [default: experiment.S0].
        #[arg(long)]
        z: Option<f64>,
        /// Wealth [default: experiment.x0].
        #[arg(long)]
        x: Option<f64>,
    },
    /// Regenerate the data behind one figure.
    Reproduce {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        figure: u8,
    },
    /// Compare the PDE solver with the constant-coefficient closed form.
    SelfTest {
        /// Optional config; its market is used when it is constant.
        config: Option<PathBuf>,
        /// Time step of the check.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let threads = cli.threads;
    let go = || dispatch(&cli);
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(Error::Numerical(format!("thread pool: {e}"))),
        },
        None => go(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::MissingInput(_) | Error::UnsupportedFamily(_) => exit::CONFIG,
        _ => exit::RUNTIME,
    }
}

fn status_code(status: ConvergenceStatus) -> i32 {
    match status {
        ConvergenceStatus::Converged => exit::OK,
        ConvergenceStatus::NoiseFloor => {
            warn!("rate field stalled at the Monte Carlo noise floor");
            exit::STALL
        }
        ConvergenceStatus::Diverged => exit::DIVERGED,
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => config::preset(name)?,
        (None, None) => return Err(Error::config("config", "no config file or preset given")),
    };
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn finish(dir: &Path, cfg: &RunConfig, command: &str, outcome: &RunOutcome) -> Result<i32> {
    let mut m = Manifest::new(cfg, command);
    m.artifacts = outcome.artifacts.clone();
    m.notes.push(format!("rate field status: {:?}", outcome.status));
    m.write(dir, cfg)?;
    println!("{command}: wrote {} to {}", outcome.artifacts.join(", "), dir.display());
    Ok(status_code(outcome.status))
}

/// Rate field for the subgame agent: solved now or read from disk.
fn rate_field(
    cfg: &RunConfig,
    model: &crate::Model,
    q: &QSourceArgs,
    dir: &Path,
    outcome: &mut RunOutcome,
) -> Result<RateField> {
    if q.solve_q_first {
        let sol = experiments::solve_rate_field(cfg, model)?;
        io::write_qfield(&dir.join(io::QFIELD_CSV), &sol.field)?;
        io::write_convergence(&dir.join(io::CONVERGENCE_CSV), &sol.report)?;
        outcome
            .artifacts
            .extend([io::QFIELD_CSV.to_string(), io::CONVERGENCE_CSV.to_string()]);
        outcome.status = sol.report.status;
        return Ok(sol.field);
    }
    let path = q.qfield.clone().unwrap_or_else(|| dir.join(io::QFIELD_CSV));
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "{} not found; run solve-q first or pass --solve-q-first",
            path.display()
        )));
    }
    let field = io::read_qfield(&path)?;
    if (field.grid().horizon() - cfg.horizon).abs() > 1e-12 {
        return Err(Error::config(
            "T",
            format!(
                "rate field horizon {} differs from T = {}",
                field.grid().horizon(),
                cfg.horizon
            ),
        ));
    }
    Ok(field)
}

fn print_self_test(report: &valuepde::SelfTestReport) -> bool {
    let ok = report.max_rel_error <= SELF_TEST_TOL;
    println!(
        "self-test: max relative error {:.3e} (tolerance {SELF_TEST_TOL:.0e}), max |pi - merton| {:.3e} on {}x{} nodes: {}",
        report.max_rel_error,
        report.max_pi_error,
        report.n_t,
        report.n_y,
        if ok { "ok" } else { "FAILED" }
    );
    ok
}

#[derive(Serialize)]
struct EvaluationRow {
    kind: &'static str,
    t: f64,
    z: f64,
    x: f64,
    objective: f64,
    se: f64,
    from_value_function: f64,
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let dir = out_dir(cli);
    match &cli.command {
        Command::SolveQ { cfg } => {
            let cfg = load(cfg)?;
            let model = cfg.model()?;
            let sol = experiments::solve_rate_field(&cfg, &model)?;
            io::write_qfield(&dir.join(io::QFIELD_CSV), &sol.field)?;
            io::write_convergence(&dir.join(io::CONVERGENCE_CSV), &sol.report)?;
            let outcome = RunOutcome {
                artifacts: vec![io::QFIELD_CSV.into(), io::CONVERGENCE_CSV.into()],
                status: sol.report.status,
            };
            println!(
                "solve-q: {:?} after {} iterations, last gap {:.3e}, max SE {:.3e}",
                sol.report.status,
                sol.report.iterations(),
                sol.report.gaps().last().copied().unwrap_or(f64::NAN),
                sol.report.max_se
            );
            finish(&dir, &cfg, "solve-q", &outcome)
        }
        Command::SolveV {
            cfg,
            kind,
            q,
            self_test,
        } => {
            let cfg = load(cfg)?;
            if *self_test && !print_self_test(&experiments::self_test_report(Some(&cfg), 1e-3)?) {
                return Ok(exit::SELF_TEST);
            }
            let model = cfg.model()?;
            let mut outcome = RunOutcome {
                artifacts: Vec::new(),
                status: ConvergenceStatus::Converged,
            };
            let kind = ValueKind::from(*kind);
            let field = match kind {
                ValueKind::Subgame => Some(rate_field(&cfg, &model, q, &dir, &mut outcome)?),
                ValueKind::Precommitment => None,
            };
            let agent = experiments::solve_agent(&cfg, &model, kind, field.as_ref())?;
            let (v, s) = (io::vfield_name(&agent.value), io::strategy_name(&agent.strategy));
            io::write_vfield(&dir.join(&v), &agent.value)?;
            io::write_strategy(&dir.join(&s), &agent.strategy)?;
            outcome.artifacts.extend([v, s]);
            finish(&dir, &cfg, "solve-v", &outcome)
        }
        Command::Strategies { cfg, q } => {
            let cfg = load(cfg)?;
            let model = cfg.model()?;
            let mut outcome = RunOutcome {
                artifacts: Vec::new(),
                status: ConvergenceStatus::Converged,
            };
            let field = rate_field(&cfg, &model, q, &dir, &mut outcome)?;
            let sub = experiments::solve_agent(&cfg, &model, ValueKind::Subgame, Some(&field))?;
            let pre = experiments::solve_agent(&cfg, &model, ValueKind::Precommitment, None)?;
            for agent in [&sub, &pre] {
                let s = io::strategy_name(&agent.strategy);
                io::write_strategy(&dir.join(&s), &agent.strategy)?;
                outcome.artifacts.push(s);
            }
            io::write_rows(
                &dir.join(experiments::PI_SURFACE_CSV),
                experiments::pi_surface(&sub.strategy, &pre.strategy)?,
            )?;
            outcome.artifacts.push(experiments::PI_SURFACE_CSV.into());
            finish(&dir, &cfg, "strategies", &outcome)
        }
        Command::Evaluate { cfg, kind, q, t, z, x } => {
            let cfg = load(cfg)?;
            let model = cfg.model()?;
            let mut outcome = RunOutcome {
                artifacts: Vec::new(),
                status: ConvergenceStatus::Converged,
            };
            let kind = ValueKind::from(*kind);
            let field = match kind {
                ValueKind::Subgame => Some(rate_field(&cfg, &model, q, &dir, &mut outcome)?),
                ValueKind::Precommitment => None,
            };
            let agent = experiments::solve_agent(&cfg, &model, kind, field.as_ref())?;
            let z = z.unwrap_or(cfg.experiment.s0);
            let x = x.unwrap_or(cfg.experiment.x0);
            let est = valuepde::evaluate_objective(&agent.strategy, &model, *t, z, x, &cfg.sim)?;
            let v = agent.value.v.interp(*t, z.ln());
            let row = EvaluationRow {
                kind: kind.tag(),
                t: *t,
                z,
                x,
                objective: est.mean,
                se: est.se,
                from_value_function: valuepde::value_from_v(v, x, &model.prefs),
            };
            println!(
                "evaluate: J = {:.8e} +/- {:.2e}, v^(1-gamma) x^gamma / gamma = {:.8e}",
                row.objective, row.se, row.from_value_function
            );
            let name = format!("evaluate_{}.csv", kind.tag());
            io::write_rows(&dir.join(&name), [row])?;
            outcome.artifacts.push(name);
            finish(&dir, &cfg, "evaluate", &outcome)
        }
        Command::Reproduce { cfg, figure } => {
            let cfg = load(cfg)?;
            let outcome = match figure {
                1 => experiments::run_q_range(&cfg, &dir)?,
                2 => experiments::run_pi_surface(&cfg, &dir)?,
                _ => experiments::run_consumption_quotient(&cfg, &dir)?,
            };
            finish(&dir, &cfg, &format!("reproduce --figure {figure}"), &outcome)
        }
        Command::SelfTest { config, dt } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            if !(*dt > 0.0) {
                return Err(Error::config("dt", "must be positive"));
            }
            let report = experiments::self_test_report(cfg.as_ref(), *dt)?;
            Ok(if print_self_test(&report) {
                exit::OK
            } else {
                exit::SELF_TEST
            })
        }
    }
}
