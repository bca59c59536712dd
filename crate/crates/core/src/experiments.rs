//! End-to-end drivers producing the envelope, strategy-surface and
//! consumption-quotient data sets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::market::MarketSpec;
use crate::model::Model;
use crate::qsolver::{self, ConvergenceStatus, QSolution, RateField};
use crate::simulate::{map_chunks, SimSettings, PATH_CHUNK};
use crate::valuepde::{extract_strategies, solve_v_fd, RateSource, StrategyField, ValueField, ValueKind};
use crate::wealth::{self, WealthPath};

pub const Q_RANGE_CSV: &str = "q_range.csv";
pub const PI_SURFACE_CSV: &str = "pi_surface.csv";
pub const QUOTIENT_CSV: &str = "consumption_quotient.csv";
pub const QUOTIENT_PATHS_CSV: &str = "quotient_paths.csv";

const QUOTIENT_STREAM: u64 = 0xC0_7E;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QRangeRow {
    pub t: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Largest nodal standard error on this time row.
    pub se_max: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "R_T_minus_t")]
    pub r_tail: f64,
}

/// Per-time range of `𝕼` over price, with the envelope `[R(T − t), R(0)]`.
pub fn q_range(model: &Model, sol: &QSolution) -> Result<Vec<QRangeRow>> {
    let grid = sol.field.grid();
    let horizon = grid.horizon();
    let r0 = model.discount.forward_rate(0.0)?;
    grid.t_nodes()
        .iter()
        .enumerate()
        .map(|(n, &t)| {
            let row = sol.field.surface().row(n);
            Ok(QRangeRow {
                t,
                q_min: row.iter().copied().fold(f64::INFINITY, f64::min),
                q_max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                se_max: sol.se.row(n).iter().copied().fold(0.0, f64::max),
                r0,
                r_tail: model.discount.forward_rate(horizon - t)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiRow {
    pub t: f64,
    pub z: f64,
    pub pi_subgame: f64,
    pub pi_precommit: f64,
    pub diff: f64,
}

/// Node-by-node `π̄ − π̂` on a shared grid.
pub fn pi_surface(subgame: &StrategyField, precommit: &StrategyField) -> Result<Vec<PiRow>> {
    if subgame.grid != precommit.grid {
        return Err(Error::Domain("strategy surfaces live on different grids".into()));
    }
    let grid = &subgame.grid;
    let mut rows = Vec::with_capacity(grid.len());
    for (n, &t) in grid.t_nodes().iter().enumerate() {
        for (i, &y) in grid.y_nodes().iter().enumerate() {
            let (a, b) = (subgame.pi.at(n, i), precommit.pi.at(n, i));
            rows.push(PiRow {
                t,
                z: y.exp(),
                pi_subgame: a,
                pi_precommit: b,
                diff: a - b,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientBand {
    pub t: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuotientRun {
    pub times: Vec<f64>,
    pub bands: Vec<QuotientBand>,
    /// Leading raw paths, one vector per path.
    pub paths: Vec<Vec<f64>>,
}

/// `c̄X̄ / (ĉX̂)` along common Brownian paths started from `(0, s0)` with equal wealth.
pub fn consumption_quotient(
    market: &MarketSpec,
    subgame: &StrategyField,
    precommit: &StrategyField,
    s0: f64,
    sim: &SimSettings,
    emit_paths: usize,
) -> Result<QuotientRun> {
    sim.validate()?;
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::Domain(format!("initial price must be positive, got {s0}")));
    }
    let horizon = subgame.grid.horizon();
    let times = wealth::time_grid(0.0, horizon, sim.n_steps_per_unit_time);
    let nt = times.len();
    let strategies = [subgame, precommit];
    let chunks = map_chunks(sim.n_paths, PATH_CHUNK, |range| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(range.len() * nt);
        let mut path = WealthPath::new(nt, 2);
        for k in range {
            path.simulate(
                market,
                &strategies,
                &times,
                s0.ln(),
                sim.seed,
                QUOTIENT_STREAM,
                k,
                sim.antithetic,
            )?;
            let (c1, x1) = (path.log_consumption(0), path.log_wealth(0));
            let (c2, x2) = (path.log_consumption(1), path.log_wealth(1));
            out.extend((0..nt).map(|j| ((c1[j] + x1[j]) - (c2[j] + x2[j])).exp()));
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(sim.n_paths * nt);
    for c in chunks {
        all.extend(c?);
    }
    let n_paths = sim.n_paths;
    let paths = (0..emit_paths.min(n_paths))
        .map(|k| all[k * nt..(k + 1) * nt].to_vec())
        .collect();
    let mut column = vec![0.0; n_paths];
    let bands = times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            for (k, c) in column.iter_mut().enumerate() {
                *c = all[k * nt + j];
            }
            column.sort_by(f64::total_cmp);
            QuotientBand {
                t,
                q05: quantile(&column, 0.05),
                q50: quantile(&column, 0.50),
                q95: quantile(&column, 0.95),
            }
        })
        .collect();
    Ok(QuotientRun { times, bands, paths })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Value function and strategy of one agent.
#[derive(Clone, Debug)]
pub struct AgentSolution {
    pub value: ValueField,
    pub strategy: StrategyField,
}

/// Solves the PDE of one agent on the configured grid.
pub fn solve_agent(cfg: &RunConfig, model: &Model, kind: ValueKind, q: Option<&RateField>) -> Result<AgentSolution> {
    let rate = match (kind, q) {
        (ValueKind::Precommitment, _) => RateSource::Precommitment(&model.discount),
        (ValueKind::Subgame, Some(q)) => RateSource::Field(q),
        (ValueKind::Subgame, None) => return Err(Error::MissingInput("subgame value needs a rate field".into())),
    };
    let value = solve_v_fd(&model.market, &model.prefs, &rate, &cfg.fd_grid()?, &cfg.fd_params())?;
    let strategy = extract_strategies(&value, &model.market, &model.prefs);
    Ok(AgentSolution { value, strategy })
}

pub fn solve_rate_field(cfg: &RunConfig, model: &Model) -> Result<QSolution> {
    qsolver::solve_q(model, &cfg.q_grid()?, &cfg.sim, &cfg.solver_settings())
}

/// Files written by a driver and the status of its rate-field solve.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub artifacts: Vec<String>,
    pub status: ConvergenceStatus,
}

impl RunOutcome {
    fn new(status: ConvergenceStatus) -> Self {
        Self {
            artifacts: Vec::new(),
            status,
        }
    }
}

/// Closed-form check of the PDE solver using the market of `cfg` when it is
/// constant, otherwise the constant preset market.
pub fn self_test_report(cfg: Option<&RunConfig>, dt: f64) -> Result<crate::valuepde::SelfTestReport> {
    let base = crate::config::preset_constant();
    let cfg = cfg.unwrap_or(&base);
    let (r, sigma, theta) = match cfg.market {
        crate::config::MarketConfig::Constant {
            r,
            const_sigma,
            const_theta,
        } => (r, const_sigma, const_theta),
        _ => match base.market {
            crate::config::MarketConfig::Constant {
                r,
                const_sigma,
                const_theta,
            } => (r, const_sigma, const_theta),
            _ => unreachable!("constant preset"),
        },
    };
    let rho = cfg.discount_spec()?.forward_rate(0.0)?;
    let prefs = crate::market::Preferences::new(cfg.prefs.gamma)?;
    crate::valuepde::self_test(r, sigma, theta, rho, &prefs, cfg.horizon, dt)
}

fn write_q(dir: &Path, sol: &QSolution, out: &mut RunOutcome) -> Result<()> {
    io::write_qfield(&dir.join(io::QFIELD_CSV), &sol.field)?;
    io::write_convergence(&dir.join(io::CONVERGENCE_CSV), &sol.report)?;
    out.artifacts
        .extend([io::QFIELD_CSV.to_string(), io::CONVERGENCE_CSV.to_string()]);
    Ok(())
}

fn write_agent(dir: &Path, agent: &AgentSolution, out: &mut RunOutcome) -> Result<()> {
    let v = io::vfield_name(&agent.value);
    let s = io::strategy_name(&agent.strategy);
    io::write_vfield(&dir.join(&v), &agent.value)?;
    io::write_strategy(&dir.join(&s), &agent.strategy)?;
    out.artifacts.extend([v, s]);
    Ok(())
}

/// Rate field, its convergence history and the per-time envelope table.
pub fn run_q_range(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let model = cfg.model()?;
    let sol = solve_rate_field(cfg, &model)?;
    let mut out = RunOutcome::new(sol.report.status);
    write_q(dir, &sol, &mut out)?;
    io::write_rows(&dir.join(Q_RANGE_CSV), q_range(&model, &sol)?)?;
    out.artifacts.push(Q_RANGE_CSV.into());
    Ok(out)
}

struct Pipeline {
    model: Model,
    q: QSolution,
    subgame: AgentSolution,
    precommit: AgentSolution,
}

fn pipeline(cfg: &RunConfig, dir: &Path, out: &mut RunOutcome) -> Result<Pipeline> {
    let model = cfg.model()?;
    let q = solve_rate_field(cfg, &model)?;
    out.status = q.report.status;
    write_q(dir, &q, out)?;
    let subgame = solve_agent(cfg, &model, ValueKind::Subgame, Some(&q.field))?;
    let precommit = solve_agent(cfg, &model, ValueKind::Precommitment, None)?;
    write_agent(dir, &subgame, out)?;
    write_agent(dir, &precommit, out)?;
    Ok(Pipeline {
        model,
        q,
        subgame,
        precommit,
    })
}

fn write_pi(dir: &Path, p: &Pipeline, out: &mut RunOutcome) -> Result<()> {
    io::write_rows(
        &dir.join(PI_SURFACE_CSV),
        pi_surface(&p.subgame.strategy, &p.precommit.strategy)?,
    )?;
    out.artifacts.push(PI_SURFACE_CSV.into());
    Ok(())
}

fn write_quotient(cfg: &RunConfig, dir: &Path, p: &Pipeline, out: &mut RunOutcome) -> Result<()> {
    let e = &cfg.experiment;
    let run = consumption_quotient(
        &p.model.market,
        &p.subgame.strategy,
        &p.precommit.strategy,
        e.s0,
        &cfg.sim,
        e.emit_paths,
    )?;
    io::write_rows(&dir.join(QUOTIENT_CSV), &run.bands)?;
    out.artifacts.push(QUOTIENT_CSV.into());
    if !run.paths.is_empty() {
        #[derive(Serialize)]
        struct PathRow {
            path: usize,
            t: f64,
            quotient: f64,
        }
        let rows = run.paths.iter().enumerate().flat_map(|(k, p)| {
            run.times
                .iter()
                .zip(p)
                .map(move |(&t, &quotient)| PathRow { path: k, t, quotient })
        });
        io::write_rows(&dir.join(QUOTIENT_PATHS_CSV), rows)?;
        out.artifacts.push(QUOTIENT_PATHS_CSV.into());
    }
    Ok(())
}

/// Both strategy surfaces and their difference.
pub fn run_pi_surface(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::new(ConvergenceStatus::Converged);
    let p = pipeline(cfg, dir, &mut out)?;
    write_pi(dir, &p, &mut out)?;
    Ok(out)
}

/// Quantile bands of the consumption quotient on common paths.
pub fn run_consumption_quotient(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::new(ConvergenceStatus::Converged);
    let p = pipeline(cfg, dir, &mut out)?;
    write_quotient(cfg, dir, &p, &mut out)?;
    Ok(out)
}

/// Every data set from one rate-field solve.
pub fn run_full_pipeline(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::new(ConvergenceStatus::Converged);
    let p = pipeline(cfg, dir, &mut out)?;
    io::write_rows(&dir.join(Q_RANGE_CSV), q_range(&p.model, &p.q)?)?;
    out.artifacts.push(Q_RANGE_CSV.into());
    write_pi(dir, &p, &mut out)?;
    write_quotient(cfg, dir, &p, &mut out)?;
    Ok(out)
}
