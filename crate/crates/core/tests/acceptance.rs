//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false` so the lines show up in `cargo test` output.
//! Criteria listed in `KNOWN_FAILURES` are reported but do not fail the run.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use merton_core::config::{preset_cev, preset_constant, DiscountConfig, MarketConfig, RunConfig};
use merton_core::experiments::{consumption_quotient, pi_surface, solve_agent, solve_rate_field, AgentSolution};
use merton_core::market::Preferences;
use merton_core::qsolver::{utility_weighted_rate, ConvergenceStatus, QSolution};
use merton_core::simulate::SimSettings;
use merton_core::valuepde::{self, constant_k, constant_v, solve_v_mc, StrategyField, ValueKind};
use merton_core::{Model, Result};

/// Criteria expected to fail, with the reason printed next to them.
const KNOWN_FAILURES: &[(u32, &str)] = &[];

const PROBE_SEED: u64 = 7;
const RUNTIME_LIMIT: Duration = Duration::from_secs(120);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn exponential(mut cfg: RunConfig) -> RunConfig {
    cfg.discount = DiscountConfig::Exponential { rho: 0.02 };
    cfg
}

fn max_by<T>(items: impl IntoIterator<Item = T>, f: impl Fn(&T) -> f64) -> f64 {
    items.into_iter().map(|x| f(&x)).fold(f64::NEG_INFINITY, f64::max)
}

/// Shared solves, computed once.
struct Runs {
    cev: RunConfig,
    cev_model: Model,
    hyp: QSolution,
    hyp_time: Duration,
    sub: AgentSolution,
    pre: AgentSolution,
    expo_cev: Option<(QSolution, Model)>,
}

fn criterion_1(runs: &mut Runs) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, base) in [("constant", preset_constant()), ("cev", preset_cev())] {
        let cfg = exponential(base);
        let model = cfg.model()?;
        let start = Instant::now();
        let sol = solve_rate_field(&cfg, &model)?;
        let elapsed = start.elapsed();
        let grid = sol.field.grid().clone();
        let mut worst: f64 = 0.0;
        let mut ok = sol.report.status == ConvergenceStatus::Converged && elapsed <= RUNTIME_LIMIT;
        for n in 0..grid.n_t() {
            for i in 0..grid.n_y() {
                let dev = (sol.field.at(n, i) - 0.02).abs();
                worst = worst.max(dev);
                ok &= dev <= (3.0 * sol.se.at(n, i)).max(1e-3);
            }
        }
        pass &= ok;
        parts.push(format!(
            "{name}: {:?} in {} iterations, {:.1}s, max|q-0.02| = {worst:.2e}",
            sol.report.status,
            sol.report.iterations(),
            elapsed.as_secs_f64()
        ));
        if name == "cev" {
            runs.expo_cev = Some((sol, model));
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_2(runs: &Runs) -> Result<Outcome> {
    let sol = &runs.hyp;
    let d = &runs.cev_model.discount;
    let horizon = runs.cev.horizon;
    let (r0, grid) = (d.forward_rate(0.0)?, sol.field.grid());
    let mut worst = f64::NEG_INFINITY;
    for (n, &t) in grid.t_nodes().iter().enumerate() {
        let lo = d.forward_rate(horizon - t)?;
        for i in 0..grid.n_y() {
            let (q, se) = (sol.field.at(n, i), sol.se.at(n, i));
            worst = worst.max((lo - 3.0 * se) - q).max(q - (r0 + 3.0 * se));
        }
    }
    let converged = sol.report.status != ConvergenceStatus::Diverged;
    outcome(
        converged && worst <= 0.0,
        format!(
            "q in [{:.5}, {:.5}], envelope [{:.5}, {r0:.5}], worst violation {worst:.2e}, {:.1}s",
            sol.field.surface().min(),
            sol.field.surface().max(),
            d.forward_rate(horizon)?,
            runs.hyp_time.as_secs_f64()
        ),
    )
}

fn criterion_3(runs: &Runs) -> Result<Outcome> {
    let f = &runs.hyp.field;
    let last = f.grid().n_t() - 1;
    let row = f.surface().row(last);
    let exact = row.iter().all(|&q| q == 0.04);
    outcome(
        exact,
        format!(
            "{} terminal nodes, values {:?}",
            row.len(),
            (row[0], row[row.len() - 1])
        ),
    )
}

fn criterion_4() -> Result<Outcome> {
    let cfg = preset_constant();
    let MarketConfig::Constant { r, const_theta, .. } = cfg.market else {
        unreachable!("constant preset");
    };
    let prefs = Preferences::new(cfg.prefs.gamma)?;
    let rho = 0.02;
    let k = constant_k(r, const_theta, rho, &prefs);

    // Fourth-order Runge-Kutta on dv/dtau = k v + 1 in time-to-go.
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut taus: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..cfg.horizon)).collect();
    taus.sort_by(f64::total_cmp);
    let f = |v: f64| k * v + 1.0;
    let (mut tau, mut v, h) = (0.0, 1.0, 1e-3_f64);
    let mut oracle_err: f64 = 0.0;
    for &target in &taus {
        while tau < target {
            let step = h.min(target - tau);
            let k1 = f(v);
            let k2 = f(v + 0.5 * step * k1);
            let k3 = f(v + 0.5 * step * k2);
            let k4 = f(v + step * k3);
            v += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            tau += step;
        }
        oracle_err = oracle_err.max((v - constant_v(k, target)).abs() / v);
    }

    let MarketConfig::Constant { const_sigma, .. } = cfg.market else {
        unreachable!();
    };
    let report = valuepde::self_test(r, const_sigma, const_theta, rho, &prefs, cfg.horizon, 1e-3)?;
    outcome(
        oracle_err <= 1e-10 && report.max_rel_error <= 1e-4,
        format!(
            "k = {k:.6}, oracle vs RK4 {oracle_err:.1e}, FD vs oracle max rel {:.2e} over {}x{} nodes",
            report.max_rel_error, report.n_t, report.n_y
        ),
    )
}

fn criterion_5(runs: &Runs) -> Result<Outcome> {
    const REFINE: usize = 4;
    let vf = &runs.sub.value;
    let grid = &vf.grid;
    let centre = runs.cev.experiment.s0.ln();
    // Within a year of T the MC standard error vanishes faster than the FD
    // truncation error, so the comparison says nothing about either solver there.
    let latest = grid
        .t_nodes()
        .iter()
        .rposition(|&t| t <= runs.cev.horizon - 1.0)
        .unwrap_or(0);
    let interior: Vec<usize> = (0..grid.n_y())
        .filter(|&i| (grid.y_nodes()[i] - centre).abs() <= 2.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED + 5);
    let nodes: Vec<(usize, usize)> = (0..20)
        .map(|_| {
            (
                rng.random_range(0..=latest),
                interior[rng.random_range(0..interior.len())],
            )
        })
        .collect();
    let probes: Vec<(f64, f64)> = nodes
        .iter()
        .map(|&(n, i)| (grid.t_nodes()[n], grid.y_nodes()[i]))
        .collect();

    // Where volatility sits at its floor the MC error is far below the preset
    // grid's truncation error, so the reference FD solve is refined until it is not.
    let mut fine_cfg = runs.cev.clone();
    fine_cfg.fd.n_t_fd = REFINE * (runs.cev.fd.n_t_fd - 1) + 1;
    fine_cfg.fd.n_y_fd = REFINE * (runs.cev.fd.n_y_fd - 1) + 1;
    let fine = solve_agent(&fine_cfg, &runs.cev_model, ValueKind::Subgame, Some(&runs.hyp.field))?;

    let sim = SimSettings {
        n_paths: 100_000,
        n_steps_per_unit_time: 80.0,
        ..runs.cev.sim
    };
    let rate = valuepde::RateSource::Field(&runs.hyp.field);
    let m = &runs.cev_model;
    let est = solve_v_mc(&m.market, &m.prefs, &rate, runs.cev.horizon, &probes, &sim)?;
    let worst = max_by(est.iter().zip(&nodes), |(e, &(n, i))| {
        (e.mean - fine.value.v.at(REFINE * n, REFINE * i)).abs() / e.se
    });
    let worst_preset = max_by(est.iter().zip(&nodes), |(e, &(n, i))| {
        (e.mean - vf.v.at(n, i)).abs() / e.se
    });
    outcome(
        worst <= 3.0,
        format!(
            "20 probes with t <= T-1, 100000 paths at 80 steps/unit time, worst |v_fd - v_mc| = {worst:.2} SE \
             on the {}x{} FD grid ({worst_preset:.2} SE on the preset {}x{} grid)",
            fine_cfg.fd.n_t_fd, fine_cfg.fd.n_y_fd, runs.cev.fd.n_t_fd, runs.cev.fd.n_y_fd
        ),
    )
}

fn criterion_6(runs: &Runs) -> Result<Outcome> {
    let sol = &runs.hyp;
    let grid = sol.field.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED + 6);
    let sim = SimSettings {
        seed: runs.cev.sim.seed ^ 0x5eed,
        ..runs.cev.sim
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = rng.random_range(0..grid.n_t() - 1);
        let i = rng.random_range(1..grid.n_y() - 1);
        let (t, y) = (grid.t_nodes()[n], grid.y_nodes()[i]);
        let est = utility_weighted_rate(
            &runs.sub.strategy,
            &runs.cev_model,
            t,
            y.exp(),
            runs.cev.experiment.x0,
            &sim,
        )?;
        let se = (est.se.powi(2) + sol.se.at(n, i).powi(2)).sqrt();
        worst = worst.max((est.mean - sol.field.at(n, i)).abs() / se);
    }
    outcome(worst <= 3.0, format!("10 probes, worst gap {worst:.2} combined SE"))
}

fn pi_deviation(s: &StrategyField, target: f64) -> f64 {
    max_by(s.pi.values().iter(), |p| (**p - target).abs())
}

fn criterion_7() -> Result<Outcome> {
    let cfg = preset_constant();
    let MarketConfig::Constant {
        r,
        const_sigma,
        const_theta,
    } = cfg.market
    else {
        unreachable!("constant preset");
    };
    let model = cfg.model()?;
    let merton = const_theta / ((1.0 - cfg.prefs.gamma) * const_sigma);
    let sol = solve_rate_field(&cfg, &model)?;
    let sub = solve_agent(&cfg, &model, ValueKind::Subgame, Some(&sol.field))?;
    let pre = solve_agent(&cfg, &model, ValueKind::Precommitment, None)?;
    let dt = cfg.fd_grid()?.uniform_dt().expect("uniform FD grid");
    let rho = model.discount.forward_rate(0.0)?;
    let report = valuepde::self_test(r, const_sigma, const_theta, rho, &model.prefs, cfg.horizon, dt)?;
    let tol = 2.0 * report.max_rel_error * merton;
    let (ds, dp) = (pi_deviation(&sub.strategy, merton), pi_deviation(&pre.strategy, merton));
    outcome(
        ds <= tol && dp <= tol,
        format!("pi = {merton:.6}, max dev subgame {ds:.1e}, precommit {dp:.1e}, tolerance {tol:.1e} (dt = {dt})"),
    )
}

/// `(4/3)|pi_h - pi_{h/2}|` at the coarse nodes, and the refined strategy.
fn richardson(cfg: &RunConfig, model: &Model, coarse: &StrategyField) -> Result<(f64, StrategyField)> {
    let mut fine_cfg = cfg.clone();
    fine_cfg.fd.n_t_fd = 2 * cfg.fd.n_t_fd - 1;
    fine_cfg.fd.n_y_fd = 2 * cfg.fd.n_y_fd - 1;
    let fine = solve_agent(&fine_cfg, model, ValueKind::Precommitment, None)?;
    let g = coarse.grid();
    let mut worst: f64 = 0.0;
    for n in 0..g.n_t() {
        for i in 0..g.n_y() {
            worst = worst.max((coarse.pi.at(n, i) - fine.strategy.pi.at(2 * n, 2 * i)).abs());
        }
    }
    Ok((worst * 4.0 / 3.0, fine.strategy))
}

fn criterion_8(runs: &Runs) -> Result<Outcome> {
    let expo_cfg = exponential(runs.cev.clone());
    let expo_model = expo_cfg.model()?;
    let expo = solve_agent(&expo_cfg, &expo_model, ValueKind::Precommitment, None)?;
    let hyp = &runs.pre.strategy;
    let gap = max_by(hyp.pi.values().iter().zip(expo.strategy.pi.values()), |(a, b)| {
        (**a - **b).abs()
    });
    let (trunc_h, fine_h) = richardson(&runs.cev, &runs.cev_model, hyp)?;
    let (trunc_e, fine_e) = richardson(&expo_cfg, &expo_model, &expo.strategy)?;
    let trunc = trunc_h.max(trunc_e);
    let tol = 2.0 * trunc;
    let fine_gap = max_by(fine_h.pi.values().iter().zip(fine_e.pi.values()), |(a, b)| {
        (**a - **b).abs()
    });
    outcome(
        gap <= tol,
        format!(
            "max |pi_exp - pi_hyp| = {gap:.3e} ({fine_gap:.3e} on the 2x refined grid), \
             truncation estimate {trunc:.2e}, tolerance {tol:.2e}"
        ),
    )
}

fn criterion_9(runs: &Runs) -> Result<Outcome> {
    let a = pi_surface(&runs.sub.strategy, &runs.pre.strategy)?;
    let mut cfg_b = runs.cev.clone();
    cfg_b.sim.seed = runs.cev.sim.seed.wrapping_add(1);
    let sol_b = solve_rate_field(&cfg_b, &runs.cev_model)?;
    let sub_b = solve_agent(&cfg_b, &runs.cev_model, ValueKind::Subgame, Some(&sol_b.field))?;
    let b = pi_surface(&sub_b.strategy, &runs.pre.strategy)?;
    let eps = max_by(a.iter().zip(&b), |(x, y)| (x.diff - y.diff).abs());
    let lo = a.iter().map(|r| r.diff).fold(f64::INFINITY, f64::min);
    let hi = max_by(a.iter(), |r| r.diff);
    outcome(
        lo < -eps && hi > eps,
        format!("diff in [{lo:.3e}, {hi:.3e}], noise bound (seed-to-seed) {eps:.2e}"),
    )
}

fn criterion_10(runs: &Runs) -> Result<Outcome> {
    let cfg = &runs.cev;
    let horizon = cfg.horizon;
    let run = consumption_quotient(
        &runs.cev_model.market,
        &runs.sub.strategy,
        &runs.pre.strategy,
        cfg.experiment.s0,
        &cfg.sim,
        0,
    )?;
    let early = run.bands.iter().filter(|b| b.t > 0.0 && b.t <= 0.1 * horizon);
    let late = run.bands.iter().filter(|b| b.t >= 0.9 * horizon && b.t < horizon);
    let (mut up, mut down) = (true, true);
    let (mut n_up, mut n_down) = (0, 0);
    for b in early {
        up &= b.q50 > 1.0;
        n_up += 1;
    }
    for b in late {
        down &= b.q50 < 1.0;
        n_down += 1;
    }
    let crossing = run
        .bands
        .windows(2)
        .find(|w| w[0].q50 > 1.0 && w[1].q50 <= 1.0)
        .map(|w| w[1].t);

    let (expo_sol, expo_model) = runs.expo_cev.as_ref().expect("criterion 1 ran first");
    let expo_cfg = exponential(cfg.clone());
    let e_sub = solve_agent(&expo_cfg, expo_model, ValueKind::Subgame, Some(&expo_sol.field))?;
    let e_pre = solve_agent(&expo_cfg, expo_model, ValueKind::Precommitment, None)?;
    let e_run = consumption_quotient(
        &expo_model.market,
        &e_sub.strategy,
        &e_pre.strategy,
        cfg.experiment.s0,
        &cfg.sim,
        0,
    )?;
    let flat = e_run.bands.iter().all(|b| b.q05 == 1.0 && b.q50 == 1.0 && b.q95 == 1.0);
    let med = |t: f64| {
        run.bands
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .map(|b| b.q50)
    };
    outcome(
        up && down && n_up > 0 && n_down > 0 && flat,
        format!(
            "median {:.4} at t=1, {:.4} at t=9, first crossing at t={:?}; exponential quotient identically 1: {flat}",
            med(1.0).unwrap_or(f64::NAN),
            med(9.0).unwrap_or(f64::NAN),
            crossing
        ),
    )
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .map(|p| {
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        fs::read(&p).unwrap_or_default(),
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

fn criterion_11() -> Result<Outcome> {
    let mut cfg = preset_cev();
    cfg.solver.t_nodes = 11;
    cfg.solver.n_y = 11;
    cfg.sim.n_paths = 5_000;
    cfg.fd.n_t_fd = 101;
    cfg.fd.n_y_fd = 61;
    cfg.experiment.emit_paths = 5;
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg.to_toml_string()).expect("config written");
    let cfg_arg = path.to_str().expect("utf-8 temp path");
    let commands: [&[&str]; 6] = [
        &["solve-q", cfg_arg],
        &["strategies", cfg_arg],
        &["evaluate", cfg_arg, "--kind", "subgame"],
        &["reproduce", cfg_arg, "--figure", "1"],
        &["reproduce", cfg_arg, "--figure", "2"],
        &["reproduce", cfg_arg, "--figure", "3"],
    ];
    let mut results = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("threads{threads}"));
        for args in commands {
            let status = Command::new(env!("CARGO_BIN_EXE_merton"))
                .args(["--threads", threads, "--out"])
                .arg(&out)
                .args(args)
                .output()
                .expect("merton binary runs")
                .status;
            if !matches!(status.code(), Some(0) | Some(3)) {
                return outcome(false, format!("{args:?} exited with {status}"));
            }
        }
        results.push(csv_bytes(&out));
    }
    let identical = results[0] == results[1];
    outcome(
        identical && results[0].len() >= 8,
        format!(
            "{} CSV files from 6 commands, identical at 1 and 8 threads: {identical}",
            results[0].len()
        ),
    )
}

fn criterion_12(runs: &Runs) -> Result<Outcome> {
    let recs = &runs.hyp.report.records;
    let mut ok = runs.hyp.report.status != ConvergenceStatus::Diverged;
    for w in recs.windows(2).skip(1) {
        ok &= w[1].sup_gap <= w[0].sup_gap || w[0].sup_gap <= w[0].noise_floor_est;
    }
    let gaps: Vec<String> = recs.iter().map(|r| format!("{:.2e}", r.sup_gap)).collect();
    outcome(
        ok,
        format!(
            "{:?}, gaps [{}], noise floor {:.1e}",
            runs.hyp.report.status,
            gaps.join(", "),
            recs.last().map_or(f64::NAN, |r| r.noise_floor_est)
        ),
    )
}

fn report(id: u32, name: &str, result: Result<Outcome>, failures: &mut Vec<u32>) {
    let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id);
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let verdict = match (pass, known) {
        (true, None) => "PASS".to_string(),
        (true, Some(_)) => "PASS (listed as known failure)".to_string(),
        (false, Some(_)) => "FAIL (known)".to_string(),
        (false, None) => {
            failures.push(id);
            "FAIL".to_string()
        }
    };
    println!("criterion {id:>2} {verdict:<5} {name}: {detail}");
    if let (false, Some((_, why))) = (pass, known) {
        println!("             reason: {why}");
    }
}

fn main() {
    let start = Instant::now();
    let mut failures = Vec::new();
    println!("acceptance suite");

    report(4, "closed-form ODE oracle", criterion_4(), &mut failures);
    report(7, "Merton constant", criterion_7(), &mut failures);
    report(11, "determinism across thread counts", criterion_11(), &mut failures);

    let cev = preset_cev();
    let cev_model = cev.model().expect("preset model");
    let t0 = Instant::now();
    let shared = solve_rate_field(&cev, &cev_model).and_then(|hyp| {
        let hyp_time = t0.elapsed();
        let sub = solve_agent(&cev, &cev_model, ValueKind::Subgame, Some(&hyp.field))?;
        let pre = solve_agent(&cev, &cev_model, ValueKind::Precommitment, None)?;
        Ok((hyp, hyp_time, sub, pre))
    });
    match shared {
        Ok((hyp, hyp_time, sub, pre)) => {
            let mut runs = Runs {
                cev,
                cev_model,
                hyp,
                hyp_time,
                sub,
                pre,
                expo_cev: None,
            };
            let c1 = criterion_1(&mut runs);
            report(1, "exponential degeneracy", c1, &mut failures);
            report(2, "envelope bound", criterion_2(&runs), &mut failures);
            report(3, "terminal row exactness", criterion_3(&runs), &mut failures);
            report(5, "FD/MC cross-validation", criterion_5(&runs), &mut failures);
            report(6, "fixed-point self-consistency", criterion_6(&runs), &mut failures);
            report(
                8,
                "discount-independence of precommitment pi",
                criterion_8(&runs),
                &mut failures,
            );
            report(9, "sign pattern of pi difference", criterion_9(&runs), &mut failures);
            let c10 = if runs.expo_cev.is_some() {
                criterion_10(&runs)
            } else {
                outcome(false, "exponential rate field unavailable")
            };
            report(10, "consumption quotient shape", c10, &mut failures);
            report(12, "contraction monitoring", criterion_12(&runs), &mut failures);
        }
        Err(e) => {
            for id in [1, 2, 3, 5, 6, 8, 9, 10, 12] {
                report(
                    id,
                    "hyperbolic CEV solve",
                    outcome(false, format!("error: {e}")),
                    &mut failures,
                );
            }
        }
    }

    failures.sort();
    println!(
        "acceptance suite finished in {:.0}s: {}",
        start.elapsed().as_secs_f64(),
        if failures.is_empty() {
            "no unexpected failures".to_string()
        } else {
            format!("unexpected failures {failures:?}")
        }
    );
    if !failures.is_empty() {
        std::process::exit(1);
    }
}
