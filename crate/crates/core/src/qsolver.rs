//! Utility-weighted discount rate `𝕼(t, z)`.
//!
//! `𝕼` is the fixed point of `F[φ] = F₁[φ] / F₀[φ]`, where for a node `(t, y)`
//!
//! ```text
//! α(t, s) = E^tilted[ exp(pγ ∫_t^s (μ₁ − φ)(u, Y_u) du) | Y_t = y ]
//! F₁      = ∫_t^T ∂h/∂t(t, s) α(t, s) ds + ∂h/∂t(t, T) α(t, T)
//! F₀      = ∫_t^T h(t, s)     α(t, s) ds + h(t, T)     α(t, T)
//! ```
//!
//! The expectations are taken under the tilted measure (log-price drift
//! `r + pσθ − σ²/2`), which absorbs the stochastic integral `pγ ∫ θ dW`.
//! The bequest term at `s = T` is a point mass and is kept out of the
//! `s`-quadrature.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Surface};
use crate::model::Model;
use crate::simulate::{
    fill_normals, map_chunks, Estimate, Measure, Moments, Quadrature, RatioMoments, SimSettings, LOG_PRICE_LIMIT,
    PATH_CHUNK,
};
use crate::valuepde::StrategyField;
use crate::wealth::{self, WealthPath};

/// `𝕼` sampled on a time × log-price grid, bilinearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct RateField {
    surface: Surface,
}

impl RateField {
    pub fn new(surface: Surface) -> Result<Self> {
        if let Some(k) = surface.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("rate field value {k} is not finite")));
        }
        Ok(Self { surface })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            surface: Surface::filled(grid, value),
        }
    }

    /// `R(0)` everywhere, which is exact on the terminal row.
    pub fn initial_guess(model: &Model, grid: Grid2D) -> Result<Self> {
        let r0 = model.discount.forward_rate(0.0)?;
        let mut field = Self::constant(grid, r0);
        field.set_terminal_row(model)?;
        Ok(field)
    }

    pub fn grid(&self) -> &Grid2D {
        self.surface.grid()
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    #[inline]
    pub fn value(&self, t: f64, y: f64) -> f64 {
        self.surface.interp(t, y)
    }

    pub fn at(&self, n: usize, i: usize) -> f64 {
        self.surface.at(n, i)
    }

    /// `∂h/∂t(T, T) / h(T, T)` at every node of the last time row.
    fn set_terminal_row(&mut self, model: &Model) -> Result<()> {
        let horizon = self.grid().horizon();
        let terminal = terminal_rate(model, horizon)?;
        let last = self.grid().n_t() - 1;
        let ny = self.grid().n_y();
        self.surface.values_mut()[last * ny..].fill(terminal);
        Ok(())
    }
}

/// `∂h/∂t(T, T) / h(T, T)`.
pub fn terminal_rate(model: &Model, horizon: f64) -> Result<f64> {
    Ok(model.discount.eval_dh_dt(horizon, horizon)? / model.discount.eval_h(horizon, horizon)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Sup-norm stopping tolerance on successive iterates (1/time).
    pub tol: f64,
    pub max_iter: usize,
    /// Reuse the same random numbers in every iteration.
    #[serde(default = "default_true")]
    pub freeze_noise: bool,
    /// Relative standard error above which `α` estimates are reported.
    #[serde(default = "default_se_cap")]
    pub se_cap: f64,
}

fn default_true() -> bool {
    true
}

fn default_se_cap() -> f64 {
    0.05
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 30,
            freeze_noise: true,
            se_cap: default_se_cap(),
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if !(self.se_cap > 0.0) {
            return Err(Error::config("se_cap", "must be positive"));
        }
        Ok(())
    }
}

/// `α(t, s, z)` at each of `s_nodes` from one tilted batch started at `(t, log z)`.
pub fn alpha_estimate(
    model: &Model,
    q: &RateField,
    t: f64,
    z: f64,
    s_nodes: &[f64],
    sim: &SimSettings,
    se_cap: f64,
) -> Result<Vec<Estimate>> {
    sim.validate()?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("price must be positive, got {z}")));
    }
    let horizon = q.grid().horizon();
    if let Some(&s) = s_nodes.iter().find(|&&s| !(s >= t && s <= horizon)) {
        return Err(Error::Domain(format!("s = {s} outside [{t}, {horizon}]")));
    }

    // fine time grid through every requested node
    let mut marks: Vec<f64> = s_nodes.to_vec();
    marks.push(t);
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    let mut times = vec![t];
    for w in marks.windows(2) {
        let steps = ((w[1] - w[0]) * sim.n_steps_per_unit_time).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / steps as f64;
        times.extend((1..steps).map(|k| w[0] + h * k as f64));
        times.push(w[1]);
    }
    let node_step: Vec<usize> = s_nodes
        .iter()
        .map(|s| times.iter().position(|u| u == s).expect("node on grid"))
        .collect();

    let p = model.prefs.p();
    let pg = p * model.prefs.gamma();
    let market = &model.market;
    let n_steps = times.len() - 1;
    let y0 = z.ln();
    let unit = if sim.antithetic { 2 } else { 1 };
    let n_units = sim.n_paths / unit;

    let chunks = map_chunks(n_units, PATH_CHUNK / unit, |range| -> Result<Vec<Moments>> {
        let mut acc = vec![Moments::default(); s_nodes.len()];
        let mut normals = vec![0.0; n_steps];
        let mut alpha_at = vec![0.0; n_steps + 1];
        let mut unit_alpha = vec![0.0; s_nodes.len()];
        for u in range {
            unit_alpha.fill(0.0);
            for path in u * unit..(u + 1) * unit {
                fill_normals(sim.seed, ALPHA_STREAM, path, sim.antithetic, &mut normals);
                let mut y = y0;
                let g = |tt: f64, yy: f64| {
                    let c = market.coeffs_log(tt, yy);
                    pg * (c.r + 0.5 * p * c.theta * c.theta - q.value(tt, yy))
                };
                let mut prev = g(times[0], y);
                let mut integral = 0.0;
                alpha_at[0] = 1.0;
                for k in 0..n_steps {
                    let h = times[k + 1] - times[k];
                    let c = market.coeffs_log(times[k], y);
                    y += Measure::Tilted.log_drift(&c, p) * h + c.sigma * h.sqrt() * normals[k];
                    guard(y, path, k + 1)?;
                    let cur = g(times[k + 1], y);
                    integral += match sim.quadrature {
                        Quadrature::Trapezoid => 0.5 * h * (prev + cur),
                        Quadrature::RiemannLeft => h * prev,
                    };
                    prev = cur;
                    alpha_at[k + 1] = integral.exp();
                }
                for (a, &k) in unit_alpha.iter_mut().zip(&node_step) {
                    *a += alpha_at[k] / unit as f64;
                }
            }
            for (m, &a) in acc.iter_mut().zip(&unit_alpha) {
                m.push(a);
            }
        }
        Ok(acc)
    });

    let mut total = vec![Moments::default(); s_nodes.len()];
    for chunk in chunks {
        for (t, c) in total.iter_mut().zip(chunk?) {
            t.merge(&c);
        }
    }
    let estimates: Vec<Estimate> = total.iter().map(Moments::estimate).collect();
    for (s, e) in s_nodes.iter().zip(&estimates) {
        if e.se > se_cap * e.mean.abs() {
            warn!(
                "alpha({t}, {s}, {z}) relative SE {:.3e} exceeds cap {se_cap}",
                e.se / e.mean
            );
        }
    }
    Ok(estimates)
}

const ALPHA_STREAM: u64 = 0xA1FA;
const F_STREAM: u64 = 1;
const VERIFIER_STREAM: u64 = 0x7E51F1E5;

/// One application of `F` to a rate field.
#[derive(Clone, Debug)]
pub struct FStep {
    pub field: RateField,
    /// Delta-method standard error of each node (zero on the terminal row).
    pub se: Surface,
}

impl FStep {
    pub fn max_se(&self) -> f64 {
        self.se.max()
    }
}

/// Applies `F` to `q` at every node of `q`'s grid.
///
/// Paths for the column `y_i` are shared across start times: the market is
/// time-homogeneous, so the first `(N − n)·m` increments of a path started at
/// `t_0` are a valid path from `t_n`. Each start time integrates its own rate
/// values along the shared path. Every column also reuses the same increments,
/// which keeps the estimate smooth in `y` and exactly flat when the inputs are.
pub fn apply_f(model: &Model, q: &RateField, sim: &SimSettings, seed: u64) -> Result<FStep> {
    sim.validate()?;
    let grid = q.grid();
    let dt = grid
        .uniform_dt()
        .ok_or_else(|| Error::config("t_nodes", "the rate solver needs uniformly spaced time nodes"))?;
    let n_last = grid.n_t() - 1;
    let m = ((dt * sim.n_steps_per_unit_time) - 1e-9).ceil().max(1.0) as usize;
    let t_nodes = grid.t_nodes();
    let weights = Weights::new(model, t_nodes, sim.quadrature)?;
    let kernel = ColumnKernel {
        model,
        q,
        n_last,
        m,
        h: dt / m as f64,
        p: model.prefs.p(),
        pg: model.prefs.p() * model.prefs.gamma(),
        quadrature: sim.quadrature,
        weights: &weights,
    };

    let ny = grid.n_y();
    let unit = if sim.antithetic { 2 } else { 1 };
    let n_units = sim.n_paths / unit;
    let chunk_units = PATH_CHUNK / unit;
    let n_chunks = n_units.div_ceil(chunk_units);

    // one task per (column, chunk), reduced in a fixed order
    let tasks = map_chunks(ny * n_chunks, 1, |r| -> Result<Vec<RatioMoments>> {
        let task = r.start;
        let (i, c) = (task / n_chunks, task % n_chunks);
        let units = c * chunk_units..((c + 1) * chunk_units).min(n_units);
        kernel.run_chunk(grid.y_nodes()[i], units, unit, sim, seed)
    });

    let mut values = vec![0.0; grid.len()];
    let mut se = vec![0.0; grid.len()];
    let mut tasks = tasks.into_iter();
    for i in 0..ny {
        let mut acc = vec![RatioMoments::default(); n_last];
        for _ in 0..n_chunks {
            let part = tasks.next().expect("task per chunk")?;
            for (a, b) in acc.iter_mut().zip(&part) {
                a.merge(b);
            }
        }
        for (n, a) in acc.iter().enumerate() {
            if !(a.den > 0.0) {
                return Err(Error::Numerical(format!(
                    "F denominator {} is not positive at (t, y) = ({}, {})",
                    a.den,
                    t_nodes[n],
                    grid.y_nodes()[i]
                )));
            }
            let e = a.estimate();
            values[grid.index(n, i)] = weights.base + e.mean;
            se[grid.index(n, i)] = e.se;
        }
    }
    let mut field = RateField::new(Surface::new(grid.clone(), values)?)?;
    field.set_terminal_row(model)?;
    Ok(FStep {
        field,
        se: Surface::new(grid.clone(), se)?,
    })
}

/// Quadrature weights over the `s` nodes for each start time, premultiplied
/// by `h` and by `∂h/∂t − R₀h`, plus the bequest weights at `s = T`.
///
/// The ratio is accumulated relative to `R₀ = ∂h/∂t(T, T)`, so that a
/// constant forward rate yields a numerator of exactly zero.
struct Weights {
    n_t: usize,
    base: f64,
    num: Vec<f64>,
    den: Vec<f64>,
    lump_num: Vec<f64>,
    lump_den: Vec<f64>,
}

impl Weights {
    fn new(model: &Model, t_nodes: &[f64], quadrature: Quadrature) -> Result<Self> {
        let n_t = t_nodes.len();
        let last = n_t - 1;
        let horizon = t_nodes[last];
        let base = terminal_rate(model, horizon)?;
        let mut num = vec![0.0; n_t * n_t];
        let mut den = vec![0.0; n_t * n_t];
        let mut lump_num = vec![0.0; n_t];
        let mut lump_den = vec![0.0; n_t];
        for n in 0..last {
            let t = t_nodes[n];
            for j in n..=last {
                let left = if j > n { t_nodes[j] - t_nodes[j - 1] } else { 0.0 };
                let right = if j < last { t_nodes[j + 1] - t_nodes[j] } else { 0.0 };
                let w = match quadrature {
                    Quadrature::Trapezoid => 0.5 * (left + right),
                    Quadrature::RiemannLeft => right,
                };
                let h = model.discount.eval_h(t, t_nodes[j])?;
                num[n * n_t + j] = w * (model.discount.eval_dh_dt(t, t_nodes[j])? - base * h);
                den[n * n_t + j] = w * h;
            }
            let h = model.discount.eval_h(t, horizon)?;
            lump_num[n] = model.discount.eval_dh_dt(t, horizon)? - base * h;
            lump_den[n] = h;
        }
        Ok(Self {
            n_t,
            base,
            num,
            den,
            lump_num,
            lump_den,
        })
    }
}

struct ColumnKernel<'a> {
    model: &'a Model,
    q: &'a RateField,
    n_last: usize,
    m: usize,
    h: f64,
    p: f64,
    pg: f64,
    quadrature: Quadrature,
    weights: &'a Weights,
}

struct Scratch {
    normals: Vec<f64>,
    g_mu: Vec<f64>,
    iy: Vec<usize>,
    wy: Vec<f64>,
    alpha: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl ColumnKernel<'_> {
    fn run_chunk(
        &self,
        y0: f64,
        units: std::ops::Range<usize>,
        unit: usize,
        sim: &SimSettings,
        seed: u64,
    ) -> Result<Vec<RatioMoments>> {
        let k_max = self.n_last * self.m;
        let mut s = Scratch {
            normals: vec![0.0; k_max],
            g_mu: vec![0.0; k_max + 1],
            iy: vec![0; k_max + 1],
            wy: vec![0.0; k_max + 1],
            alpha: vec![0.0; self.n_last + 1],
            num: vec![0.0; self.n_last],
            den: vec![0.0; self.n_last],
        };
        let mut unit_num = vec![0.0; self.n_last];
        let mut unit_den = vec![0.0; self.n_last];
        let mut acc = vec![RatioMoments::default(); self.n_last];
        for u in units {
            unit_num.fill(0.0);
            unit_den.fill(0.0);
            for path in u * unit..(u + 1) * unit {
                fill_normals(seed, F_STREAM, path, sim.antithetic, &mut s.normals);
                self.run_path(y0, path, &mut s)?;
                for n in 0..self.n_last {
                    unit_num[n] += s.num[n] / unit as f64;
                    unit_den[n] += s.den[n] / unit as f64;
                }
            }
            for n in 0..self.n_last {
                acc[n].push(unit_num[n], unit_den[n]);
            }
        }
        Ok(acc)
    }

    fn run_path(&self, y0: f64, path: usize, s: &mut Scratch) -> Result<()> {
        let market = &self.model.market;
        let grid = self.q.grid();
        let t0 = grid.t_nodes()[0];
        let k_max = self.n_last * self.m;
        let sqrt_h = self.h.sqrt();

        let mut y = y0;
        for k in 0..=k_max {
            let t = t0 + self.h * k as f64;
            let c = market.coeffs_log(t, y);
            s.g_mu[k] = self.pg * (c.r + 0.5 * self.p * c.theta * c.theta);
            let (i, w) = grid.locate_y(y);
            s.iy[k] = i;
            s.wy[k] = w;
            if k < k_max {
                y += Measure::Tilted.log_drift(&c, self.p) * self.h + c.sigma * sqrt_h * s.normals[k];
                guard(y, path, k + 1)?;
            }
        }

        let surface = self.q.surface();
        let w = self.weights;
        let inv_m = 1.0 / self.m as f64;
        for n in 0..self.n_last {
            let steps = (self.n_last - n) * self.m;
            let mut prev = s.g_mu[0] - self.pg * surface.blend(n, 0.0, s.iy[0], s.wy[0]);
            let mut integral = 0.0;
            s.alpha[n] = 1.0;
            for k in 1..=steps {
                let (a, b) = (k / self.m, k % self.m);
                let qv = surface.blend(n + a, b as f64 * inv_m, s.iy[k], s.wy[k]);
                let cur = s.g_mu[k] - self.pg * qv;
                integral += match self.quadrature {
                    Quadrature::Trapezoid => 0.5 * self.h * (prev + cur),
                    Quadrature::RiemannLeft => self.h * prev,
                };
                prev = cur;
                if b == 0 {
                    s.alpha[n + a] = integral.exp();
                }
            }
            let row = n * w.n_t;
            let mut num = w.lump_num[n] * s.alpha[self.n_last];
            let mut den = w.lump_den[n] * s.alpha[self.n_last];
            for j in n..=self.n_last {
                num += w.num[row + j] * s.alpha[j];
                den += w.den[row + j] * s.alpha[j];
            }
            s.num[n] = num;
            s.den[n] = den;
        }
        Ok(())
    }
}

#[inline]
fn guard(y: f64, path: usize, step: usize) -> Result<()> {
    if y.abs() <= LOG_PRICE_LIMIT {
        Ok(())
    } else {
        Err(Error::PathOverflow {
            value: y,
            limit: LOG_PRICE_LIMIT,
            path,
            step,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    /// Sup gap fell below the tolerance.
    Converged,
    /// Gap stopped shrinking at the Monte Carlo noise level.
    NoiseFloor,
    /// Gap stopped shrinking above the noise level, or grew.
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub sup_gap: f64,
    pub noise_floor_est: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: ConvergenceStatus,
    pub records: Vec<IterationRecord>,
    /// Largest nodal standard error of the returned field.
    pub max_se: f64,
}

impl ConvergenceReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sup_gap).collect()
    }
}

/// Converged field together with its nodal standard errors.
#[derive(Clone, Debug)]
pub struct QSolution {
    pub field: RateField,
    pub se: Surface,
    pub report: ConvergenceReport,
}

/// Fixed-point iteration from the default initial guess `R(0)`.
pub fn solve_q(model: &Model, grid: &Grid2D, sim: &SimSettings, settings: &SolverSettings) -> Result<QSolution> {
    let initial = RateField::initial_guess(model, grid.clone())?;
    solve_q_from(model, initial, sim, settings)
}

/// Fixed-point iteration `q ← F[q]` from a given initial field.
pub fn solve_q_from(
    model: &Model,
    initial: RateField,
    sim: &SimSettings,
    settings: &SolverSettings,
) -> Result<QSolution> {
    settings.validate()?;
    sim.validate()?;
    let mut q = initial;
    let mut records = Vec::new();
    let mut last_se = Surface::filled(q.grid().clone(), 0.0);
    let mut status = ConvergenceStatus::Diverged;

    for iter in 1..=settings.max_iter {
        let seed = if settings.freeze_noise {
            sim.seed
        } else {
            sim.seed.wrapping_add(iter as u64)
        };
        let step = apply_f(model, &q, sim, seed)?;
        let gap = step.field.surface().max_abs_diff(q.surface());
        let floor = 3.0 * step.max_se();
        records.push(IterationRecord {
            iter,
            sup_gap: gap,
            noise_floor_est: floor,
        });
        log::info!("fixed-point iteration {iter}: sup gap {gap:.3e}, noise floor {floor:.3e}");
        q = step.field;
        last_se = step.se;

        if gap <= settings.tol {
            status = ConvergenceStatus::Converged;
            break;
        }
        if !settings.freeze_noise && gap <= floor {
            status = ConvergenceStatus::NoiseFloor;
            break;
        }
        if iter >= 3 {
            let prev = records[iter - 2].sup_gap;
            if gap >= prev {
                status = if gap <= floor {
                    ConvergenceStatus::NoiseFloor
                } else {
                    ConvergenceStatus::Diverged
                };
                break;
            }
        }
        if iter == settings.max_iter {
            status = if gap <= floor {
                ConvergenceStatus::NoiseFloor
            } else {
                ConvergenceStatus::Diverged
            };
        }
    }
    match status {
        ConvergenceStatus::NoiseFloor => warn!(
            "fixed-point iteration stalled at the Monte Carlo noise floor after {} iterations",
            records.len()
        ),
        ConvergenceStatus::Diverged => warn!(
            "fixed-point iteration did not converge after {} iterations",
            records.len()
        ),
        ConvergenceStatus::Converged => {}
    }
    let report = ConvergenceReport {
        status,
        records,
        max_se: last_se.max(),
    };
    Ok(QSolution {
        field: q,
        se: last_se,
        report,
    })
}

/// `Q^{π,c}(t)`: the ratio of `∂h/∂t`-weighted to `h`-weighted expected
/// utility of consumption and bequest when wealth follows `strategy` from
/// `(t, z, x0)`. Evaluated on the subgame strategy it reproduces `𝕼(t, z)`.
pub fn utility_weighted_rate(
    strategy: &StrategyField,
    model: &Model,
    t: f64,
    z: f64,
    x0: f64,
    sim: &SimSettings,
) -> Result<Estimate> {
    sim.validate()?;
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("initial wealth must be positive, got {x0}")));
    }
    let horizon = strategy.grid().horizon();
    if !(t < horizon) {
        return Ok(Estimate {
            mean: terminal_rate(model, horizon)?,
            se: 0.0,
        });
    }
    let times = wealth::time_grid(t, horizon, sim.n_steps_per_unit_time);
    let weights = wealth::quadrature_weights(&times, sim.quadrature);
    let mut dh = Vec::with_capacity(times.len());
    let mut hh = Vec::with_capacity(times.len());
    let base = terminal_rate(model, horizon)?;
    for &s in &times {
        let h = model.discount.eval_h(t, s)?;
        dh.push(model.discount.eval_dh_dt(t, s)? - base * h);
        hh.push(h);
    }
    let gamma = model.prefs.gamma();
    let log_x0 = x0.ln();
    let last = times.len() - 1;

    let unit = if sim.antithetic { 2 } else { 1 };
    let n_units = sim.n_paths / unit;
    let chunks = map_chunks(n_units, PATH_CHUNK / unit, |range| -> Result<RatioMoments> {
        let mut acc = RatioMoments::default();
        let mut path = WealthPath::new(times.len(), 1);
        for u in range {
            let (mut num, mut den) = (0.0, 0.0);
            for k in u * unit..(u + 1) * unit {
                path.simulate(
                    &model.market,
                    &[strategy],
                    &times,
                    z.ln(),
                    sim.seed,
                    VERIFIER_STREAM,
                    k,
                    sim.antithetic,
                )?;
                let (lc, lx) = (path.log_consumption(0), path.log_wealth(0));
                let (mut pn, mut pd) = (0.0, 0.0);
                for j in 0..=last {
                    let util = ((lc[j] + lx[j] + log_x0) * gamma).exp() / gamma;
                    pn += weights[j] * dh[j] * util;
                    pd += weights[j] * hh[j] * util;
                }
                let bequest = ((lx[last] + log_x0) * gamma).exp() / gamma;
                pn += dh[last] * bequest;
                pd += hh[last] * bequest;
                num += pn / unit as f64;
                den += pd / unit as f64;
            }
            acc.push(num, den);
        }
        Ok(acc)
    });
    let mut total = RatioMoments::default();
    for c in chunks {
        total.merge(&c?);
    }
    let e = total.estimate();
    Ok(Estimate {
        mean: base + e.mean,
        se: e.se,
    })
}
