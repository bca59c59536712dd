//! Value functions `v` (subgame perfect) and `v̂` (precommitment), their
//! strategies, and Monte Carlo evaluation of the objective.
//!
//! With `V(t, z, x) = v(t, z)^(1−γ) x^γ / γ`, both agents solve the same linear
//! PDE and differ only in the discount rate: `𝕼(t, z)` for the subgame-perfect
//! agent, `ρ(0, t)` for the agent committed at time 0.

mod fd;
mod mc;
mod tridiag;

pub use fd::{solve_v_fd, FdParams};
pub use mc::solve_v_mc;
pub use tridiag::solve_in_place as solve_tridiagonal;

use serde::{Deserialize, Serialize};

use crate::discounting::DiscountSpec;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, Surface};
use crate::market::{MarketSpec, Preferences};
use crate::model::Model;
use crate::qsolver::RateField;
use crate::simulate::{map_chunks, Estimate, Moments, SimSettings, PATH_CHUNK};
use crate::wealth::{self, WealthPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Subgame,
    Precommitment,
}

impl ValueKind {
    /// File-name tag used by the CSV outputs.
    pub fn tag(self) -> &'static str {
        match self {
            ValueKind::Subgame => "subgame",
            ValueKind::Precommitment => "precommit",
        }
    }
}

/// Discount rate entering the value-function potential.
#[derive(Clone, Copy, Debug)]
pub enum RateSource<'a> {
    /// Utility-weighted rate `𝕼(t, y)`.
    Field(&'a RateField),
    /// `ρ(0, t)` of an agent committed at time 0.
    Precommitment(&'a DiscountSpec),
    /// A constant rate.
    Constant(f64),
}

impl RateSource<'_> {
    #[inline]
    pub fn rate(&self, t: f64, y: f64) -> Result<f64> {
        match self {
            RateSource::Field(q) => Ok(q.value(t, y)),
            RateSource::Precommitment(d) => d.precommitment_rate(t),
            RateSource::Constant(r) => Ok(*r),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            RateSource::Precommitment(_) => ValueKind::Precommitment,
            _ => ValueKind::Subgame,
        }
    }
}

/// `v` and `∂v/∂y = z ∂v/∂z` on a grid.
#[derive(Clone, Debug)]
pub struct ValueField {
    pub grid: Grid2D,
    pub v: Surface,
    pub dv_dy: Surface,
    pub kind: ValueKind,
}

/// Investment fraction `π` and consumption rate `c` on a grid.
#[derive(Clone, Debug)]
pub struct StrategyField {
    pub grid: Grid2D,
    pub pi: Surface,
    pub c: Surface,
    pub kind: ValueKind,
}

impl StrategyField {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }
}

/// `c = 1 / v` and `π = θ / ((1 − γ) σ) + (∂v/∂y) / v`.
pub fn extract_strategies(vf: &ValueField, market: &MarketSpec, prefs: &Preferences) -> StrategyField {
    let grid = &vf.grid;
    let one_minus_gamma = 1.0 - prefs.gamma();
    let mut pi = Vec::with_capacity(grid.len());
    let mut c = Vec::with_capacity(grid.len());
    for (n, &t) in grid.t_nodes().iter().enumerate() {
        for (i, &y) in grid.y_nodes().iter().enumerate() {
            let co = market.coeffs_log(t, y);
            let v = vf.v.at(n, i);
            pi.push(co.theta / (one_minus_gamma * co.sigma) + vf.dv_dy.at(n, i) / v);
            c.push(1.0 / v);
        }
    }
    StrategyField {
        grid: grid.clone(),
        pi: Surface::new(grid.clone(), pi).expect("grid-sized"),
        c: Surface::new(grid.clone(), c).expect("grid-sized"),
        kind: vf.kind,
    }
}

const OBJECTIVE_STREAM: u64 = 0x0B7EC7;

/// Monte Carlo estimate of
/// `J(t, x) = E[∫_t^T h(t, s) U(c X) ds + h(t, T) U(X_T)]` under `strategy`.
pub fn evaluate_objective(
    strategy: &StrategyField,
    model: &Model,
    t: f64,
    z: f64,
    x: f64,
    sim: &SimSettings,
) -> Result<Estimate> {
    sim.validate()?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("price must be positive, got {z}")));
    }
    let gamma = model.prefs.gamma();
    let scale = x.powf(gamma);
    let horizon = strategy.grid.horizon();
    if !(t < horizon) {
        return Ok(Estimate {
            mean: scale / gamma,
            se: 0.0,
        });
    }
    let times = wealth::time_grid(t, horizon, sim.n_steps_per_unit_time);
    let weights = wealth::quadrature_weights(&times, sim.quadrature);
    let mut disc = Vec::with_capacity(times.len());
    for &s in &times {
        disc.push(model.discount.eval_h(t, s)?);
    }
    let last = times.len() - 1;
    let unit = if sim.antithetic { 2 } else { 1 };
    let n_units = sim.n_paths / unit;

    let chunks = map_chunks(n_units, PATH_CHUNK / unit, |range| -> Result<(Moments, usize)> {
        let mut acc = Moments::default();
        let mut path = WealthPath::new(times.len(), 1);
        for u in range {
            let mut value = 0.0;
            for k in u * unit..(u + 1) * unit {
                path.simulate(
                    &model.market,
                    &[strategy],
                    &times,
                    z.ln(),
                    sim.seed,
                    OBJECTIVE_STREAM,
                    k,
                    sim.antithetic,
                )?;
                let (lc, lx) = (path.log_consumption(0), path.log_wealth(0));
                let mut j_path = disc[last] * (gamma * lx[last]).exp() / gamma;
                for s in 0..=last {
                    j_path += weights[s] * disc[s] * (gamma * (lc[s] + lx[s])).exp() / gamma;
                }
                value += j_path / unit as f64;
            }
            acc.push(value);
        }
        Ok((acc, path.clamped))
    });
    let mut total = Moments::default();
    let mut clamped = 0;
    for c in chunks {
        let (m, k) = c?;
        total.merge(&m);
        clamped += k;
    }
    if clamped > 0 {
        log::warn!(
            "consumption raised to {} at {clamped} evaluations",
            wealth::MIN_CONSUMPTION
        );
    }
    let e = total.estimate();
    Ok(Estimate {
        mean: scale * e.mean,
        se: scale * e.se,
    })
}

/// `v(t, z)^(1−γ) x^γ / γ`.
pub fn value_from_v(v: f64, x: f64, prefs: &Preferences) -> f64 {
    let g = prefs.gamma();
    v.powf(1.0 - g) * x.powf(g) / g
}

/// Potential coefficient `k = p(γr + γpθ²/2 − ρ)` of the constant-coefficient problem.
pub fn constant_k(r: f64, theta: f64, rho: f64, prefs: &Preferences) -> f64 {
    let (p, g) = (prefs.p(), prefs.gamma());
    p * (g * r + 0.5 * g * p * theta * theta - rho)
}

/// Solution of `v' = −k v − 1`, `v(T) = 1` at time-to-go `tau`.
pub fn constant_v(k: f64, tau: f64) -> f64 {
    if k.abs() < 1e-12 {
        // series in k keeps the limit smooth
        1.0 + tau + k * (tau + 0.5 * tau * tau)
    } else {
        (1.0 + 1.0 / k) * (k * tau).exp() - 1.0 / k
    }
}

/// Outcome of [`self_test`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    /// Largest relative error of the PDE solution against [`constant_v`].
    pub max_rel_error: f64,
    /// Largest `|π − θ/((1−γ)σ)|` over the grid.
    pub max_pi_error: f64,
    pub n_t: usize,
    pub n_y: usize,
}

/// Runs the PDE solver on a constant market with a constant rate and compares
/// it against the closed form.
pub fn self_test(
    r: f64,
    sigma: f64,
    theta: f64,
    rho: f64,
    prefs: &Preferences,
    horizon: f64,
    dt: f64,
) -> Result<SelfTestReport> {
    let market = MarketSpec::constant(r, sigma, theta)?;
    let n_t = (horizon / dt).round() as usize + 1;
    let n_y = 11;
    let grid = Grid2D::uniform(
        horizon,
        n_t,
        10f64.ln() - 1.0,
        10f64.ln() + 1.0,
        n_y,
        crate::grid::GridSpace::Log,
    )?;
    let vf = solve_v_fd(&market, prefs, &RateSource::Constant(rho), &grid, &FdParams::default())?;
    let k = constant_k(r, theta, rho, prefs);
    let mut max_rel_error: f64 = 0.0;
    for (n, &t) in grid.t_nodes().iter().enumerate() {
        let exact = constant_v(k, horizon - t);
        for i in 0..n_y {
            max_rel_error = max_rel_error.max(((vf.v.at(n, i) - exact) / exact).abs());
        }
    }
    let st = extract_strategies(&vf, &market, prefs);
    let merton = theta / ((1.0 - prefs.gamma()) * sigma);
    let max_pi_error = st.pi.values().iter().fold(0.0f64, |m, p| m.max((p - merton).abs()));
    Ok(SelfTestReport {
        max_rel_error,
        max_pi_error,
        n_t,
        n_y,
    })
}

#[cfg(test)]
mod tests;
