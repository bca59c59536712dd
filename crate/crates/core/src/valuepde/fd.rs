//! Crank–Nicolson march for
//!
//! ```text
//! v_t + σ²/2 v_yy + (r + pσθ − σ²/2) v_y + p(γr + γpθ²/2 − ψ) v + 1 = 0,   v(T, ·) = 1
//! ```
//!
//! in `y = log S`, where `ψ` is the discount rate seen by the agent.

use serde::{Deserialize, Serialize};

use super::{tridiag, RateSource, ValueField};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, Surface};
use crate::market::{MarketSpec, Preferences};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdParams {
    /// Leading time steps replaced by two implicit-Euler half steps each.
    pub rannacher_steps: usize,
}

impl Default for FdParams {
    fn default() -> Self {
        Self { rannacher_steps: 1 }
    }
}

/// Spatial operator `L` at one time, as three diagonals.
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for j in 0..n {
            let mut acc = self.diag[j] * v[j];
            if j > 0 {
                acc += self.lower[j] * v[j - 1];
            }
            if j + 1 < n {
                acc += self.upper[j] * v[j + 1];
            }
            out[j] = acc;
        }
    }
}

struct Assembler<'a> {
    market: &'a MarketSpec,
    prefs: &'a Preferences,
    rate: &'a RateSource<'a>,
    y: &'a [f64],
    dy: f64,
}

impl Assembler<'_> {
    fn operator(&self, t: f64) -> Result<Operator> {
        let n = self.y.len();
        let p = self.prefs.p();
        let gamma = self.prefs.gamma();
        let dy = self.dy;
        let mut op = Operator {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for (j, &y) in self.y.iter().enumerate() {
            let c = self.market.coeffs_log(t, y);
            let a = 0.5 * c.sigma * c.sigma;
            let b = c.r + p * c.sigma * c.theta - a;
            let k = p * (gamma * c.r + 0.5 * gamma * p * c.theta * c.theta - self.rate.rate(t, y)?);
            if j == 0 {
                // v_yy = 0, forward difference for v_y
                op.diag[j] = -b / dy + k;
                op.upper[j] = b / dy;
            } else if j == n - 1 {
                op.lower[j] = -b / dy;
                op.diag[j] = b / dy + k;
            } else {
                op.lower[j] = a / (dy * dy) - b / (2.0 * dy);
                op.diag[j] = -2.0 * a / (dy * dy) + k;
                op.upper[j] = a / (dy * dy) + b / (2.0 * dy);
            }
        }
        Ok(op)
    }

    /// One θ-scheme step from `t_old` back to `t_new < t_old`.
    fn step(&self, v: &mut [f64], t_old: f64, t_new: f64, theta: f64, scratch: &mut [f64]) -> Result<()> {
        let tau = t_old - t_new;
        let old = self.operator(t_old)?;
        let new = self.operator(t_new)?;
        old.apply(v, scratch);
        let n = v.len();
        let mut rhs: Vec<f64> = (0..n).map(|j| v[j] + (1.0 - theta) * tau * scratch[j] + tau).collect();
        let lower: Vec<f64> = new.lower.iter().map(|l| -theta * tau * l).collect();
        let upper: Vec<f64> = new.upper.iter().map(|u| -theta * tau * u).collect();
        let mut diag: Vec<f64> = new.diag.iter().map(|d| 1.0 - theta * tau * d).collect();
        tridiag::solve_in_place(&lower, &mut diag, &upper, &mut rhs)?;
        v.copy_from_slice(&rhs);
        Ok(())
    }
}

/// Solves for `v` on `grid` (uniform in `y`), marching back from the last time node.
pub fn solve_v_fd(
    market: &MarketSpec,
    prefs: &Preferences,
    rate: &RateSource<'_>,
    grid: &Grid2D,
    params: &FdParams,
) -> Result<ValueField> {
    let dy = grid
        .uniform_dy()
        .ok_or_else(|| Error::config("n_y_fd", "the PDE grid must be uniform in log-price"))?;
    let ny = grid.n_y();
    if ny < 3 {
        return Err(Error::config("n_y_fd", "need at least three spatial nodes"));
    }
    let t = grid.t_nodes();
    let nt = t.len();
    let asm = Assembler {
        market,
        prefs,
        rate,
        y: grid.y_nodes(),
        dy,
    };

    let mut values = vec![0.0; grid.len()];
    let mut v = vec![1.0; ny];
    values[(nt - 1) * ny..].copy_from_slice(&v);
    let mut scratch = vec![0.0; ny];
    for (step, k) in (0..nt - 1).rev().enumerate() {
        if step < params.rannacher_steps {
            let mid = 0.5 * (t[k] + t[k + 1]);
            asm.step(&mut v, t[k + 1], mid, 1.0, &mut scratch)?;
            asm.step(&mut v, mid, t[k], 1.0, &mut scratch)?;
        } else {
            asm.step(&mut v, t[k + 1], t[k], 0.5, &mut scratch)?;
        }
        if let Some(j) = v.iter().position(|x| !(*x > 0.0)) {
            return Err(Error::Numerical(format!(
                "v = {} at (t, y) = ({}, {}); refine the PDE grid",
                v[j],
                t[k],
                grid.y_nodes()[j]
            )));
        }
        values[k * ny..(k + 1) * ny].copy_from_slice(&v);
    }

    let mut deriv = vec![0.0; grid.len()];
    for k in 0..nt {
        log_derivative(&values[k * ny..(k + 1) * ny], dy, &mut deriv[k * ny..(k + 1) * ny]);
    }
    Ok(ValueField {
        grid: grid.clone(),
        v: Surface::new(grid.clone(), values)?,
        dv_dy: Surface::new(grid.clone(), deriv)?,
        kind: rate.kind(),
    })
}

/// `∂v/∂y`: fourth-order centered inside, second-order centered next to the
/// edges, second-order one-sided at the edges.
pub(crate) fn log_derivative(v: &[f64], dy: f64, out: &mut [f64]) {
    let n = v.len();
    if n < 3 {
        let d = (v[n - 1] - v[0]) / (dy * (n - 1) as f64);
        out.fill(d);
        return;
    }
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dy);
    out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dy);
    for j in 1..n - 1 {
        out[j] = if j >= 2 && j + 2 < n {
            (-v[j + 2] + 8.0 * v[j + 1] - 8.0 * v[j - 1] + v[j - 2]) / (12.0 * dy)
        } else {
            (v[j + 1] - v[j - 1]) / (2.0 * dy)
        };
    }
}
