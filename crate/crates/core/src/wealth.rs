//! Joint simulation of the price and of wealth under tabulated strategies.
//!
//! Wealth follows `dX = [r + πσθ − c] X dt + πσ X dW` under the physical
//! measure and is stepped in logs, so it stays positive. Paths start from unit
//! wealth; callers rescale by `x0`, which keeps results exactly homogeneous.

use crate::error::{Error, Result};
use crate::market::MarketSpec;
use crate::simulate::{fill_normals, Measure, Quadrature, LOG_PRICE_LIMIT};
use crate::valuepde::StrategyField;

/// Consumption rates below this are raised to it before use.
pub const MIN_CONSUMPTION: f64 = 1e-8;

/// Uniform times on `[t, horizon]` with at least one step.
pub fn time_grid(t: f64, horizon: f64, steps_per_unit: f64) -> Vec<f64> {
    let n = ((horizon - t) * steps_per_unit).ceil().max(1.0) as usize;
    let h = (horizon - t) / n as f64;
    (0..=n)
        .map(|k| if k == n { horizon } else { t + h * k as f64 })
        .collect()
}

/// Weights of the composite rule on arbitrary nodes.
pub fn quadrature_weights(times: &[f64], quadrature: Quadrature) -> Vec<f64> {
    let last = times.len() - 1;
    (0..=last)
        .map(|j| {
            let left = if j > 0 { times[j] - times[j - 1] } else { 0.0 };
            let right = if j < last { times[j + 1] - times[j] } else { 0.0 };
            match quadrature {
                Quadrature::Trapezoid => 0.5 * (left + right),
                Quadrature::RiemannLeft => right,
            }
        })
        .collect()
}

/// Reusable buffers for one simulated path driven by several strategies.
pub struct WealthPath {
    n_times: usize,
    normals: Vec<f64>,
    log_y: Vec<f64>,
    log_c: Vec<f64>,
    log_x: Vec<f64>,
    /// Number of consumption evaluations raised to [`MIN_CONSUMPTION`].
    pub clamped: usize,
}

impl WealthPath {
    pub fn new(n_times: usize, n_strategies: usize) -> Self {
        Self {
            n_times,
            normals: vec![0.0; n_times - 1],
            log_y: vec![0.0; n_times],
            log_c: vec![0.0; n_times * n_strategies],
            log_x: vec![0.0; n_times * n_strategies],
            clamped: 0,
        }
    }

    pub fn log_price(&self) -> &[f64] {
        &self.log_y
    }

    pub fn log_consumption(&self, strategy: usize) -> &[f64] {
        &self.log_c[strategy * self.n_times..(strategy + 1) * self.n_times]
    }

    /// Log of wealth relative to the initial wealth.
    pub fn log_wealth(&self, strategy: usize) -> &[f64] {
        &self.log_x[strategy * self.n_times..(strategy + 1) * self.n_times]
    }

    /// Simulates one path; every strategy sees the same Brownian increments.
    #[allow(clippy::too_many_arguments)]
    pub fn simulate(
        &mut self,
        market: &MarketSpec,
        strategies: &[&StrategyField],
        times: &[f64],
        y0: f64,
        seed: u64,
        stream: u64,
        path: usize,
        antithetic: bool,
    ) -> Result<()> {
        debug_assert_eq!(times.len(), self.n_times);
        let nt = self.n_times;
        fill_normals(seed, stream, path, antithetic, &mut self.normals);
        self.log_y[0] = y0;
        for s in 0..strategies.len() {
            self.log_x[s * nt] = 0.0;
        }
        for k in 0..nt {
            let t = times[k];
            let y = self.log_y[k];
            let c = market.coeffs_log(t, y);
            let (h, dw) = if k + 1 < nt {
                let h = times[k + 1] - t;
                (h, h.sqrt() * self.normals[k])
            } else {
                (0.0, 0.0)
            };
            let t_mid = t + 0.5 * h;
            for (s, strategy) in strategies.iter().enumerate() {
                self.log_c[s * nt + k] = self.floor_consumption(strategy.c.interp(t, y)).ln();
                if k + 1 < nt {
                    // policy at the step midpoint: c(·) rises sharply near the horizon
                    let cons = self.floor_consumption(strategy.c.interp(t_mid, y));
                    let pi = strategy.pi.interp(t_mid, y);
                    let vol = pi * c.sigma;
                    let drift = c.r + vol * c.theta - cons - 0.5 * vol * vol;
                    let next = self.log_x[s * nt + k] + drift * h + vol * dw;
                    if !(next.abs() <= LOG_PRICE_LIMIT) {
                        return Err(Error::Wealth { path, t: times[k + 1] });
                    }
                    self.log_x[s * nt + k + 1] = next;
                }
            }
            if k + 1 < nt {
                let next = y + Measure::Physical.log_drift(&c, 0.0) * h + c.sigma * dw;
                if !(next.abs() <= LOG_PRICE_LIMIT) {
                    return Err(Error::PathOverflow {
                        value: next,
                        limit: LOG_PRICE_LIMIT,
                        path,
                        step: k + 1,
                    });
                }
                self.log_y[k + 1] = next;
            }
        }
        Ok(())
    }

    fn floor_consumption(&mut self, c: f64) -> f64 {
        if c >= MIN_CONSUMPTION {
            c
        } else {
            self.clamped += 1;
            MIN_CONSUMPTION
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_linear_functions() {
        let times = time_grid(1.0, 4.0, 3.0);
        assert_eq!(times.len(), 10);
        let w = quadrature_weights(&times, Quadrature::Trapezoid);
        let integral: f64 = times.iter().zip(&w).map(|(t, w)| t * w).sum();
        assert!((integral - 7.5).abs() < 1e-13);
        let w = quadrature_weights(&times, Quadrature::RiemannLeft);
        assert!((w.iter().sum::<f64>() - 3.0).abs() < 1e-13);
        assert_eq!(*w.last().unwrap(), 0.0);
    }
}
