//! Feynman–Kac representation of `v`, used as an independent check on the PDE march.
//!
//! ```text
//! v(t, y) = E^tilted[ ∫_t^T e^{I(s)} ds + e^{I(T)} ],   I(s) = ∫_t^s p(γr + γpθ²/2 − ψ)(u, Y_u) du
//! ```

use super::RateSource;
use crate::error::{Error, Result};
use crate::market::{MarketSpec, Preferences};
use crate::simulate::{
    fill_normals, map_chunks, Estimate, Measure, Moments, Quadrature, SimSettings, LOG_PRICE_LIMIT, PATH_CHUNK,
};
use crate::wealth;

const FEYNMAN_KAC_STREAM: u64 = 0xFEC0_0000;

/// Estimates `v` at each `(t, y)` probe with its standard error.
pub fn solve_v_mc(
    market: &MarketSpec,
    prefs: &Preferences,
    rate: &RateSource<'_>,
    horizon: f64,
    probes: &[(f64, f64)],
    sim: &SimSettings,
) -> Result<Vec<Estimate>> {
    sim.validate()?;
    let p = prefs.p();
    let gamma = prefs.gamma();
    let unit = if sim.antithetic { 2 } else { 1 };
    let n_units = sim.n_paths / unit;
    let chunk_units = PATH_CHUNK / unit;
    let n_chunks = n_units.div_ceil(chunk_units);

    let grids: Vec<Vec<f64>> = probes
        .iter()
        .map(|&(t, _)| {
            if t > horizon {
                Err(Error::Domain(format!("probe time {t} beyond horizon {horizon}")))
            } else {
                Ok(wealth::time_grid(t, horizon, sim.n_steps_per_unit_time))
            }
        })
        .collect::<Result<_>>()?;

    let tasks = map_chunks(probes.len() * n_chunks, 1, |r| -> Result<Moments> {
        let (probe, c) = (r.start / n_chunks, r.start % n_chunks);
        let (t0, y0) = probes[probe];
        let mut acc = Moments::default();
        if !(t0 < horizon) {
            return Ok(acc);
        }
        let times = &grids[probe];
        let weights = wealth::quadrature_weights(times, sim.quadrature);
        let n_steps = times.len() - 1;
        let mut normals = vec![0.0; n_steps];
        let potential = |t: f64, y: f64| -> Result<f64> {
            let co = market.coeffs_log(t, y);
            Ok(p * (gamma * co.r + 0.5 * gamma * p * co.theta * co.theta - rate.rate(t, y)?))
        };
        for u in c * chunk_units..((c + 1) * chunk_units).min(n_units) {
            let mut value = 0.0;
            for path in u * unit..(u + 1) * unit {
                fill_normals(
                    sim.seed,
                    FEYNMAN_KAC_STREAM + probe as u64,
                    path,
                    sim.antithetic,
                    &mut normals,
                );
                let mut y = y0;
                let mut integral = 0.0;
                let mut prev = potential(times[0], y)?;
                let mut v_path = weights[0];
                for k in 0..n_steps {
                    let h = times[k + 1] - times[k];
                    let co = market.coeffs_log(times[k], y);
                    y += Measure::Tilted.log_drift(&co, p) * h + co.sigma * h.sqrt() * normals[k];
                    if !(y.abs() <= LOG_PRICE_LIMIT) {
                        return Err(Error::PathOverflow {
                            value: y,
                            limit: LOG_PRICE_LIMIT,
                            path,
                            step: k + 1,
                        });
                    }
                    let cur = potential(times[k + 1], y)?;
                    integral += match sim.quadrature {
                        Quadrature::Trapezoid => 0.5 * h * (prev + cur),
                        Quadrature::RiemannLeft => h * prev,
                    };
                    prev = cur;
                    v_path += weights[k + 1] * integral.exp();
                }
                // bequest point mass at s = T
                v_path += integral.exp();
                value += v_path / unit as f64;
            }
            acc.push(value);
        }
        Ok(acc)
    });

    let mut out = Vec::with_capacity(probes.len());
    let mut tasks = tasks.into_iter();
    for &(t, _) in probes {
        let mut total = Moments::default();
        for _ in 0..n_chunks {
            total.merge(&tasks.next().expect("task per chunk")?);
        }
        out.push(if t < horizon {
            total.estimate()
        } else {
            Estimate { mean: 1.0, se: 0.0 }
        });
    }
    Ok(out)
}
