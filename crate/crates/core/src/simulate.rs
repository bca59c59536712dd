//! Seeded Euler simulation of the log-price under the physical and tilted measures.
//!
//! Randomness is counter based: each path draws from its own ChaCha stream keyed
//! by `(seed, batch key, path index)`, so results do not depend on how paths are
//! scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Coefficients, MarketSpec, Preferences};

/// Log-price magnitude beyond which a batch is aborted.
pub const LOG_PRICE_LIMIT: f64 = 700.0;

/// Paths per work unit in parallel loops. Fixed so reductions are ordered identically
/// for any thread count.
pub(crate) const PATH_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Drift `μ`.
    Physical,
    /// Drift `r + p σ θ`, the measure under which the value and rate
    /// functionals lose their stochastic-integral terms.
    Tilted,
}

impl Measure {
    /// Drift of `log S`.
    #[inline]
    pub fn log_drift(self, c: &Coefficients, p: f64) -> f64 {
        let price_drift = match self {
            Measure::Physical => c.mu,
            Measure::Tilted => c.r + p * c.sigma * c.theta,
        };
        price_drift - 0.5 * c.sigma * c.sigma
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    RiemannLeft,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    EulerLog,
}

/// Simulation settings independent of any particular horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub n_paths: usize,
    pub n_steps_per_unit_time: f64,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub quadrature: Quadrature,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n_paths: 20_000,
            n_steps_per_unit_time: 4.0,
            seed: 20_240_917,
            antithetic: false,
            quadrature: Quadrature::Trapezoid,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be positive"));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::config("n_paths", "must be even when antithetic = true"));
        }
        if !(self.n_steps_per_unit_time > 0.0 && self.n_steps_per_unit_time.is_finite()) {
            return Err(Error::config("n_steps_per_unit_time", "must be positive"));
        }
        Ok(())
    }

    /// Batch configuration on `[t0, t1]` with at least one step.
    pub fn batch(&self, t0: f64, t1: f64) -> SimConfig {
        let n_steps = ((t1 - t0) * self.n_steps_per_unit_time).ceil().max(1.0) as usize;
        SimConfig {
            n_paths: self.n_paths,
            n_steps,
            t0,
            t1,
            seed: self.seed,
            scheme: Scheme::EulerLog,
            antithetic: self.antithetic,
        }
    }
}

/// Configuration of one path batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub t0: f64,
    pub t1: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be positive"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps", "must be positive"));
        }
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t0 < self.t1) {
            return Err(Error::config(
                "t1",
                format!("need t0 < t1, got [{}, {}]", self.t0, self.t1),
            ));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::config("n_paths", "must be even when antithetic = true"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps)
            .map(|k| {
                if k == self.n_steps {
                    self.t1
                } else {
                    self.t0 + dt * k as f64
                }
            })
            .collect()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one path (or one antithetic pair).
pub fn stream_rng(seed: u64, batch_key: u64, path: u64) -> ChaCha8Rng {
    let mut state = seed;
    state = splitmix64(&mut state) ^ batch_key.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    state = splitmix64(&mut state) ^ path.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Fills `out` with standard normals for `path`, honouring antithetic pairing:
/// odd paths reuse the draws of their even partner with the sign flipped.
pub fn fill_normals(seed: u64, batch_key: u64, path: usize, antithetic: bool, out: &mut [f64]) {
    let (stream, negate) = if antithetic {
        ((path / 2) as u64, path % 2 == 1)
    } else {
        (path as u64, false)
    };
    let mut rng = stream_rng(seed, batch_key, stream);
    for z in out.iter_mut() {
        let draw: f64 = StandardNormal.sample(&mut rng);
        *z = if negate { -draw } else { draw };
    }
}

/// Simulated log-price paths on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub times: Vec<f64>,
    /// Row-major, `n_paths × (n_steps + 1)`.
    pub logprices: Vec<f64>,
    /// Brownian increments, row-major `n_paths × n_steps`.
    pub increments: Vec<f64>,
    pub measure: Measure,
    pub n_paths: usize,
}

impl PathBatch {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn path(&self, k: usize) -> &[f64] {
        let w = self.times.len();
        &self.logprices[k * w..(k + 1) * w]
    }

    pub fn path_increments(&self, k: usize) -> &[f64] {
        let w = self.n_steps();
        &self.increments[k * w..(k + 1) * w]
    }
}

/// One Euler step of `log S`.
#[inline]
pub(crate) fn euler_log_step(market: &MarketSpec, p: f64, measure: Measure, t: f64, y: f64, dt: f64, dw: f64) -> f64 {
    let c = market.coeffs_log(t, y);
    y + measure.log_drift(&c, p) * dt + c.sigma * dw
}

/// Simulates `n_paths` log-price paths from `y0` at `cfg.t0`.
pub fn simulate_logpaths(
    market: &MarketSpec,
    prefs: &Preferences,
    measure: Measure,
    cfg: &SimConfig,
    y0: f64,
) -> Result<PathBatch> {
    cfg.validate()?;
    if !y0.is_finite() {
        return Err(Error::Domain(format!("initial log-price must be finite, got {y0}")));
    }
    let times = cfg.times();
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    let p = prefs.p();
    let width = cfg.n_steps + 1;

    let mut logprices = vec![0.0; cfg.n_paths * width];
    let mut increments = vec![0.0; cfg.n_paths * cfg.n_steps];

    logprices
        .par_chunks_mut(width)
        .zip(increments.par_chunks_mut(cfg.n_steps))
        .enumerate()
        .try_for_each(|(k, (ys, dws))| {
            fill_normals(cfg.seed, 0, k, cfg.antithetic, dws);
            ys[0] = y0;
            for j in 0..cfg.n_steps {
                dws[j] *= sqrt_dt;
                let next = euler_log_step(market, p, measure, times[j], ys[j], dt, dws[j]);
                if !(next.abs() <= LOG_PRICE_LIMIT) {
                    return Err(Error::PathOverflow {
                        value: next,
                        limit: LOG_PRICE_LIMIT,
                        path: k,
                        step: j + 1,
                    });
                }
                ys[j + 1] = next;
            }
            Ok(())
        })?;

    Ok(PathBatch {
        times,
        logprices,
        increments,
        measure,
        n_paths: cfg.n_paths,
    })
}

/// Time integral of `phi(t, y)` along every path of the batch.
pub fn path_integral<F>(batch: &PathBatch, phi: F, quadrature: Quadrature) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let times = &batch.times;
    (0..batch.n_paths)
        .into_par_iter()
        .map(|k| {
            let ys = batch.path(k);
            let mut acc = 0.0;
            let mut prev = phi(times[0], ys[0]);
            check_finite(prev, k, times[0])?;
            for j in 1..times.len() {
                let h = times[j] - times[j - 1];
                let cur = phi(times[j], ys[j]);
                check_finite(cur, k, times[j])?;
                acc += match quadrature {
                    Quadrature::Trapezoid => 0.5 * h * (prev + cur),
                    Quadrature::RiemannLeft => h * prev,
                };
                prev = cur;
            }
            Ok(acc)
        })
        .collect()
}

fn check_finite(v: f64, path: usize, t: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("integrand is {v} on path {path} at t = {t}")))
    }
}

/// Sample mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Running first and second moments.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn estimate(&self) -> Estimate {
        let mean = self.sum / self.n;
        let var = if self.n > 1.0 {
            ((self.sum_sq - self.n * mean * mean) / (self.n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            se: (var / self.n).sqrt(),
        }
    }
}

/// Moments of paired samples `(num, den)` for the ratio estimator `Σnum / Σden`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RatioMoments {
    pub n: f64,
    pub num: f64,
    pub den: f64,
    pub num_sq: f64,
    pub den_sq: f64,
    pub cross: f64,
}

impl RatioMoments {
    #[inline]
    pub fn push(&mut self, num: f64, den: f64) {
        self.n += 1.0;
        self.num += num;
        self.den += den;
        self.num_sq += num * num;
        self.den_sq += den * den;
        self.cross += num * den;
    }

    pub fn merge(&mut self, other: &RatioMoments) {
        self.n += other.n;
        self.num += other.num;
        self.den += other.den;
        self.num_sq += other.num_sq;
        self.den_sq += other.den_sq;
        self.cross += other.cross;
    }

    /// Ratio of means with a delta-method standard error.
    pub fn estimate(&self) -> Estimate {
        let ratio = self.num / self.den;
        let mean_den = self.den / self.n;
        let resid_sq = (self.num_sq - 2.0 * ratio * self.cross + ratio * ratio * self.den_sq) / self.n;
        let var = if self.n > 1.0 {
            resid_sq.max(0.0) * self.n / (self.n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean: ratio,
            se: (var / self.n).sqrt() / mean_den.abs(),
        }
    }
}

impl Estimate {
    pub fn of(samples: &[f64]) -> Estimate {
        let mut m = Moments::default();
        samples.iter().for_each(|&x| m.push(x));
        m.estimate()
    }
}

/// Ordered parallel map over chunks of `0..n`; the output order is the chunk
/// order regardless of scheduling.
pub(crate) fn map_chunks<R, F>(n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync,
{
    let n_chunks = n.div_ceil(chunk);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| f(c * chunk..((c + 1) * chunk).min(n)))
        .collect()
}
