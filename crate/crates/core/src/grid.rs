//! Time × log-price grids and bilinear surfaces on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing of the spatial nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpace {
    /// Uniform in `y = log S`.
    #[default]
    Log,
    /// Uniform in `S`, stored as `y = log S`.
    Price,
}

/// Tensor grid of time nodes ending at the horizon and increasing log-price nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    t_nodes: Vec<f64>,
    y_nodes: Vec<f64>,
}

impl Grid2D {
    pub fn new(t_nodes: Vec<f64>, y_nodes: Vec<f64>) -> Result<Self> {
        check_nodes("t_nodes", &t_nodes)?;
        check_nodes("y_nodes", &y_nodes)?;
        if t_nodes[0] < 0.0 {
            return Err(Error::config("t_nodes", "time nodes must start at t >= 0"));
        }
        Ok(Self { t_nodes, y_nodes })
    }

    /// `n_t` uniform time nodes on `[0, horizon]` and `n_y` spatial nodes on
    /// `[y_min, y_max]`, uniform in the chosen space.
    pub fn uniform(horizon: f64, n_t: usize, y_min: f64, y_max: f64, n_y: usize, space: GridSpace) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("T", format!("horizon must be positive, got {horizon}")));
        }
        if n_t < 2 {
            return Err(Error::config("t_nodes", "need at least two time nodes"));
        }
        if n_y < 2 {
            return Err(Error::config("n_y", "need at least two spatial nodes"));
        }
        if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(Error::config(
                "y_min",
                format!("need y_min < y_max, got [{y_min}, {y_max}]"),
            ));
        }
        let t_nodes = linspace(0.0, horizon, n_t);
        let y_nodes = match space {
            GridSpace::Log => linspace(y_min, y_max, n_y),
            GridSpace::Price => linspace(y_min.exp(), y_max.exp(), n_y)
                .into_iter()
                .map(f64::ln)
                .collect(),
        };
        Self::new(t_nodes, y_nodes)
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }

    pub fn n_t(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn n_y(&self) -> usize {
        self.y_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_t() * self.n_y()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> f64 {
        *self.t_nodes.last().expect("grid has nodes")
    }

    /// Common time step, if the time nodes are uniform to within rounding.
    pub fn uniform_dt(&self) -> Option<f64> {
        uniform_step(&self.t_nodes)
    }

    pub fn uniform_dy(&self) -> Option<f64> {
        uniform_step(&self.y_nodes)
    }

    /// Bracketing index and weight for `t`, clamped to the node range.
    #[inline]
    pub fn locate_t(&self, t: f64) -> (usize, f64) {
        locate(&self.t_nodes, t)
    }

    /// Bracketing index and weight for `y`, clamped to the node range.
    #[inline]
    pub fn locate_y(&self, y: f64) -> (usize, f64) {
        locate(&self.y_nodes, y)
    }

    #[inline]
    pub fn index(&self, n: usize, i: usize) -> usize {
        n * self.y_nodes.len() + i
    }
}

fn check_nodes(key: &str, nodes: &[f64]) -> Result<()> {
    if nodes.len() < 2 {
        return Err(Error::config(key, "need at least two nodes"));
    }
    if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(key, "nodes must be finite and strictly increasing"));
    }
    Ok(())
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { b } else { a + step * k as f64 })
        .collect()
}

fn uniform_step(nodes: &[f64]) -> Option<f64> {
    let n = nodes.len();
    let step = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let ok = nodes
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1.0));
    ok.then_some(step)
}

/// Index `i` and weight `w` with `x ≈ (1 - w) nodes[i] + w nodes[i + 1]`;
/// out-of-range arguments clamp to the nearest end node.
#[inline]
pub(crate) fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if !(x > nodes[0]) {
        return (0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 2, 1.0);
    }
    let k = nodes.partition_point(|&v| v <= x) - 1;
    let w = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    (k, w)
}

/// Scalar field on a [`Grid2D`], row-major in time.
#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Surface {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Numerical(format!(
                "surface has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn filled(grid: Grid2D, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, n: usize, i: usize) -> f64 {
        self.values[self.grid.index(n, i)]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let ny = self.grid.n_y();
        &self.values[n * ny..(n + 1) * ny]
    }

    /// Bilinear interpolation with constant extrapolation outside the grid.
    #[inline]
    pub fn interp(&self, t: f64, y: f64) -> f64 {
        let (n, wt) = self.grid.locate_t(t);
        let (i, wy) = self.grid.locate_y(y);
        self.blend(n, wt, i, wy)
    }

    #[inline]
    pub(crate) fn blend(&self, n: usize, wt: f64, i: usize, wy: f64) -> f64 {
        let ny = self.grid.n_y();
        let lo = &self.values[n * ny..];
        let a = lo[i] + wy * (lo[i + 1] - lo[i]);
        if wt == 0.0 {
            return a;
        }
        let hi = &self.values[(n + 1) * ny..];
        let b = hi[i] + wy * (hi[i + 1] - hi[i]);
        a + wt * (b - a)
    }

    pub fn max_abs_diff(&self, other: &Surface) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
