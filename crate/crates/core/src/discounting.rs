//! Discount functions `h(t, s)` and their rates.
//!
//! Every supported family is stationary, `h(t, s) = H(s - t)`, so most of the
//! work happens on the lag `x = s - t`. The backward rate `∂h/∂t / h` and the
//! forward rate `-∂h/∂s / h` coincide and both equal `R(x) = -H'(x) / H(x)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest hyperbolic curvature accepted; below it the exponent `-b/a` is ill-conditioned.
pub const MIN_HYPERBOLIC_CURVATURE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountFamily {
    Exponential,
    GeneralizedHyperbolic,
    Tabulated,
}

/// A parametric or sampled discount function.
#[derive(Clone, Debug, PartialEq)]
pub enum DiscountSpec {
    /// `H(x) = exp(-rho x)`.
    Exponential { rho: f64 },
    /// `H(x) = (1 + a x)^(-b/a) exp(-rho x)`.
    GeneralizedHyperbolic { a: f64, b: f64, rho: f64 },
    /// `H` sampled on a grid of lags, normalized so that `H(0) = 1`.
    Tabulated(DiscountTable),
}

/// Sampled `(x, H(x))` pairs with precomputed node derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscountTable {
    x: Vec<f64>,
    h: Vec<f64>,
    dh: Vec<f64>,
}

impl DiscountTable {
    /// Builds a table from raw samples. The first lag must be zero; values are
    /// divided by `H(0)` so that `h(t, t) = 1`.
    pub fn new(x: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if x.len() != h.len() {
            return Err(Error::config("table_path", "x and H columns differ in length"));
        }
        if x.len() < 2 {
            return Err(Error::UnsupportedFamily(
                "tabulated discount needs at least two samples to differentiate".into(),
            ));
        }
        if x[0] != 0.0 {
            return Err(Error::config("table_path", "first lag must be x = 0"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(
                "table_path",
                "lags must be finite and strictly increasing",
            ));
        }
        if h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("table_path", "H values must be finite and positive"));
        }
        let h0 = h[0];
        let h: Vec<f64> = h.iter().map(|v| v / h0).collect();

        let n = x.len();
        let mut dh = vec![0.0; n];
        dh[0] = (h[1] - h[0]) / (x[1] - x[0]);
        dh[n - 1] = (h[n - 1] - h[n - 2]) / (x[n - 1] - x[n - 2]);
        for i in 1..n - 1 {
            dh[i] = (h[i + 1] - h[i - 1]) / (x[i + 1] - x[i - 1]);
        }
        Ok(Self { x, h, dh })
    }

    /// Reads a CSV with header `x,H`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            #[serde(rename = "H")]
            h: f64,
        }
        let mut reader = csv::Reader::from_path(path)?;
        let mut xs = Vec::new();
        let mut hs = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row?;
            xs.push(row.x);
            hs.push(row.h);
        }
        Self::new(xs, hs)
    }

    pub fn max_lag(&self) -> f64 {
        *self.x.last().expect("table has at least two rows")
    }

    pub fn lags(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.max_lag()).contains(&x) {
            return Err(Error::Domain(format!(
                "lag {x} outside tabulated range [0, {}]",
                self.max_lag()
            )));
        }
        let i = match self.x.partition_point(|&v| v <= x) {
            0 => 0,
            k => (k - 1).min(self.x.len() - 2),
        };
        let w = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        Ok((i, w))
    }

    fn value(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok((1.0 - w) * self.h[i] + w * self.h[i + 1])
    }

    fn derivative(&self, x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok((1.0 - w) * self.dh[i] + w * self.dh[i + 1])
    }
}

impl DiscountSpec {
    pub fn exponential(rho: f64) -> Result<Self> {
        check_rate("rho", rho)?;
        Ok(DiscountSpec::Exponential { rho })
    }

    pub fn generalized_hyperbolic(a: f64, b: f64, rho: f64) -> Result<Self> {
        check_rate("a", a)?;
        check_rate("b", b)?;
        check_rate("rho", rho)?;
        if a < MIN_HYPERBOLIC_CURVATURE {
            return Err(Error::config(
                "a",
                format!(
                    "hyperbolic curvature {a} below {MIN_HYPERBOLIC_CURVATURE}; \
                     use the exponential family with rho = {}",
                    rho + b
                ),
            ));
        }
        Ok(DiscountSpec::GeneralizedHyperbolic { a, b, rho })
    }

    pub fn family(&self) -> DiscountFamily {
        match self {
            DiscountSpec::Exponential { .. } => DiscountFamily::Exponential,
            DiscountSpec::GeneralizedHyperbolic { .. } => DiscountFamily::GeneralizedHyperbolic,
            DiscountSpec::Tabulated(_) => DiscountFamily::Tabulated,
        }
    }

    /// `H(x)`, the discount factor at lag `x >= 0`.
    pub fn factor_at_lag(&self, x: f64) -> Result<f64> {
        check_lag(x)?;
        Ok(match self {
            DiscountSpec::Exponential { rho } => (-rho * x).exp(),
            DiscountSpec::GeneralizedHyperbolic { a, b, rho } => (a * x).ln_1p().mul_add(-b / a, -rho * x).exp(),
            DiscountSpec::Tabulated(table) => table.value(x)?,
        })
    }

    /// `-H'(x)`, which is `∂h/∂t` at lag `x`.
    pub fn dt_factor_at_lag(&self, x: f64) -> Result<f64> {
        check_lag(x)?;
        match self {
            DiscountSpec::Tabulated(table) => Ok(-table.derivative(x)?),
            _ => Ok(self.factor_at_lag(x)? * self.forward_rate(x)?),
        }
    }

    /// `h(t, s)` for `t <= s`.
    pub fn eval_h(&self, t: f64, s: f64) -> Result<f64> {
        self.factor_at_lag(lag(t, s)?)
    }

    /// `∂h/∂t (t, s)` for `t <= s`.
    pub fn eval_dh_dt(&self, t: f64, s: f64) -> Result<f64> {
        self.dt_factor_at_lag(lag(t, s)?)
    }

    /// `R(x) = -H'(x) / H(x)`.
    pub fn forward_rate(&self, x: f64) -> Result<f64> {
        check_lag(x)?;
        match self {
            DiscountSpec::Exponential { rho } => Ok(*rho),
            DiscountSpec::GeneralizedHyperbolic { a, b, rho } => Ok(rho + b / a.mul_add(x, 1.0)),
            DiscountSpec::Tabulated(table) => Ok(-table.derivative(x)? / table.value(x)?),
        }
    }

    /// Rate used by an agent committed at time 0: `ρ(0, t) = R(t)`.
    pub fn precommitment_rate(&self, t: f64) -> Result<f64> {
        self.forward_rate(t)
    }

    /// Largest lag at which the discount function can be evaluated.
    pub fn max_lag(&self) -> f64 {
        match self {
            DiscountSpec::Tabulated(table) => table.max_lag(),
            _ => f64::INFINITY,
        }
    }

    /// `[inf R, sup R]` over lags in `[0, horizon]`, sampled on `samples` points.
    pub fn rate_range(&self, horizon: f64, samples: usize) -> Result<(f64, f64)> {
        let samples = samples.max(2);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..samples {
            let x = horizon * k as f64 / (samples - 1) as f64;
            let r = self.forward_rate(x)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok((lo, hi))
    }
}

fn check_rate(key: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must be finite and non-negative, got {value}"),
        ))
    }
}

fn check_lag(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("discount lag must be finite and >= 0, got {x}")))
    }
}

fn lag(t: f64, s: f64) -> Result<f64> {
    if !(t.is_finite() && s.is_finite()) {
        return Err(Error::Domain(format!("non-finite discount arguments ({t}, {s})")));
    }
    if t > s {
        return Err(Error::Domain(format!("discount requires t <= s, got t = {t}, s = {s}")));
    }
    Ok(s - t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hyperbolic_preset() -> DiscountSpec {
        DiscountSpec::generalized_hyperbolic(1.0, 0.02, 0.02).unwrap()
    }

    #[test]
    fn exponential_values() {
        let spec = DiscountSpec::exponential(0.02).unwrap();
        assert!((spec.eval_h(0.0, 1.0).unwrap() - 0.980199).abs() < 1e-6);
        assert!((spec.eval_dh_dt(0.0, 1.0).unwrap() - 0.0196040).abs() < 1e-7);
        assert_eq!(spec.forward_rate(3.7).unwrap(), 0.02);
    }

    #[test]
    fn hyperbolic_values() {
        let spec = hyperbolic_preset();
        assert_eq!(spec.eval_h(0.0, 0.0).unwrap(), 1.0);
        let expected = 2f64.powf(-0.02) * (-0.02f64).exp();
        assert!((spec.eval_h(0.0, 1.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.966704).abs() < 1e-6);
        assert_eq!(spec.eval_dh_dt(10.0, 10.0).unwrap(), 0.04);
        assert_eq!(spec.forward_rate(0.0).unwrap(), 0.04);
        assert!((spec.forward_rate(10.0).unwrap() - 0.0218182).abs() < 1e-7);
    }

    #[test]
    fn boundary_derivative_is_rate_at_zero() {
        for spec in [DiscountSpec::exponential(0.03).unwrap(), hyperbolic_preset()] {
            let r0 = spec.forward_rate(0.0).unwrap();
            assert_eq!(spec.eval_dh_dt(5.0, 5.0).unwrap(), r0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = hyperbolic_preset();
        assert!(matches!(spec.eval_h(1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(spec.eval_dh_dt(f64::NAN, 0.5), Err(Error::Domain(_))));
        assert!(matches!(
            DiscountSpec::generalized_hyperbolic(1e-13, 0.02, 0.02),
            Err(Error::Config { .. })
        ));
        assert!(DiscountSpec::exponential(-0.1).is_err());
    }

    #[test]
    fn hyperbolic_rate_decreases_to_rho() {
        let spec = hyperbolic_preset();
        let mut prev = spec.forward_rate(0.0).unwrap();
        for k in 1..200 {
            let r = spec.forward_rate(k as f64 * 0.5).unwrap();
            assert!(r < prev);
            prev = r;
        }
        assert!((spec.forward_rate(1e9).unwrap() - 0.02).abs() < 1e-10);
    }

    #[test]
    fn table_is_normalized_and_differentiated() {
        let xs: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let hs: Vec<f64> = xs.iter().map(|x| 2.0 * (-0.05 * x).exp()).collect();
        let spec = DiscountSpec::Tabulated(DiscountTable::new(xs, hs).unwrap());
        assert_eq!(spec.eval_h(2.0, 2.0).unwrap(), 1.0);
        assert!((spec.eval_h(0.0, 3.0).unwrap() - (-0.15f64).exp()).abs() < 1e-4);
        assert!((spec.forward_rate(4.0).unwrap() - 0.05).abs() < 1e-4);
        assert!(spec.eval_h(0.0, 11.0).is_err());
    }

    #[test]
    fn table_rejects_nonzero_start() {
        assert!(DiscountTable::new(vec![0.5, 1.0], vec![1.0, 0.9]).is_err());
        assert!(DiscountTable::new(vec![0.0], vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn unit_on_diagonal(t in 0.0..10.0f64, a in 0.01..5.0f64, b in 0.0..0.2f64, rho in 0.0..0.2f64) {
            let spec = DiscountSpec::generalized_hyperbolic(a, b, rho).unwrap();
            prop_assert_eq!(spec.eval_h(t, t).unwrap(), 1.0);
            prop_assert_eq!(DiscountSpec::exponential(rho).unwrap().eval_h(t, t).unwrap(), 1.0);
        }

        #[test]
        fn stationary_under_shift(t in 0.0..5.0f64, d in 0.0..5.0f64, c in 0.0..4.0f64) {
            let spec = hyperbolic_preset();
            let base = spec.eval_h(t, t + d).unwrap();
            let shifted = spec.eval_h(t + c, t + d + c).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-14 * base.max(1.0));
        }

        #[test]
        fn derivative_matches_central_difference(t in 0.1..4.0f64, d in 0.0..5.0f64) {
            let s = t + d + 0.01;
            for spec in [hyperbolic_preset(), DiscountSpec::exponential(0.05).unwrap()] {
                let exact = spec.eval_dh_dt(t, s).unwrap();
                for eps in [1e-4, 1e-5] {
                    let fd = (spec.eval_h(t + eps, s).unwrap() - spec.eval_h(t - eps, s).unwrap()) / (2.0 * eps);
                    // truncation C eps^2 plus cancellation ~ 1e-16 / eps
                    prop_assert!((exact - fd).abs() <= 10.0 * eps * eps + 1e-10);
                }
            }
        }
    }
}
