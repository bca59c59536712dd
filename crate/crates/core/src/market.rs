//! Market coefficients and power-utility preferences.

use crate::error::{Error, Result};

/// Coefficients `(r, σ, θ, μ)` at one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub r: f64,
    pub sigma: f64,
    pub theta: f64,
    pub mu: f64,
}

/// Market model. Both kinds are time-homogeneous: the `t` argument of the
/// evaluation methods is accepted for interface generality and ignored.
#[derive(Clone, Debug, PartialEq)]
pub enum MarketSpec {
    Constant {
        r: f64,
        sigma: f64,
        theta: f64,
    },
    /// `σ(z) = clamp(σ0 (z / S0)^β, σ_min, σ_max)` and `θ = mult · σ`.
    ClampedCev {
        r: f64,
        sigma0: f64,
        s0_ref: f64,
        beta: f64,
        theta_mult: f64,
        sigma_min: f64,
        sigma_max: f64,
    },
}

impl MarketSpec {
    pub fn constant(r: f64, sigma: f64, theta: f64) -> Result<Self> {
        finite("r", r)?;
        positive("const_sigma", sigma)?;
        finite("const_theta", theta)?;
        Ok(MarketSpec::Constant { r, sigma, theta })
    }

    pub fn clamped_cev(
        r: f64,
        sigma0: f64,
        s0_ref: f64,
        beta: f64,
        theta_mult: f64,
        sigma_min: f64,
        sigma_max: f64,
    ) -> Result<Self> {
        finite("r", r)?;
        positive("sigma0", sigma0)?;
        positive("S0_ref", s0_ref)?;
        finite("beta", beta)?;
        finite("theta_mult", theta_mult)?;
        positive("sigma_min", sigma_min)?;
        positive("sigma_max", sigma_max)?;
        if sigma_min > sigma_max {
            return Err(Error::config(
                "sigma_min",
                format!("sigma_min = {sigma_min} exceeds sigma_max = {sigma_max}"),
            ));
        }
        Ok(MarketSpec::ClampedCev {
            r,
            sigma0,
            s0_ref,
            beta,
            theta_mult,
            sigma_min,
            sigma_max,
        })
    }

    /// Coefficients at price `z > 0`.
    pub fn coeffs(&self, t: f64, z: f64) -> Result<Coefficients> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Domain(format!("price must be positive and finite, got {z}")));
        }
        Ok(self.coeffs_log(t, z.ln()))
    }

    /// Coefficients at log-price `y`. Infallible for finite `y`.
    #[inline]
    pub fn coeffs_log(&self, _t: f64, y: f64) -> Coefficients {
        match *self {
            MarketSpec::Constant { r, sigma, theta } => Coefficients {
                r,
                sigma,
                theta,
                mu: r + sigma * theta,
            },
            MarketSpec::ClampedCev {
                r,
                sigma0,
                s0_ref,
                beta,
                theta_mult,
                sigma_min,
                sigma_max,
            } => {
                let raw = sigma0 * (beta * (y - s0_ref.ln())).exp();
                let sigma = raw.clamp(sigma_min, sigma_max);
                let theta = theta_mult * sigma;
                Coefficients {
                    r,
                    sigma,
                    theta,
                    mu: r + sigma * theta,
                }
            }
        }
    }

    /// `μ₁ = r + p θ² / 2`.
    pub fn mu1(&self, prefs: &Preferences, t: f64, z: f64) -> Result<f64> {
        let c = self.coeffs(t, z)?;
        Ok(c.r + prefs.p() * c.theta * c.theta / 2.0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MarketSpec::Constant { .. })
    }

    /// Bounds `[σ_lo, σ_hi]` that every evaluation respects.
    pub fn sigma_bounds(&self) -> (f64, f64) {
        match *self {
            MarketSpec::Constant { sigma, .. } => (sigma, sigma),
            MarketSpec::ClampedCev {
                sigma_min, sigma_max, ..
            } => (sigma_min, sigma_max),
        }
    }
}

/// Power utility `U(x) = x^γ / γ` with `γ < 1`, `γ ≠ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preferences {
    gamma: f64,
}

impl Preferences {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::config("gamma", "must be finite"));
        }
        if gamma == 0.0 {
            return Err(Error::config("gamma", "gamma = 0 (log utility) is not supported"));
        }
        if gamma >= 1.0 {
            return Err(Error::config("gamma", format!("must be < 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `p = 1 / (1 - γ)`.
    pub fn p(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn utility(&self, x: f64) -> f64 {
        x.powf(self.gamma) / self.gamma
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}
