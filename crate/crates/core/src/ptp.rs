//! Predefined-time rate parameters.
//!
//! A positive definite `V` with
//! `Vdot <= -(gamma / T_p) (alpha V^p + beta V^q)^r`, `p r < 1 < q r`,
//! reaches zero before `T_p` from any initial state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

/// Rate constant `gamma` of the predefined-time decrease condition.
pub fn gamma_constant(alpha: f64, beta: f64, p: f64, q: f64, r: f64) -> Result<f64> {
    check_exponents(alpha, beta, p, q, r)?;
    let a = (1.0 - r * p) / (q - p);
    let b = (r * q - 1.0) / (q - p);
    Ok(gamma(a) * gamma(b) / (alpha.powf(r) * gamma(r) * (q - p)) * (alpha / beta).powf(a))
}

fn check_exponents(alpha: f64, beta: f64, p: f64, q: f64, r: f64) -> Result<()> {
    for (name, v) in [("alpha", alpha), ("beta", beta), ("p", p), ("q", q), ("r", r)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(p * r < 1.0) {
        return Err(Error::domain(format!("p*r < 1 violated: p*r = {}", p * r)));
    }
    if !(q * r > 1.0) {
        return Err(Error::domain(format!("q*r > 1 violated: q*r = {}", q * r)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredefinedTimeParams {
    alpha: f64,
    beta: f64,
    p: f64,
    q: f64,
    r: f64,
    settling_time: f64,
    gamma: f64,
}

impl PredefinedTimeParams {
    pub fn new(alpha: f64, beta: f64, p: f64, q: f64, r: f64, settling_time: f64) -> Result<Self> {
        let gamma = gamma_constant(alpha, beta, p, q, r)?;
        if !(settling_time > 0.0 && settling_time.is_finite()) {
            return Err(Error::domain(format!(
                "predefined time must be positive, got {settling_time}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            p,
            q,
            r,
            settling_time,
            gamma,
        })
    }

    /// Exponents produced by the strategy exponents `gamma1 < 1 < gamma2` of
    /// the built-in instances: `alpha = 2^{(g1+1)/2}`, `beta = 2`,
    /// `p = (g1+1)/2`, `q = (g2+1)/2`, `r = 1`, with `T_p = gamma`.
    pub fn from_strategy_exponents(gamma1: f64, gamma2: f64) -> Result<Self> {
        let p = 0.5 * (gamma1 + 1.0);
        let q = 0.5 * (gamma2 + 1.0);
        let alpha = 2f64.powf(p);
        let g = gamma_constant(alpha, 2.0, p, q, 1.0)?;
        Self::new(alpha, 2.0, p, q, 1.0, g)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    /// `T_p`, seconds.
    pub fn settling_time(&self) -> f64 {
        self.settling_time
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(gamma / T_p) (alpha v^p + beta v^q)^r` for `v >= 0`.
    pub fn decay(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        let inner = self.alpha * v.powf(self.p) + self.beta * v.powf(self.q);
        self.gamma / self.settling_time * inner.powf(self.r)
    }

    /// Derivative of [`Self::decay`] with respect to `v`. The base of the
    /// fractional powers is clamped below at `floor` so the slope stays finite
    /// at `v = 0`.
    pub fn decay_slope(&self, v: f64, floor: f64) -> f64 {
        let v = v.max(floor);
        let inner = self.alpha * v.powf(self.p) + self.beta * v.powf(self.q);
        let d_inner = self.alpha * self.p * v.powf(self.p - 1.0)
            + self.beta * self.q * v.powf(self.q - 1.0);
        self.gamma / self.settling_time * self.r * inner.powf(self.r - 1.0) * d_inner
    }
}
