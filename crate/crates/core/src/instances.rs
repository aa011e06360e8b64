//! The two built-in benchmark games.
//!
//! Both share the piecewise-linear drift `f(x) = -[min(0, x1), max(0, x2)]`
//! with `G = K = I`, and an inverse-optimal running cost built from a known
//! value function:
//!
//! * `Bounded`: `s(x) = min(1 - x1^2, 1 - x2^2)`, value
//!   `x1^2 / (2 s1) + x2^2 / (2 s2)`.
//! * `Unbounded`: `s(x) = 1 - x2^2`, value `|x|^2 / (2 s)`.
//!
//! The shaping term `phi(x)` (`phi_i = sig(x_i)^g1 s_i^{(1-g1)/2} +
//! sig(x_i)^g2 s_i^{(1-g2)/2}`) drives both closed-form strategies:
//! `u* = -2 phi`, `a* = phi`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AffineDynamics, GameModel, RunningCost, SafeSet, SafeSetKind, SamplingBox, StateVec,
};
use crate::special::signed_pow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    Bounded,
    Unbounded,
}

/// Exponents `theta_c = theta_a = [gamma1, gamma2]` of the closed-form
/// strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    gamma1: f64,
    gamma2: f64,
}

impl StrategyParams {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        if !(gamma1 > 0.0 && gamma1 < 1.0) {
            return Err(Error::config(format!("gamma1 must lie in (0, 1), got {gamma1}")));
        }
        if !(gamma2 > 1.0 && gamma2.is_finite()) {
            return Err(Error::config(format!("gamma2 must exceed 1, got {gamma2}")));
        }
        Ok(Self { gamma1, gamma2 })
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn control_params(&self) -> [f64; 2] {
        [self.gamma1, self.gamma2]
    }

    pub fn adversary_params(&self) -> [f64; 2] {
        [self.gamma1, self.gamma2]
    }
}

/// Per-coordinate level values `(s1, s2)` used by the closed forms. For the
/// unbounded set both entries equal `1 - x2^2`.
pub(crate) fn levels(kind: ExampleKind, x: &[f64]) -> (f64, f64) {
    match kind {
        ExampleKind::Bounded => (1.0 - x[0] * x[0], 1.0 - x[1] * x[1]),
        ExampleKind::Unbounded => {
            let s = 1.0 - x[1] * x[1];
            (s, s)
        }
    }
}

pub(crate) fn check_interior(kind: ExampleKind, x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != 2 {
        return Err(Error::config(format!("expected a 2-dimensional state, got {}", x.len())));
    }
    let (s1, s2) = levels(kind, x);
    if s1 > 0.0 && s2 > 0.0 && x.iter().all(|v| v.is_finite()) {
        Ok((s1, s2))
    } else {
        Err(Error::domain(format!("state {x:?} is outside the safe set")))
    }
}

impl ExampleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExampleKind::Bounded => "bounded",
            ExampleKind::Unbounded => "unbounded",
        }
    }

    /// Level function `s(x)`.
    pub fn level(&self, x: &[f64]) -> f64 {
        let (s1, s2) = levels(*self, x);
        s1.min(s2)
    }

    pub fn safe_set(&self) -> SafeSet {
        let kind = *self;
        let (set_kind, lower, upper) = match kind {
            ExampleKind::Bounded => (SafeSetKind::Bounded, vec![-1.0, -1.0], vec![1.0, 1.0]),
            ExampleKind::Unbounded => (SafeSetKind::Unbounded, vec![-2.0, -1.0], vec![2.0, 1.0]),
        };
        SafeSet::new(
            move |x: &StateVec| kind.level(x.as_slice()),
            set_kind,
            SamplingBox::new(lower, upper).expect("static box"),
        )
        .expect("origin is inside both built-in sets")
    }

    /// Shaping term `phi(x)`.
    pub fn shaping(&self, params: &StrategyParams, x: &[f64]) -> Result<[f64; 2]> {
        let (s1, s2) = check_interior(*self, x)?;
        Ok([
            shaping_component(x[0], s1, params),
            shaping_component(x[1], s2, params),
        ])
    }

    /// Gradient of the closed-form value, as a column.
    pub fn value_gradient(&self, x: &[f64]) -> Result<[f64; 2]> {
        let (s1, s2) = check_interior(*self, x)?;
        Ok(match self {
            ExampleKind::Bounded => [
                x[0] / s1 * (1.0 + x[0] * x[0] / s1),
                x[1] / s2 * (1.0 + x[1] * x[1] / s2),
            ],
            ExampleKind::Unbounded => {
                let s = s1;
                let nrm2 = x[0] * x[0] + x[1] * x[1];
                [x[0] / s, x[1] / s * (1.0 + nrm2 / s)]
            }
        })
    }

    /// Closed-form value.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let (s1, s2) = check_interior(*self, x)?;
        Ok(match self {
            ExampleKind::Bounded => x[0] * x[0] / (2.0 * s1) + x[1] * x[1] / (2.0 * s2),
            ExampleKind::Unbounded => (x[0] * x[0] + x[1] * x[1]) / (2.0 * s1),
        })
    }

    /// Game model with the default weights `R_u = I/4`, `R_a = I/2`.
    pub fn model(&self, params: StrategyParams) -> Result<GameModel> {
        self.model_with_weights(
            params,
            DMatrix::identity(2, 2) * 0.25,
            DMatrix::identity(2, 2) * 0.5,
        )
    }

    /// Same dynamics and cost structure with user-supplied constant weights.
    /// With non-default weights the closed-form value is no longer the game
    /// value.
    pub fn model_with_weights(
        &self,
        params: StrategyParams,
        control_weight: DMatrix<f64>,
        adversary_weight: DMatrix<f64>,
    ) -> Result<GameModel> {
        let cost = InverseOptimalCost {
            kind: *self,
            params,
            control_weight,
            adversary_weight,
        };
        GameModel::new(Arc::new(PiecewiseDrift), Arc::new(cost), self.safe_set())
    }
}

fn shaping_component(xi: f64, si: f64, params: &StrategyParams) -> f64 {
    let (g1, g2) = (params.gamma1, params.gamma2);
    signed_pow(xi, g1) * si.powf(0.5 * (1.0 - g1)) + signed_pow(xi, g2) * si.powf(0.5 * (1.0 - g2))
}

/// `f(x) = -[min(0, x1), max(0, x2)]`, `G = K = I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PiecewiseDrift;

impl AffineDynamics for PiecewiseDrift {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn adversary_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &StateVec) -> StateVec {
        StateVec::from_column_slice(&[-x[0].min(0.0), -x[1].max(0.0)])
    }
    fn control_gain(&self, _x: &StateVec) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn adversary_gain(&self, _x: &StateVec) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
}

/// Running cost derived from the closed-form value:
/// `L = 1/2 |phi|^2 - V' f`, `L_u = L_a = phi^T - V'`.
#[derive(Debug, Clone)]
pub struct InverseOptimalCost {
    kind: ExampleKind,
    params: StrategyParams,
    control_weight: DMatrix<f64>,
    adversary_weight: DMatrix<f64>,
}

impl InverseOptimalCost {
    fn pieces(&self, x: &StateVec) -> ([f64; 2], [f64; 2]) {
        // Outside the set the cost is undefined; callers check membership
        // first. NaN keeps accidental use loud.
        match (
            self.kind.shaping(&self.params, x.as_slice()),
            self.kind.value_gradient(x.as_slice()),
        ) {
            (Ok(phi), Ok(grad)) => (phi, grad),
            _ => ([f64::NAN; 2], [f64::NAN; 2]),
        }
    }

    fn cross(&self, x: &StateVec) -> StateVec {
        let (phi, grad) = self.pieces(x);
        StateVec::from_column_slice(&[phi[0] - grad[0], phi[1] - grad[1]])
    }
}

impl RunningCost for InverseOptimalCost {
    fn state_cost(&self, x: &StateVec) -> f64 {
        let (phi, grad) = self.pieces(x);
        let f = PiecewiseDrift.drift(x);
        0.5 * (phi[0] * phi[0] + phi[1] * phi[1]) - (grad[0] * f[0] + grad[1] * f[1])
    }
    fn control_cross(&self, x: &StateVec) -> StateVec {
        self.cross(x)
    }
    fn adversary_cross(&self, x: &StateVec) -> StateVec {
        self.cross(x)
    }
    fn control_weight(&self, _x: &StateVec) -> DMatrix<f64> {
        self.control_weight.clone()
    }
    fn adversary_weight(&self, _x: &StateVec) -> DMatrix<f64> {
        self.adversary_weight.clone()
    }
}
