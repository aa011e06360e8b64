//! Nash feedback strategies and saddle-point checks.

use crate::barrier::ValueFunction;
use crate::error::Result;
use crate::instances::{ExampleKind, StrategyParams};
use crate::model::{GameModel, StateVec};

/// Feedback laws for both players.
pub trait StrategyPair: Send + Sync {
    fn control(&self, x: &StateVec) -> Result<StateVec>;
    fn adversary(&self, x: &StateVec) -> Result<StateVec>;
}

/// `u* = -1/2 R_u^{-1} (L_u + V'G)^T`.
pub fn nash_control(model: &GameModel, value: &dyn ValueFunction, x: &StateVec) -> Result<StateVec> {
    let local = model.local(x)?;
    Ok(local.control(&value.gradient(x)?))
}

/// `a* = +1/2 R_a^{-1} (L_a + V'K)^T`.
pub fn nash_adversary(model: &GameModel, value: &dyn ValueFunction, x: &StateVec) -> Result<StateVec> {
    let local = model.local(x)?;
    Ok(local.adversary(&value.gradient(x)?))
}

/// Strategies induced by a value function through the general affine
/// formulas.
pub struct NashFeedback<'a> {
    model: &'a GameModel,
    value: &'a dyn ValueFunction,
}

impl<'a> NashFeedback<'a> {
    pub fn new(model: &'a GameModel, value: &'a dyn ValueFunction) -> Self {
        Self { model, value }
    }
}

impl StrategyPair for NashFeedback<'_> {
    fn control(&self, x: &StateVec) -> Result<StateVec> {
        nash_control(self.model, self.value, x)
    }

    fn adversary(&self, x: &StateVec) -> Result<StateVec> {
        nash_adversary(self.model, self.value, x)
    }
}

/// Closed-form equilibrium of a built-in game: `u* = -2 phi`, `a* = phi`.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormPair {
    kind: ExampleKind,
    params: StrategyParams,
}

impl StrategyPair for ClosedFormPair {
    fn control(&self, x: &StateVec) -> Result<StateVec> {
        let phi = self.kind.shaping(&self.params, x.as_slice())?;
        Ok(StateVec::from_column_slice(&[-2.0 * phi[0], -2.0 * phi[1]]))
    }

    fn adversary(&self, x: &StateVec) -> Result<StateVec> {
        let phi = self.kind.shaping(&self.params, x.as_slice())?;
        Ok(StateVec::from_column_slice(&phi))
    }
}

pub fn closed_form_pair(kind: ExampleKind, gamma1: f64, gamma2: f64) -> Result<ClosedFormPair> {
    Ok(ClosedFormPair {
        kind,
        params: StrategyParams::new(gamma1, gamma2)?,
    })
}

/// `(H(u*, a) - H(u*, a*), H(u, a*) - H(u*, a*))` with the costate of
/// `value`. The first entry is `-(a-a*)'R_a(a-a*) <= 0`, the second
/// `(u-u*)'R_u(u-u*) >= 0`.
pub fn saddle_gap(
    model: &GameModel,
    value: &dyn ValueFunction,
    x: &StateVec,
    u: &StateVec,
    a: &StateVec,
) -> Result<(f64, f64)> {
    let local = model.local(x)?;
    let p = value.gradient(x)?;
    let us = local.control(&p);
    let as_ = local.adversary(&p);
    let h_star = model.hamiltonian(x, &us, &as_, &p)?;
    let h_adv = model.hamiltonian(x, &us, a, &p)?;
    let h_ctl = model.hamiltonian(x, u, &as_, &p)?;
    Ok((h_adv - h_star, h_ctl - h_star))
}
