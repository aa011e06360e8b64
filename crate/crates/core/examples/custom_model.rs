//! A user-defined game: implement `AffineDynamics` and `RunningCost`, wrap
//! them in a `GameModel`, and simulate with Nash feedback from any value
//! function.
//!
//! Here: a damped double integrator on the strip |x1| < 1, quadratic costs,
//! and the candidate value V = x'Px / (1 - x1^2).
//!
//! cargo run --release --example custom_model

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ptgame::model::{AffineDynamics, RunningCost, SafeSet, SafeSetKind, SamplingBox};
use ptgame::strategies::saddle_gap;
use ptgame::{integrate, GameModel, NashFeedback, SimConfig, StateVec, ValueFunction};

struct DoubleIntegrator;

impl AffineDynamics for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn adversary_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &StateVec) -> StateVec {
        DVector::from_column_slice(&[x[1], -0.5 * x[1]])
    }
    fn control_gain(&self, _: &StateVec) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
    fn adversary_gain(&self, _: &StateVec) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 0.3])
    }
}

struct Quadratic;

impl RunningCost for Quadratic {
    fn state_cost(&self, x: &StateVec) -> f64 {
        x.norm_squared()
    }
    fn control_cross(&self, _: &StateVec) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn adversary_cross(&self, _: &StateVec) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn control_weight(&self, _: &StateVec) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
    fn adversary_weight(&self, _: &StateVec) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 4.0)
    }
}

struct BarrierQuadratic;

impl ValueFunction for BarrierQuadratic {
    fn value(&self, x: &StateVec) -> ptgame::Result<f64> {
        let s = 1.0 - x[0] * x[0];
        Ok((1.5 * x[0] * x[0] + x[0] * x[1] + x[1] * x[1]) / s)
    }
    fn gradient(&self, x: &StateVec) -> ptgame::Result<StateVec> {
        let s = 1.0 - x[0] * x[0];
        let q = 1.5 * x[0] * x[0] + x[0] * x[1] + x[1] * x[1];
        Ok(DVector::from_column_slice(&[
            (3.0 * x[0] + x[1]) / s + q * 2.0 * x[0] / (s * s),
            (x[0] + 2.0 * x[1]) / s,
        ]))
    }
}

fn main() -> ptgame::Result<()> {
    let set = SafeSet::new(
        |x: &StateVec| 1.0 - x[0] * x[0],
        SafeSetKind::Unbounded,
        SamplingBox::new(vec![-1.0, -2.0], vec![1.0, 2.0])?,
    )?;
    let model = GameModel::new(Arc::new(DoubleIntegrator), Arc::new(Quadratic), set)?;
    let value = BarrierQuadratic;
    let pair = NashFeedback::new(&model, &value);

    let x0 = DVector::from_column_slice(&[0.8, 0.5]);
    let traj = integrate(&model, &pair, &x0, &SimConfig::with_horizon(8.0))?;
    println!(
        "from {:?}: |x(8)| = {:.3e}, min s = {:.3e}, status {:?}",
        x0.as_slice(),
        traj.final_state().norm(),
        traj.min_safety_level,
        traj.status
    );

    // Saddle gaps for an arbitrary deviation at x0.
    let (adv, ctl) = saddle_gap(&model, &value, &x0, &DVector::from_element(1, 1.0), &DVector::from_element(1, -1.0))?;
    println!("saddle gaps at x0: adversary {adv:.4} (<= 0), controller {ctl:.4} (>= 0)");
    Ok(())
}
