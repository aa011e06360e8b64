//! Closed-form values, barrier candidates and the analytic oracles built on
//! them (HJI residual, inverse-optimal state cost, decrease margin).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{check_interior, ExampleKind};
use crate::model::{GameModel, StateVec};
use crate::ptp::PredefinedTimeParams;

/// A differentiable value function on the safe set.
pub trait ValueFunction: Send + Sync {
    fn value(&self, x: &StateVec) -> Result<f64>;
    /// `V'(x)^T`.
    fn gradient(&self, x: &StateVec) -> Result<StateVec>;
}

/// Closed-form value of one of the built-in games.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactValue {
    kind: ExampleKind,
}

impl ExactValue {
    pub fn new(kind: ExampleKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> ExampleKind {
        self.kind
    }
}

impl ValueFunction for ExactValue {
    fn value(&self, x: &StateVec) -> Result<f64> {
        self.kind.value(x.as_slice())
    }

    fn gradient(&self, x: &StateVec) -> Result<StateVec> {
        value_gradient(self, x)
    }
}

/// `x1^2 / (2 (1 - x1^2)) + x2^2 / (2 (1 - x2^2))`.
pub fn bounded_value(x: &StateVec) -> Result<f64> {
    ExampleKind::Bounded.value(x.as_slice())
}

/// `|x|^2 / (2 (1 - x2^2))`.
pub fn unbounded_value(x: &StateVec) -> Result<f64> {
    ExampleKind::Unbounded.value(x.as_slice())
}

pub fn value_gradient(exact: &ExactValue, x: &StateVec) -> Result<StateVec> {
    let g = exact.kind.value_gradient(x.as_slice())?;
    Ok(StateVec::from_column_slice(&g))
}

/// `L(x) = u*' R_u u* - V' f - a*' R_a a*`, the state cost that makes the
/// pair derived from `value` a saddle point.
pub fn inverse_state_cost(model: &GameModel, value: &dyn ValueFunction, x: &StateVec) -> Result<f64> {
    let local = model.local(x)?;
    let p = value.gradient(x)?;
    let u = local.control(&p);
    let a = local.adversary(&p);
    Ok(u.dot(&(&local.ru * &u)) - p.dot(&local.drift) - a.dot(&(&local.ra * &a)))
}

/// Steady-state HJI residual of `value` at `x`.
pub fn hji_residual(model: &GameModel, value: &dyn ValueFunction, x: &StateVec) -> Result<f64> {
    let local = model.local(x)?;
    Ok(local.hji_residual(&value.gradient(x)?))
}

/// `V' F(x, u*, a*) + (gamma/T_p)(alpha V^p + beta V^q)^r`. Nonpositive iff the
/// predefined-time decrease condition holds at `x`.
pub fn lyapunov_decrease_margin(
    model: &GameModel,
    value: &dyn ValueFunction,
    ptp: &PredefinedTimeParams,
    x: &StateVec,
) -> Result<f64> {
    let local = model.local(x)?;
    let p = value.gradient(x)?;
    let v = value.value(x)?;
    Ok(p.dot(&local.closed_loop_drift(&p)) + ptp.decay(v))
}

/// Barrier factor `B` of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Barrier {
    /// `x1^2/(1-|x1|) + x2^2/(1-|x2|)` on the open unit box.
    Bounded,
    /// `|x|^2 / (sqrt(2) - sqrt(x2^2 + 1))` on the strip `|x2| < 1`.
    Unbounded,
}

impl Barrier {
    pub fn for_example(kind: ExampleKind) -> Self {
        match kind {
            ExampleKind::Bounded => Barrier::Bounded,
            ExampleKind::Unbounded => Barrier::Unbounded,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Barrier::Bounded => "bounded",
            Barrier::Unbounded => "unbounded",
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        let kind = match self {
            Barrier::Bounded => ExampleKind::Bounded,
            Barrier::Unbounded => ExampleKind::Unbounded,
        };
        check_interior(kind, x).map(|_| ())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            Barrier::Bounded => x.iter().map(|v| v * v / (1.0 - v.abs())).sum(),
            Barrier::Unbounded => {
                let d = std::f64::consts::SQRT_2 - (x[1] * x[1] + 1.0).sqrt();
                (x[0] * x[0] + x[1] * x[1]) / d
            }
        })
    }

    /// Gradient of `B`. The `|x_i|` kink of the bounded barrier uses
    /// `d|x|/dx = sgn(x)` with `sgn(0) = 0`; the affected term vanishes there
    /// anyway since it carries a factor `x_i^2`.
    pub fn gradient(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.check(x)?;
        Ok(match self {
            Barrier::Bounded => {
                let comp = |v: f64| {
                    let d = 1.0 - v.abs();
                    let sgn = if v == 0.0 { 0.0 } else { v.signum() };
                    (2.0 * v * d + v * v * sgn) / (d * d)
                };
                [comp(x[0]), comp(x[1])]
            }
            Barrier::Unbounded => {
                let root = (x[1] * x[1] + 1.0).sqrt();
                let d = std::f64::consts::SQRT_2 - root;
                let nrm2 = x[0] * x[0] + x[1] * x[1];
                [2.0 * x[0] / d, 2.0 * x[1] / d + nrm2 * (x[1] / root) / (d * d)]
            }
        })
    }
}

/// Positive wrapper `h` applied to the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wrapper {
    /// `h(y) = e^y`
    Exp,
    /// `h(y) = 1 / (1 + e^{-y})`
    Logistic,
}

impl Wrapper {
    pub fn for_example(kind: ExampleKind) -> Self {
        match kind {
            ExampleKind::Bounded => Wrapper::Exp,
            ExampleKind::Unbounded => Wrapper::Logistic,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Wrapper::Exp => "exp",
            Wrapper::Logistic => "logistic",
        }
    }

    /// `(h, h', h'')` at `y`.
    #[inline]
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        match self {
            Wrapper::Exp => {
                let e = y.exp();
                (e, e, e)
            }
            Wrapper::Logistic => {
                let s = logistic(y);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
        }
    }
}

#[inline]
pub(crate) fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Barrier and wrapper pair used by the surrogate `h(V_NN(x)) B(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarrierCandidate {
    pub barrier: Barrier,
    pub wrapper: Wrapper,
}

impl BarrierCandidate {
    pub fn for_example(kind: ExampleKind) -> Self {
        Self {
            barrier: Barrier::for_example(kind),
            wrapper: Wrapper::for_example(kind),
        }
    }
}

pub(crate) fn require_finite(v: f64, what: &str, x: &StateVec) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("{what} is not finite at {:?}", x.as_slice())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::StrategyParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> StateVec {
        StateVec::from_column_slice(xs)
    }

    fn sample_interior(kind: ExampleKind, rng: &mut ChaCha8Rng, margin: f64) -> StateVec {
        let set = kind.safe_set();
        let bx = set.sampling_box().clone();
        loop {
            let x = v(&[
                rng.gen_range(bx.lower[0]..bx.upper[0]),
                rng.gen_range(bx.lower[1]..bx.upper[1]),
            ]);
            if set.level(&x) >= margin {
                return x;
            }
        }
    }

    #[test]
    fn closed_form_value_examples() {
        assert_eq!(bounded_value(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert!((bounded_value(&v(&[0.5, 0.0])).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((bounded_value(&v(&[0.8, 0.8])).unwrap() - 0.64 / 0.36).abs() < 1e-14);
        assert!(matches!(bounded_value(&v(&[1.0, 0.0])), Err(Error::Domain(_))));

        assert_eq!(unbounded_value(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(unbounded_value(&v(&[2.0, 0.0])).unwrap(), 2.0);
        assert!((unbounded_value(&v(&[1.0, 0.5])).unwrap() - 1.25 / 1.5).abs() < 1e-15);
        assert!(matches!(unbounded_value(&v(&[0.0, -1.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_examples() {
        let exact = ExactValue::new(ExampleKind::Bounded);
        assert_eq!(value_gradient(&exact, &v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        let g = value_gradient(&exact, &v(&[0.5, 0.0])).unwrap();
        assert_eq!(g[1], 0.0);
        assert!((g[0] - 0.5 / 0.5625).abs() < 1e-15);
        assert!((g[0] - 0.888_888_888_888_889).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [ExampleKind::Bounded, ExampleKind::Unbounded] {
            let exact = ExactValue::new(kind);
            for _ in 0..1000 {
                let x = sample_interior(kind, &mut rng, 0.01);
                let g = exact.gradient(&x).unwrap();
                for i in 0..2 {
                    let h = 1e-6 * x[i].abs().max(1e-2);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (exact.value(&xp).unwrap() - exact.value(&xm).unwrap()) / (2.0 * h);
                    let scale = g.amax().max(1e-3);
                    assert!((fd - g[i]).abs() <= 1e-6 * scale, "{kind:?} x={x:?} i={i} fd={fd} g={}", g[i]);
                }
            }
        }
    }

    #[test]
    fn inverse_state_cost_agrees_with_displayed_cost() {
        let params = StrategyParams::new(0.5, 1.5).unwrap();
        for kind in [ExampleKind::Bounded, ExampleKind::Unbounded] {
            let model = kind.model(params).unwrap();
            let exact = ExactValue::new(kind);
            assert_eq!(inverse_state_cost(&model, &exact, &v(&[0.0, 0.0])).unwrap(), 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for x in std::iter::once(v(&[0.5, 0.0]))
                .chain((0..200).map(|_| sample_interior(kind, &mut rng, 0.01)))
            {
                let lhs = inverse_state_cost(&model, &exact, &x).unwrap();
                let rhs = model.cost().state_cost(&x);
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{kind:?} {x:?}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn hji_residual_vanishes_for_exact_values() {
        let params = StrategyParams::new(0.5, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [ExampleKind::Bounded, ExampleKind::Unbounded] {
            let model = kind.model(params).unwrap();
            let exact = ExactValue::new(kind);
            for _ in 0..2000 {
                let x = sample_interior(kind, &mut rng, 0.01);
                let r = hji_residual(&model, &exact, &x).unwrap();
                assert!(r.abs() <= 1e-8, "{kind:?} {x:?}: {r}");
            }
        }
    }

    #[test]
    fn hji_residual_at_origin_is_state_cost() {
        struct Quadratic;
        impl ValueFunction for Quadratic {
            fn value(&self, x: &StateVec) -> Result<f64> {
                Ok(x.norm_squared())
            }
            fn gradient(&self, x: &StateVec) -> Result<StateVec> {
                Ok(2.0 * x)
            }
        }
        let model = ExampleKind::Bounded.model(StrategyParams::new(0.3, 2.0).unwrap()).unwrap();
        assert_eq!(hji_residual(&model, &Quadratic, &v(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn decrease_margin_nonpositive_for_exact_values() {
        let params = StrategyParams::new(0.5, 1.5).unwrap();
        let ptp = PredefinedTimeParams::from_strategy_exponents(0.5, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in [ExampleKind::Bounded, ExampleKind::Unbounded] {
            let model = kind.model(params).unwrap();
            let exact = ExactValue::new(kind);
            assert_eq!(lyapunov_decrease_margin(&model, &exact, &ptp, &v(&[0.0, 0.0])).unwrap(), 0.0);
            for _ in 0..2000 {
                let x = sample_interior(kind, &mut rng, 0.01);
                let m = lyapunov_decrease_margin(&model, &exact, &ptp, &x).unwrap();
                assert!(m <= 1e-10, "{kind:?} {x:?}: {m}");
            }
        }
    }

    #[test]
    fn bounded_barrier_diverges_toward_boundary() {
        let b = Barrier::Bounded;
        assert_eq!(b.value(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(b.gradient(&[0.0, 0.0]).unwrap(), [0.0, 0.0]);
        for dir in [[1.0, 0.0], [-1.0, 0.3], [0.7, -1.0], [1.0, 1.0]] {
            let mut prev = 0.0;
            for k in 1..=12 {
                let t = 1.0 - 0.5f64.powi(k);
                let x = [t * dir[0], t * dir[1]];
                let val = b.value(&x).unwrap();
                assert!(val > prev);
                prev = val;
            }
            assert!(prev > 1e3);
        }
    }

    #[test]
    fn unbounded_barrier_positive_and_coercive() {
        let b = Barrier::Unbounded;
        assert_eq!(b.value(&[0.0, 0.0]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.gen_range(-50.0..50.0), rng.gen_range(-0.999..0.999)];
            assert!(b.value(&x).unwrap() > 0.0);
        }
        // |x2| -> 1
        let mut prev = 0.0;
        for k in 1..=12 {
            let val = b.value(&[0.3, 1.0 - 0.5f64.powi(k)]).unwrap();
            assert!(val > prev);
            prev = val;
        }
        assert!(prev > 1e3);
        // |x| -> inf with x2 fixed
        let mut prev = 0.0;
        for k in 0..12 {
            let val = b.value(&[2f64.powi(k), 0.4]).unwrap();
            assert!(val > prev);
            prev = val;
        }
        assert!(prev > 1e6);
    }

    #[test]
    fn barrier_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (b, kind) in [(Barrier::Bounded, ExampleKind::Bounded), (Barrier::Unbounded, ExampleKind::Unbounded)] {
            for _ in 0..500 {
                let x = sample_interior(kind, &mut rng, 0.01);
                let g = b.gradient(x.as_slice()).unwrap();
                for i in 0..2 {
                    let h = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (b.value(xp.as_slice()).unwrap() - b.value(xm.as_slice()).unwrap()) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-6 * g[0].abs().max(g[1].abs()).max(1.0));
                }
            }
        }
    }

    #[test]
    fn wrapper_derivatives() {
        for w in [Wrapper::Exp, Wrapper::Logistic] {
            for y in [-3.0, -0.2, 0.0, 1.1, 4.0] {
                let (h, d1, d2) = w.eval(y);
                assert!(h > 0.0);
                let e = 1e-5;
                let fd1 = (w.eval(y + e).0 - w.eval(y - e).0) / (2.0 * e);
                let fd2 = (w.eval(y + e).1 - w.eval(y - e).1) / (2.0 * e);
                assert!((fd1 - d1).abs() < 1e-8 * (1.0 + d1.abs()));
                assert!((fd2 - d2).abs() < 1e-8 * (1.0 + d2.abs()));
            }
        }
    }
}
