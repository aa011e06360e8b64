//! Affine zero-sum game model: dynamics, running cost, safe set and the
//! Hamiltonian.
//!
//! The closed-loop system is
//!
//! ```text
//! xdot = f(x) + G(x) u + K(x) a
//! ```
//!
//! with running cost `L(x) + L_u(x) u + L_a(x) a + u'R_u(x)u - a'R_a(x)a`.
//! The controller `u` minimizes, the adversary `a` maximizes.
//!
//! Most of the numerical work happens on a [`LocalGame`], which freezes every
//! state-dependent piece of the model at one point `x`. The value-gradient
//! dependent quantities (strategies, HJI residual, decrease condition) are then
//! cheap closed-form expressions of the costate `p = V'(x)^T`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State, input and costate vectors.
pub type StateVec = DVector<f64>;

/// Drift and input gains of an affine system.
pub trait AffineDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn adversary_dim(&self) -> usize;

    /// System parameters `[theta_f; theta_G; theta_K]`. Empty for the built-in
    /// instances.
    fn system_params(&self) -> &[f64] {
        &[]
    }

    fn drift(&self, x: &StateVec) -> StateVec;
    /// `n x m_u`
    fn control_gain(&self, x: &StateVec) -> DMatrix<f64>;
    /// `n x m_a`
    fn adversary_gain(&self, x: &StateVec) -> DMatrix<f64>;
}

/// Nonquadratic running cost pieces. Cross terms are returned as column vectors
/// holding the entries of the row vectors `L_u(x)` and `L_a(x)`.
pub trait RunningCost: Send + Sync {
    fn state_cost(&self, x: &StateVec) -> f64;
    fn control_cross(&self, x: &StateVec) -> StateVec;
    fn adversary_cross(&self, x: &StateVec) -> StateVec;
    fn control_weight(&self, x: &StateVec) -> DMatrix<f64>;
    fn adversary_weight(&self, x: &StateVec) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafeSetKind {
    Bounded,
    Unbounded,
}

/// Axis-aligned box used to draw collocation points and initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplingBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::config("sampling box bounds must have equal, nonzero length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::config("sampling box needs lower < upper in every coordinate"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

type LevelFn = dyn Fn(&StateVec) -> f64 + Send + Sync;

/// Admissible states `{x : s(x) > 0}`.
#[derive(Clone)]
pub struct SafeSet {
    level: Arc<LevelFn>,
    kind: SafeSetKind,
    sampling_box: SamplingBox,
}

impl fmt::Debug for SafeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SafeSet")
            .field("kind", &self.kind)
            .field("sampling_box", &self.sampling_box)
            .finish_non_exhaustive()
    }
}

impl SafeSet {
    pub fn new(
        level: impl Fn(&StateVec) -> f64 + Send + Sync + 'static,
        kind: SafeSetKind,
        sampling_box: SamplingBox,
    ) -> Result<Self> {
        let set = Self {
            level: Arc::new(level),
            kind,
            sampling_box,
        };
        let origin = StateVec::zeros(set.sampling_box.dim());
        let s0 = set.level(&origin);
        if !(s0 > 0.0) {
            return Err(Error::config(format!("safe set must contain the origin, s(0) = {s0}")));
        }
        Ok(set)
    }

    pub fn level(&self, x: &StateVec) -> f64 {
        (self.level)(x)
    }

    pub fn contains(&self, x: &StateVec) -> bool {
        self.level(x) > 0.0
    }

    pub fn kind(&self) -> SafeSetKind {
        self.kind
    }

    pub fn sampling_box(&self) -> &SamplingBox {
        &self.sampling_box
    }

    pub fn dim(&self) -> usize {
        self.sampling_box.dim()
    }

    pub(crate) fn check(&self, x: &StateVec) -> Result<()> {
        let s = self.level(x);
        if s > 0.0 {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "state {:?} is outside the safe set (s = {s})",
                x.as_slice()
            )))
        }
    }
}

/// A complete game instance: dynamics, cost and admissible set.
#[derive(Clone)]
pub struct GameModel {
    dynamics: Arc<dyn AffineDynamics>,
    cost: Arc<dyn RunningCost>,
    safe_set: SafeSet,
}

impl fmt::Debug for GameModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameModel")
            .field("n", &self.state_dim())
            .field("m_u", &self.control_dim())
            .field("m_a", &self.adversary_dim())
            .field("safe_set", &self.safe_set)
            .finish_non_exhaustive()
    }
}

impl GameModel {
    /// Builds a model and validates it eagerly: dimensions, `f(0) = 0`,
    /// zero-at-origin cost terms and symmetric positive definite weights at the
    /// origin and on a coarse grid of the sampling box inside the safe set.
    pub fn new(
        dynamics: Arc<dyn AffineDynamics>,
        cost: Arc<dyn RunningCost>,
        safe_set: SafeSet,
    ) -> Result<Self> {
        let model = Self {
            dynamics,
            cost,
            safe_set,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        if self.safe_set.dim() != n {
            return Err(Error::config(format!(
                "safe set dimension {} does not match state dimension {n}",
                self.safe_set.dim()
            )));
        }
        let origin = StateVec::zeros(n);
        let f0 = self.dynamics.drift(&origin);
        if f0.len() != n {
            return Err(Error::config("drift has wrong dimension"));
        }
        if f0.iter().any(|v| *v != 0.0) {
            return Err(Error::config("drift must vanish at the origin"));
        }
        if self.cost.state_cost(&origin) != 0.0
            || self.cost.control_cross(&origin).iter().any(|v| *v != 0.0)
            || self.cost.adversary_cross(&origin).iter().any(|v| *v != 0.0)
        {
            return Err(Error::config("running cost terms L, L_u, L_a must vanish at the origin"));
        }

        let mut probes = vec![origin];
        let bx = self.safe_set.sampling_box();
        for i in 1..4 {
            for j in 1..4 {
                let mut x = StateVec::zeros(n);
                for k in 0..n {
                    let frac = if k % 2 == 0 { i as f64 / 4.0 } else { j as f64 / 4.0 };
                    x[k] = bx.lower[k] + frac * (bx.upper[k] - bx.lower[k]);
                }
                if self.safe_set.contains(&x) {
                    probes.push(x);
                }
            }
        }
        for x in &probes {
            self.local(x).map_err(|e| match e {
                Error::Numeric(m) => Error::Config(m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn adversary_dim(&self) -> usize {
        self.dynamics.adversary_dim()
    }

    pub fn dynamics(&self) -> &dyn AffineDynamics {
        self.dynamics.as_ref()
    }

    pub fn cost(&self) -> &dyn RunningCost {
        self.cost.as_ref()
    }

    pub fn safe_set(&self) -> &SafeSet {
        &self.safe_set
    }

    fn check_state_dim(&self, x: &StateVec) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::config(format!(
                "state has dimension {}, model expects {}",
                x.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn check_inputs(&self, u: &StateVec, a: &StateVec) -> Result<()> {
        if u.len() != self.control_dim() {
            return Err(Error::config(format!(
                "control has dimension {}, model expects {}",
                u.len(),
                self.control_dim()
            )));
        }
        if a.len() != self.adversary_dim() {
            return Err(Error::config(format!(
                "adversary input has dimension {}, model expects {}",
                a.len(),
                self.adversary_dim()
            )));
        }
        Ok(())
    }

    /// `f(x) + G(x)u + K(x)a`. Defined on all of `R^n`.
    pub fn rhs(&self, x: &StateVec, u: &StateVec, a: &StateVec) -> Result<StateVec> {
        self.check_state_dim(x)?;
        self.check_inputs(u, a)?;
        let d = self.dynamics.as_ref();
        Ok(d.drift(x) + d.control_gain(x) * u + d.adversary_gain(x) * a)
    }

    /// `L(x) + L_u(x)u + L_a(x)a + u'R_u u - a'R_a a` for `x` in the safe set.
    pub fn running_cost(&self, x: &StateVec, u: &StateVec, a: &StateVec) -> Result<f64> {
        self.check_state_dim(x)?;
        self.check_inputs(u, a)?;
        self.safe_set.check(x)?;
        let c = self.cost.as_ref();
        Ok(c.state_cost(x) + c.control_cross(x).dot(u) + c.adversary_cross(x).dot(a)
            + u.dot(&(c.control_weight(x) * u))
            - a.dot(&(c.adversary_weight(x) * a)))
    }

    /// `r(x,u,a) + lam' (f + G u + K a)`.
    pub fn hamiltonian(
        &self,
        x: &StateVec,
        u: &StateVec,
        a: &StateVec,
        lam: &StateVec,
    ) -> Result<f64> {
        if lam.len() != self.state_dim() {
            return Err(Error::config("costate dimension does not match state dimension"));
        }
        Ok(self.running_cost(x, u, a)? + lam.dot(&self.rhs(x, u, a)?))
    }

    /// Freezes all state-dependent pieces of the model at `x`.
    pub fn local(&self, x: &StateVec) -> Result<LocalGame> {
        self.check_state_dim(x)?;
        self.safe_set.check(x)?;
        let d = self.dynamics.as_ref();
        let c = self.cost.as_ref();
        let n = self.state_dim();
        let (mu, ma) = (self.control_dim(), self.adversary_dim());

        let g = d.control_gain(x);
        let k = d.adversary_gain(x);
        let lu = c.control_cross(x);
        let la = c.adversary_cross(x);
        let ru = c.control_weight(x);
        let ra = c.adversary_weight(x);
        if g.shape() != (n, mu) || k.shape() != (n, ma) {
            return Err(Error::config("input gain shapes do not match model dimensions"));
        }
        if lu.len() != mu || la.len() != ma || ru.shape() != (mu, mu) || ra.shape() != (ma, ma) {
            return Err(Error::config("cost term shapes do not match model dimensions"));
        }
        let ru_inv = spd_inverse(&ru, "control weight R_u")?;
        let ra_inv = spd_inverse(&ra, "adversary weight R_a")?;
        Ok(LocalGame {
            state_cost: c.state_cost(x),
            drift: d.drift(x),
            g,
            k,
            lu,
            la,
            ru,
            ra,
            ru_inv,
            ra_inv,
        })
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky. Failure is
/// reported, never regularized.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::numeric(format!("{name} is not symmetric")));
    }
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(Error::numeric(format!("{name} is not positive definite"))),
    }
}

/// Model pieces evaluated at a single state.
#[derive(Debug, Clone)]
pub struct LocalGame {
    pub state_cost: f64,
    pub drift: StateVec,
    pub g: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub lu: StateVec,
    pub la: StateVec,
    pub ru: DMatrix<f64>,
    pub ra: DMatrix<f64>,
    pub ru_inv: DMatrix<f64>,
    pub ra_inv: DMatrix<f64>,
}

impl LocalGame {
    /// `u* = -1/2 R_u^{-1} (L_u + V' G)^T` for costate `p = V'^T`.
    pub fn control(&self, p: &StateVec) -> StateVec {
        -0.5 * (&self.ru_inv * (&self.lu + self.g.tr_mul(p)))
    }

    /// `a* = +1/2 R_a^{-1} (L_a + V' K)^T`.
    pub fn adversary(&self, p: &StateVec) -> StateVec {
        0.5 * (&self.ra_inv * (&self.la + self.k.tr_mul(p)))
    }

    pub fn rhs(&self, u: &StateVec, a: &StateVec) -> StateVec {
        &self.drift + &self.g * u + &self.k * a
    }

    pub fn running_cost(&self, u: &StateVec, a: &StateVec) -> f64 {
        self.state_cost + self.lu.dot(u) + self.la.dot(a) + u.dot(&(&self.ru * u))
            - a.dot(&(&self.ra * a))
    }

    pub fn hamiltonian(&self, u: &StateVec, a: &StateVec, p: &StateVec) -> f64 {
        self.running_cost(u, a) + p.dot(&self.rhs(u, a))
    }

    /// Closed-loop drift `f + G u*(p) + K a*(p)`. This is also the gradient of
    /// [`LocalGame::hji_residual`] with respect to `p`.
    pub fn closed_loop_drift(&self, p: &StateVec) -> StateVec {
        self.rhs(&self.control(p), &self.adversary(p))
    }

    /// Steady-state HJI residual
    /// `L + V'f - 1/4 (V'G + L_u) R_u^{-1} (.)^T + 1/4 (V'K + L_a) R_a^{-1} (.)^T`.
    pub fn hji_residual(&self, p: &StateVec) -> f64 {
        let cu = &self.lu + self.g.tr_mul(p);
        let ca = &self.la + self.k.tr_mul(p);
        self.state_cost + p.dot(&self.drift) - 0.25 * cu.dot(&(&self.ru_inv * &cu))
            + 0.25 * ca.dot(&(&self.ra_inv * &ca))
    }

    /// `d/dp [p' F(p)] = F(p) + M p` where `M = -1/2 G R_u^{-1} G' + 1/2 K R_a^{-1} K'`.
    pub fn decrease_gradient(&self, p: &StateVec) -> StateVec {
        let m = -0.5 * (&self.g * &self.ru_inv * self.g.transpose())
            + 0.5 * (&self.k * &self.ra_inv * self.k.transpose());
        self.closed_loop_drift(p) + m * p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{ExampleKind, StrategyParams};
    use proptest::prelude::*;

    fn bounded() -> GameModel {
        ExampleKind::Bounded.model(StrategyParams::new(0.5, 1.5).unwrap()).unwrap()
    }

    fn v(xs: &[f64]) -> StateVec {
        StateVec::from_column_slice(xs)
    }

    #[test]
    fn rhs_examples() {
        let m = bounded();
        let z = v(&[0.0, 0.0]);
        assert_eq!(m.rhs(&z, &z, &z).unwrap(), z);
        assert_eq!(m.rhs(&v(&[-0.5, 0.5]), &z, &z).unwrap(), v(&[0.5, -0.5]));
        assert_eq!(
            m.rhs(&v(&[0.3, -0.2]), &v(&[1.0, 1.0]), &v(&[-1.0, -1.0])).unwrap(),
            v(&[0.0, 0.0])
        );
    }

    #[test]
    fn rhs_rejects_bad_dimensions() {
        let m = bounded();
        let err = m.rhs(&v(&[0.1, 0.1]), &v(&[0.0]), &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = m.rhs(&v(&[0.1]), &v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn running_cost_examples() {
        let m = bounded();
        let z = v(&[0.0, 0.0]);
        assert_eq!(m.running_cost(&z, &z, &z).unwrap(), 0.0);

        let x = v(&[0.3, -0.4]);
        assert_eq!(m.running_cost(&x, &z, &z).unwrap(), m.cost().state_cost(&x));

        let x = v(&[0.5, 0.0]);
        let u = v(&[1.0, 0.0]);
        let expected = m.cost().state_cost(&x) + m.cost().control_cross(&x)[0] + 0.25;
        assert!((m.running_cost(&x, &u, &z).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn running_cost_outside_safe_set_is_domain_error() {
        let m = bounded();
        let z = v(&[0.0, 0.0]);
        let err = m.running_cost(&v(&[1.0, 0.0]), &z, &z).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn hamiltonian_trivial_cases() {
        let m = bounded();
        let z = v(&[0.0, 0.0]);
        assert_eq!(m.hamiltonian(&z, &z, &z, &v(&[3.0, -7.0])).unwrap(), 0.0);
        let x = v(&[0.2, 0.6]);
        let u = v(&[0.4, -1.0]);
        let a = v(&[2.0, 0.1]);
        assert_eq!(
            m.hamiltonian(&x, &u, &a, &z).unwrap(),
            m.running_cost(&x, &u, &a).unwrap()
        );
    }

    #[test]
    fn local_game_matches_model() {
        let m = bounded();
        let x = v(&[-0.35, 0.7]);
        let u = v(&[0.4, -1.0]);
        let a = v(&[2.0, 0.1]);
        let p = v(&[0.9, -1.3]);
        let local = m.local(&x).unwrap();
        let h = m.hamiltonian(&x, &u, &a, &p).unwrap();
        assert!((local.hamiltonian(&u, &a, &p) - h).abs() < 1e-13);
    }

    #[test]
    fn non_positive_definite_weight_is_rejected() {
        struct Bad;
        impl RunningCost for Bad {
            fn state_cost(&self, _: &StateVec) -> f64 {
                0.0
            }
            fn control_cross(&self, _: &StateVec) -> StateVec {
                StateVec::zeros(1)
            }
            fn adversary_cross(&self, _: &StateVec) -> StateVec {
                StateVec::zeros(1)
            }
            fn control_weight(&self, _: &StateVec) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
            fn adversary_weight(&self, _: &StateVec) -> DMatrix<f64> {
                -DMatrix::identity(1, 1)
            }
        }
        struct Scalar;
        impl AffineDynamics for Scalar {
            fn state_dim(&self) -> usize {
                1
            }
            fn control_dim(&self) -> usize {
                1
            }
            fn adversary_dim(&self) -> usize {
                1
            }
            fn drift(&self, x: &StateVec) -> StateVec {
                -x
            }
            fn control_gain(&self, _: &StateVec) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
            fn adversary_gain(&self, _: &StateVec) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
        }
        let set = SafeSet::new(
            |x: &StateVec| 1.0 - x[0] * x[0],
            SafeSetKind::Bounded,
            SamplingBox::new(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let err = GameModel::new(Arc::new(Scalar), Arc::new(Bad), set).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("R_a")), "{err}");
    }

    proptest! {
        #[test]
        fn rhs_is_affine_in_inputs(
            x in prop::array::uniform2(-0.99f64..0.99),
            u1 in prop::array::uniform2(-10f64..10.0),
            u2 in prop::array::uniform2(-10f64..10.0),
            a in prop::array::uniform2(-10f64..10.0),
        ) {
            let m = bounded();
            let (x, u1, u2, a) = (v(&x), v(&u1), v(&u2), v(&a));
            let lhs = m.rhs(&x, &(&u1 + &u2), &a).unwrap() - m.rhs(&x, &u2, &a).unwrap();
            let rhs = m.dynamics().control_gain(&x) * &u1;
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }

        #[test]
        fn hamiltonian_is_convex_in_u_concave_in_a(
            x in prop::array::uniform2(-0.95f64..0.95),
            u in prop::array::uniform2(-5f64..5.0),
            a in prop::array::uniform2(-5f64..5.0),
            lam in prop::array::uniform2(-5f64..5.0),
            d in prop::array::uniform2(-1f64..1.0),
        ) {
            let m = bounded();
            let (x, u, a, lam, d) = (v(&x), v(&u), v(&a), v(&lam), v(&d));
            prop_assume!(d.norm() > 0.1);
            let h = 1e-3;
            let hu = |t: f64| m.hamiltonian(&x, &(&u + t * &d), &a, &lam).unwrap();
            let ha = |t: f64| m.hamiltonian(&x, &u, &(&a + t * &d), &lam).unwrap();
            let second_u = (hu(h) - 2.0 * hu(0.0) + hu(-h)) / (h * h);
            let second_a = (ha(h) - 2.0 * ha(0.0) + ha(-h)) / (h * h);
            let ru = d.dot(&(m.cost().control_weight(&x) * &d));
            let ra = d.dot(&(m.cost().adversary_weight(&x) * &d));
            prop_assert!((second_u - 2.0 * ru).abs() < 1e-5 * (1.0 + ru));
            prop_assert!((second_a + 2.0 * ra).abs() < 1e-5 * (1.0 + ra));
            prop_assert!(second_u > 0.0 && second_a < 0.0);
        }
    }
}
