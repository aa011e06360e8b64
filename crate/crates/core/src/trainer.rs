//! Constrained physics-informed training of the value surrogate.
//!
//! Loss: `E(w) = sum_x rho(x, w)^2`, with `rho` the steady-state HJI residual
//! of the surrogate. Constraint: `l(x, w) <= 0`, the predefined-time decrease
//! condition. The augmented-Lagrangian outer loop minimizes
//!
//! ```text
//! E_k(w) = E(w) + sum_x [ mu * 1{l >= 0 or lambda(x) > 0} * l^2 + lambda(x) * l ]
//! ```
//!
//! with L-BFGS, then sets `mu <- delta mu` and
//! `lambda(x) <- max(0, lambda(x) + 2 mu_prev l(x, w))`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameModel, LocalGame, StateVec};
use crate::net::{loss_param_gradient, ParametricValue, PointLoss};
use crate::optim::{minimize, LbfgsConfig, Termination};
use crate::ptp::PredefinedTimeParams;

/// Floor for the base of the fractional powers in the constraint's slope.
const DECAY_FLOOR: f64 = 1e-12;

/// Sampled interior states with the model frozen at each of them.
#[derive(Debug, Clone)]
pub struct CollocationSet {
    points: Vec<StateVec>,
    local: Vec<LocalGame>,
    margin: f64,
}

impl CollocationSet {
    /// Uniform samples over the safe set's sampling box, rejected unless
    /// `s(x) >= margin`.
    pub fn sample(model: &GameModel, count: usize, margin: f64, seed: u64) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::config("collocation margin must be positive"));
        }
        let set = model.safe_set();
        let bx = set.sampling_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while points.len() < count {
            attempts += 1;
            if attempts > 1000 * count.max(1) {
                return Err(Error::config("collocation sampling rejected too many candidates; margin too large?"));
            }
            let x = StateVec::from_iterator(
                bx.dim(),
                (0..bx.dim()).map(|k| rng.gen_range(bx.lower[k]..bx.upper[k])),
            );
            if set.level(&x) >= margin {
                points.push(x);
            }
        }
        Self::from_points(model, points, margin)
    }

    pub fn from_points(model: &GameModel, points: Vec<StateVec>, margin: f64) -> Result<Self> {
        let mut local = Vec::with_capacity(points.len());
        for x in &points {
            if model.safe_set().level(x) < margin {
                return Err(Error::domain(format!(
                    "collocation point {:?} violates the margin {margin}",
                    x.as_slice()
                )));
            }
            local.push(model.local(x)?);
        }
        Ok(Self { points, local, margin })
    }

    pub fn points(&self) -> &[StateVec] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn local(&self, i: usize) -> &LocalGame {
        &self.local[i]
    }
}

/// How the penalty indicator `1{l >= 0 or lambda > 0}` is evaluated during an
/// inner minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndicatorMode {
    /// At the current iterate `w`.
    Current,
    /// Once per outer iteration, at `w_{k-1}`.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub mu: f64,
    pub lambda: Vec<f64>,
    pub growth: f64,
    pub outer_iter: usize,
}

impl Multipliers {
    pub fn new(mu0: f64, growth: f64, points: usize) -> Result<Self> {
        if !(mu0 > 0.0) {
            return Err(Error::config(format!("mu0 must be positive, got {mu0}")));
        }
        if !(growth > 1.0) {
            return Err(Error::config(format!("growth must exceed 1, got {growth}")));
        }
        Ok(Self {
            mu: mu0,
            lambda: vec![0.0; points],
            growth,
            outer_iter: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mu0: f64,
    pub growth: f64,
    pub outer_iterations: usize,
    pub collocation_points: usize,
    pub margin: f64,
    pub indicator: IndicatorMode,
    pub inner: LbfgsConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(Error::config("mu0 must be positive"));
        }
        if !(self.growth > 1.0) {
            return Err(Error::config("growth must exceed 1"));
        }
        if self.collocation_points == 0 {
            return Err(Error::config("collocation_points must be positive"));
        }
        if !(self.margin > 0.0) {
            return Err(Error::config("margin must be positive"));
        }
        if self.inner.memory == 0 {
            return Err(Error::config("inner optimizer memory must be positive"));
        }
        Ok(())
    }
}

/// The training problem: model, surrogate, rate parameters and collocation
/// points.
pub struct Problem<'a, P: ParametricValue> {
    pub model: &'a GameModel,
    pub surrogate: &'a P,
    pub ptp: &'a PredefinedTimeParams,
    pub colset: &'a CollocationSet,
}

impl<P: ParametricValue> Clone for Problem<'_, P> {
    fn clone(&self) -> Self {
        *self
    }
}
impl<P: ParametricValue> Copy for Problem<'_, P> {}

/// Residual `rho`, constraint `l` and their partials at one point.
struct PointEval {
    rho: f64,
    drho_dp: StateVec,
    l: f64,
    dl_dv: f64,
    dl_dp: StateVec,
}

fn eval_point(local: &LocalGame, ptp: &PredefinedTimeParams, value: f64, grad: &[f64]) -> PointEval {
    let p = StateVec::from_column_slice(grad);
    let drift = local.closed_loop_drift(&p);
    PointEval {
        rho: local.hji_residual(&p),
        l: p.dot(&drift) + ptp.decay(value),
        dl_dv: if value > 0.0 { ptp.decay_slope(value, DECAY_FLOOR) } else { 0.0 },
        dl_dp: local.decrease_gradient(&p),
        drho_dp: drift,
    }
}

fn finite_or_report(v: f64, what: &str, x: &StateVec) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("{what} overflowed at collocation point {:?}", x.as_slice())))
    }
}

impl<P: ParametricValue> Problem<'_, P> {
    /// `E(w)`.
    pub fn hji_loss(&self, w: &[f64]) -> Result<f64> {
        Ok(self.hji_loss_and_gradient(w)?.0)
    }

    pub fn hji_loss_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pts = self.colset.points();
        loss_param_gradient(self.surrogate, pts, w, |i, v, g| {
            let e = eval_point(self.colset.local(i), self.ptp, v, g);
            let rho = finite_or_report(e.rho, "HJI residual", &pts[i])?;
            Ok(PointLoss {
                loss: rho * rho,
                dvalue: 0.0,
                dgrad: (2.0 * rho * e.drho_dp).as_slice().to_vec(),
            })
        })
    }

    /// HJI residual at every collocation point.
    pub fn residuals(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.per_point(w, |e| e.rho)
    }

    /// `l(x, w)` at every collocation point.
    pub fn constraints(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.per_point(w, |e| e.l)
    }

    fn per_point(&self, w: &[f64], pick: impl Fn(&PointEval) -> f64) -> Result<Vec<f64>> {
        self.colset
            .points()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let tape = self.surrogate.record(x, w)?;
                let e = eval_point(self.colset.local(i), self.ptp, P::tape_value(&tape), P::tape_gradient(&tape));
                Ok(pick(&e))
            })
            .collect()
    }

    /// `E_k(w)` and its gradient. `frozen` holds the indicator per point when
    /// it is evaluated at `w_{k-1}`.
    pub fn augmented_loss_and_gradient(
        &self,
        w: &[f64],
        mult: &Multipliers,
        frozen: Option<&[bool]>,
    ) -> Result<(f64, Vec<f64>)> {
        let pts = self.colset.points();
        loss_param_gradient(self.surrogate, pts, w, |i, v, g| {
            let e = eval_point(self.colset.local(i), self.ptp, v, g);
            let rho = finite_or_report(e.rho, "HJI residual", &pts[i])?;
            let l = finite_or_report(e.l, "decrease constraint", &pts[i])?;
            let lam = mult.lambda[i];
            let active = match frozen {
                Some(ind) => ind[i],
                None => l >= 0.0 || lam > 0.0,
            };
            let pen_mu = if active { mult.mu } else { 0.0 };
            let loss = rho * rho + pen_mu * l * l + lam * l;
            let dl = 2.0 * pen_mu * l + lam;
            let dgrad = 2.0 * rho * &e.drho_dp + dl * &e.dl_dp;
            Ok(PointLoss {
                loss,
                dvalue: dl * e.dl_dv,
                dgrad: dgrad.as_slice().to_vec(),
            })
        })
    }

    pub fn augmented_loss(&self, w: &[f64], mult: &Multipliers) -> Result<f64> {
        Ok(self.augmented_loss_and_gradient(w, mult, None)?.0)
    }
}

/// `l(x, w)` at a single state.
pub fn constraint<P: ParametricValue>(
    surrogate: &P,
    model: &GameModel,
    ptp: &PredefinedTimeParams,
    x: &StateVec,
    w: &[f64],
) -> Result<f64> {
    let local = model.local(x)?;
    let tape = surrogate.record(x, w)?;
    Ok(eval_point(&local, ptp, P::tape_value(&tape), P::tape_gradient(&tape)).l)
}

/// `mu <- growth mu`, `lambda(x) <- max(0, lambda(x) + 2 mu_prev l(x))`.
pub fn update_multipliers(mult: &Multipliers, constraint_values: &[f64]) -> Multipliers {
    let mu_prev = mult.mu;
    Multipliers {
        mu: mult.growth * mu_prev,
        lambda: mult
            .lambda
            .iter()
            .zip(constraint_values)
            .map(|(lam, l)| (lam + 2.0 * mu_prev * l).max(0.0))
            .collect(),
        growth: mult.growth,
        outer_iter: mult.outer_iter + 1,
    }
}

/// Threshold above which a collocation point counts as violating the decrease
/// condition in reports.
pub const VIOLATION_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub outer_iter: usize,
    /// `E(w_k)`
    pub hji_loss: f64,
    pub max_constraint: f64,
    pub violated_fraction: f64,
    pub inner_iterations: usize,
    pub inner_termination: Termination,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingReport {
    pub records: Vec<IterationRecord>,
    /// Set when training stopped early; the records up to that point are kept.
    pub failure: Option<String>,
}

impl TrainingReport {
    pub const HEADER: &'static str = "outer_iter,E,max_l,violated_fraction,inner_iters,inner_status";

    /// Delimited-text body. Wall-clock times are excluded so the body is
    /// reproducible; see [`TrainingReport::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{},{}\n",
                r.outer_iter,
                r.hji_loss,
                r.max_constraint,
                r.violated_fraction,
                r.inner_iterations,
                r.inner_termination.name()
            ));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("outer_iter,wall_time\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.6}\n", r.outer_iter, r.wall_time));
        }
        out
    }
}

fn summarize(constraints: &[f64]) -> (f64, f64) {
    let max = constraints.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let violated = constraints.iter().filter(|l| **l > VIOLATION_THRESHOLD).count();
    (max, violated as f64 / constraints.len().max(1) as f64)
}

/// Runs the augmented-Lagrangian outer loop from `w0`.
///
/// `on_iteration(k, w_k, record)` is called after every outer iteration
/// (checkpointing hook). Returns the final parameters and the report; when an
/// inner minimization fails, the report carries the failure and the last good
/// parameters are returned.
pub fn train<P, F>(
    problem: Problem<'_, P>,
    config: &TrainConfig,
    w0: Vec<f64>,
    mut on_iteration: F,
) -> Result<(Vec<f64>, TrainingReport)>
where
    P: ParametricValue,
    F: FnMut(usize, &[f64], &IterationRecord) -> Result<()>,
{
    config.validate()?;
    let mut mult = Multipliers::new(config.mu0, config.growth, problem.colset.len())?;
    let mut w = w0;
    let mut report = TrainingReport::default();

    for k in 1..=config.outer_iterations {
        let start = Instant::now();
        let step = (|| -> Result<(Vec<f64>, crate::optim::MinimizeOutcome, Vec<f64>)> {
            let frozen = match config.indicator {
                IndicatorMode::Current => None,
                IndicatorMode::Frozen => {
                    let l_prev = problem.constraints(&w)?;
                    Some(
                        l_prev
                            .iter()
                            .zip(&mult.lambda)
                            .map(|(l, lam)| *l >= 0.0 || *lam > 0.0)
                            .collect::<Vec<bool>>(),
                    )
                }
            };
            let outcome = minimize(
                &w,
                |wt| problem.augmented_loss_and_gradient(wt, &mult, frozen.as_deref()),
                &config.inner,
            )?;
            let l_new = problem.constraints(&outcome.w)?;
            let w_new = outcome.w.clone();
            Ok((w_new, outcome, l_new))
        })();

        let (w_new, outcome, l_new) = match step {
            Ok(v) => v,
            Err(e) => {
                report.failure = Some(format!("outer iteration {k}: {e}"));
                return Ok((w, report));
            }
        };
        let e = match problem.hji_loss(&w_new) {
            Ok(e) => e,
            Err(err) => {
                report.failure = Some(format!("outer iteration {k}: {err}"));
                return Ok((w, report));
            }
        };
        let (max_l, frac) = summarize(&l_new);
        mult = update_multipliers(&mult, &l_new);
        w = w_new;
        let record = IterationRecord {
            outer_iter: k,
            hji_loss: e,
            max_constraint: max_l,
            violated_fraction: frac,
            inner_iterations: outcome.iterations,
            inner_termination: outcome.termination,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_iteration(k, &w, &record)?;
        report.records.push(record);
    }
    Ok((w, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{hji_residual, lyapunov_decrease_margin, BarrierCandidate, ExactValue};
    use crate::instances::{ExampleKind, StrategyParams};
    use crate::net::{Activation, MlpConfig, PassThrough, SurrogateValue};

    fn setup(kind: ExampleKind) -> (GameModel, PredefinedTimeParams) {
        (
            kind.model(StrategyParams::new(0.5, 1.5).unwrap()).unwrap(),
            PredefinedTimeParams::from_strategy_exponents(0.5, 1.5).unwrap(),
        )
    }

    #[test]
    fn collocation_respects_margin_and_seed() {
        let (model, _) = setup(ExampleKind::Bounded);
        let a = CollocationSet::sample(&model, 500, 0.05, 3).unwrap();
        let b = CollocationSet::sample(&model, 500, 0.05, 3).unwrap();
        assert_eq!(a.len(), 500);
        assert!(a.points().iter().all(|x| model.safe_set().level(x) >= 0.05));
        assert_eq!(a.points(), b.points());
        let (model, _) = setup(ExampleKind::Unbounded);
        let c = CollocationSet::sample(&model, 200, 0.01, 3).unwrap();
        assert!(c.points().iter().all(|x| x[0].abs() <= 2.0));
    }

    #[test]
    fn exact_value_zeroes_losses() {
        for kind in [ExampleKind::Bounded, ExampleKind::Unbounded] {
            let (model, ptp) = setup(kind);
            let colset = CollocationSet::sample(&model, 400, 0.01, 9).unwrap();
            let exact = PassThrough::new(ExactValue::new(kind), 2);
            let problem = Problem { model: &model, surrogate: &exact, ptp: &ptp, colset: &colset };
            assert!(problem.hji_loss(&[]).unwrap() <= 1e-12);
            let l = problem.constraints(&[]).unwrap();
            assert!(l.iter().all(|v| *v <= 1e-10));
            let mult = Multipliers::new(1e-4, 2.0, colset.len()).unwrap();
            assert!(problem.augmented_loss(&[], &mult).unwrap() <= 1e-12);
            // Agreement with the oracle-side functions.
            let ev = ExactValue::new(kind);
            for (i, x) in colset.points().iter().enumerate().take(50) {
                let direct = lyapunov_decrease_margin(&model, &ev, &ptp, x).unwrap();
                assert!((l[i] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
                let c = constraint(&exact, &model, &ptp, x, &[]).unwrap();
                assert_eq!(c, l[i]);
            }
            let r = problem.residuals(&[]).unwrap();
            assert!((r[0] - hji_residual(&model, &ev, &colset.points()[0]).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn constraint_vanishes_at_origin() {
        let (model, ptp) = setup(ExampleKind::Bounded);
        let s = SurrogateValue::new(
            MlpConfig { input_dim: 2, hidden_layers: 2, hidden_width: 4, activation: Activation::Tanh, init_seed: 0 },
            BarrierCandidate::for_example(ExampleKind::Bounded),
        )
        .unwrap();
        let w = s.init_params();
        let z = StateVec::zeros(2);
        assert_eq!(constraint(&s, &model, &ptp, &z, &w.0).unwrap(), 0.0);
    }

    /// One-point problem where `V = c |x|^2` is a pass-through with a known
    /// residual and constraint.
    struct Scaled(f64);
    impl crate::barrier::ValueFunction for Scaled {
        fn value(&self, x: &StateVec) -> Result<f64> {
            Ok(self.0 * x.norm_squared())
        }
        fn gradient(&self, x: &StateVec) -> Result<StateVec> {
            Ok(2.0 * self.0 * x)
        }
    }

    #[test]
    fn single_point_hji_loss_is_residual_squared() {
        let (model, ptp) = setup(ExampleKind::Bounded);
        let x = StateVec::from_column_slice(&[0.4, -0.3]);
        let colset = CollocationSet::from_points(&model, vec![x.clone()], 0.01).unwrap();
        let sv = PassThrough::new(Scaled(0.7), 2);
        let problem = Problem { model: &model, surrogate: &sv, ptp: &ptp, colset: &colset };
        let rho = hji_residual(&model, &Scaled(0.7), &x).unwrap();
        assert!((problem.hji_loss(&[]).unwrap() - rho * rho).abs() < 1e-15);
        assert!(problem.hji_loss(&[]).unwrap() >= 0.0);
    }

    #[test]
    fn augmented_loss_arithmetic() {
        // Compose E_k by hand from E and l at one point.
        let (model, ptp) = setup(ExampleKind::Bounded);
        let x = StateVec::from_column_slice(&[0.4, -0.3]);
        let colset = CollocationSet::from_points(&model, vec![x.clone()], 0.01).unwrap();
        for c in [0.05, 0.7, 3.0] {
            let sv = PassThrough::new(Scaled(c), 2);
            let problem = Problem { model: &model, surrogate: &sv, ptp: &ptp, colset: &colset };
            let e = problem.hji_loss(&[]).unwrap();
            let l = problem.constraints(&[]).unwrap()[0];
            for lam in [0.0, 0.2] {
                let mut mult = Multipliers::new(1.0, 2.0, 1).unwrap();
                mult.lambda[0] = lam;
                let got = problem.augmented_loss(&[], &mult).unwrap();
                let ind = if l >= 0.0 || lam > 0.0 { 1.0 } else { 0.0 };
                let want = e + ind * l * l + lam * l;
                assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "c={c} lam={lam}");
                if lam == 0.0 && l < 0.0 {
                    assert_eq!(got, e);
                }
            }
        }
    }

    #[test]
    fn multiplier_updates() {
        let mut m = Multipliers::new(1e-4, 2.0, 3).unwrap();
        assert_eq!(m.lambda, vec![0.0; 3]);
        for _ in 0..3 {
            m = update_multipliers(&m, &[-1.0, 0.0, 0.0]);
        }
        assert!((m.mu - 8e-4).abs() < 1e-18);
        assert_eq!(m.lambda[0], 0.0);
        assert_eq!(m.outer_iter, 3);

        let m = Multipliers { mu: 0.5, lambda: vec![0.1], growth: 2.0, outer_iter: 0 };
        let next = update_multipliers(&m, &[0.2]);
        assert!((next.lambda[0] - 0.3).abs() < 1e-15);
        assert_eq!(next.mu, 1.0);
        assert!(Multipliers::new(0.0, 2.0, 1).is_err());
        assert!(Multipliers::new(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn zero_outer_iterations_returns_initial_weights() {
        let (model, ptp) = setup(ExampleKind::Bounded);
        let s = SurrogateValue::new(
            MlpConfig { input_dim: 2, hidden_layers: 1, hidden_width: 4, activation: Activation::Tanh, init_seed: 5 },
            BarrierCandidate::for_example(ExampleKind::Bounded),
        )
        .unwrap();
        let colset = CollocationSet::sample(&model, 20, 0.05, 1).unwrap();
        let cfg = TrainConfig {
            mu0: 1e-4,
            growth: 2.0,
            outer_iterations: 0,
            collocation_points: 20,
            margin: 0.05,
            indicator: IndicatorMode::Current,
            inner: LbfgsConfig::default(),
            seed: 1,
        };
        let w0 = s.init_params().0;
        let problem = Problem { model: &model, surrogate: &s, ptp: &ptp, colset: &colset };
        let (w, report) = train(problem, &cfg, w0.clone(), |_, _, _| Ok(())).unwrap();
        assert_eq!(w, w0);
        assert!(report.records.is_empty());
    }

    #[test]
    fn short_training_reduces_loss_in_both_indicator_modes() {
        let (model, ptp) = setup(ExampleKind::Bounded);
        let s = SurrogateValue::new(
            MlpConfig { input_dim: 2, hidden_layers: 1, hidden_width: 8, activation: Activation::Tanh, init_seed: 5 },
            BarrierCandidate::for_example(ExampleKind::Bounded),
        )
        .unwrap();
        let colset = CollocationSet::sample(&model, 60, 0.05, 1).unwrap();
        let problem = Problem { model: &model, surrogate: &s, ptp: &ptp, colset: &colset };
        let w0 = s.init_params().0;
        let e0 = problem.hji_loss(&w0).unwrap();
        for mode in [IndicatorMode::Current, IndicatorMode::Frozen] {
            let cfg = TrainConfig {
                mu0: 1e-4,
                growth: 2.0,
                outer_iterations: 2,
                collocation_points: 60,
                margin: 0.05,
                indicator: mode,
                inner: LbfgsConfig { max_iterations: 30, ..LbfgsConfig::default() },
                seed: 1,
            };
            let mut calls = 0;
            let (w, report) = train(problem, &cfg, w0.clone(), |_, _, _| {
                calls += 1;
                Ok(())
            })
            .unwrap();
            assert_eq!(calls, 2);
            assert_eq!(report.records.len(), 2);
            assert!(report.failure.is_none());
            assert!(problem.hji_loss(&w).unwrap() < e0);
        }
    }
}
