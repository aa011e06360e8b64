//! Finite-difference checks shared by the differentiation tests and the
//! acceptance suite.

#![allow(dead_code)]

use ptgame::barrier::{BarrierCandidate, Barrier, Wrapper};
use ptgame::net::{loss_param_gradient, ParametricValue, PointLoss};
use ptgame::trainer::{CollocationSet, Multipliers, Problem};
use ptgame::{Activation, ExampleKind, MlpConfig, PredefinedTimeParams, StateVec, StrategyParams, SurrogateValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error tolerance of every finite-difference comparison.
pub const FD_TOL: f64 = 1e-5;
/// Central-difference step, scaled by `max(1, |argument|)`.
pub const FD_STEP: f64 = 1e-5;

/// `|a - b|_2 / max(|b|_2, 1e-8)`.
pub fn rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

pub fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = FD_STEP * x[i].abs().max(1.0);
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Worst relative error per checked quantity for one random configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdErrors {
    pub grad_x: f64,
    pub value_w: f64,
    pub grad_norm_w: f64,
    pub hji_w: f64,
    pub augmented_w: f64,
}

impl FdErrors {
    pub fn worst(&self) -> f64 {
        [self.grad_x, self.value_w, self.grad_norm_w, self.hji_w, self.augmented_w]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn random_case(seed: u64) -> (SurrogateValue, Vec<f64>, ExampleKind, Vec<StateVec>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = if rng.gen_bool(0.5) { ExampleKind::Bounded } else { ExampleKind::Unbounded };
    let cfg = MlpConfig {
        input_dim: 2,
        hidden_layers: rng.gen_range(1..=3),
        hidden_width: rng.gen_range(1..=6),
        activation: if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::Sigmoid },
        init_seed: seed,
    };
    let candidate = BarrierCandidate {
        barrier: Barrier::for_example(kind),
        wrapper: if rng.gen_bool(0.5) { Wrapper::Exp } else { Wrapper::Logistic },
    };
    let s = SurrogateValue::new(cfg, candidate).unwrap();
    // Perturb the initialization so biases are nonzero too.
    let w: Vec<f64> = s.init_params().0.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
    let points = (0..4)
        .map(|_| StateVec::from_column_slice(&[rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)]))
        .collect();
    (s, w, kind, points)
}

pub fn check_case(seed: u64) -> FdErrors {
    let (s, w, kind, points) = random_case(seed);
    let x = &points[0];
    let mut out = FdErrors::default();

    let gx = s.grad_x(x, &w).unwrap();
    let fd = central_diff(x.as_slice(), |xs| s.forward(&StateVec::from_column_slice(xs), &w).unwrap());
    out.grad_x = rel_err(gx.as_slice(), &fd);

    let one = std::slice::from_ref(x);
    let (_, g) = loss_param_gradient(&s, one, &w, |_, _, gr| {
        Ok(PointLoss { loss: 0.0, dvalue: 1.0, dgrad: vec![0.0; gr.len()] })
    })
    .unwrap();
    let fd = central_diff(&w, |wt| s.forward(x, wt).unwrap());
    out.value_w = rel_err(&g, &fd);

    let (_, g) = loss_param_gradient(&s, one, &w, |_, _, gr| {
        Ok(PointLoss {
            loss: gr.iter().map(|v| v * v).sum(),
            dvalue: 0.0,
            dgrad: gr.iter().map(|v| 2.0 * v).collect(),
        })
    })
    .unwrap();
    let fd = central_diff(&w, |wt| s.grad_x(x, wt).unwrap().norm_squared());
    out.grad_norm_w = rel_err(&g, &fd);

    let model = kind.model(StrategyParams::new(0.5, 1.5).unwrap()).unwrap();
    let ptp = PredefinedTimeParams::from_strategy_exponents(0.5, 1.5).unwrap();
    let colset = CollocationSet::from_points(&model, points.clone(), 1e-3).unwrap();
    let problem = Problem { model: &model, surrogate: &s, ptp: &ptp, colset: &colset };
    let (_, g) = problem.hji_loss_and_gradient(&w).unwrap();
    let fd = central_diff(&w, |wt| problem.hji_loss(wt).unwrap());
    out.hji_w = rel_err(&g, &fd);

    // lambda > 0 keeps every penalty indicator on, so the loss is smooth.
    let mut mult = Multipliers::new(0.5, 2.0, points.len()).unwrap();
    mult.lambda = vec![0.3, 0.1, 0.7, 0.2];
    let (_, g) = problem.augmented_loss_and_gradient(&w, &mult, None).unwrap();
    let fd = central_diff(&w, |wt| problem.augmented_loss(wt, &mult).unwrap());
    out.augmented_w = rel_err(&g, &fd);

    let _ = s.num_params();
    out
}
