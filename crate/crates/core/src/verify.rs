//! Analytic oracle suite for the built-in examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::barrier::{hji_residual, lyapunov_decrease_margin, ExactValue};
use crate::error::{Error, Result};
use crate::instances::{ExampleKind, StrategyParams};
use crate::model::{GameModel, StateVec};
use crate::ptp::PredefinedTimeParams;
use crate::strategies::{closed_form_pair, saddle_gap, NashFeedback, StrategyPair};

/// Seeded uniform samples from the sampling box with `s(x) >= margin`.
pub fn sample_interior(model: &GameModel, count: usize, margin: f64, seed: u64) -> Vec<StateVec> {
    let set = model.safe_set();
    let bx = set.sampling_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = StateVec::from_fn(bx.dim(), |i, _| rng.gen_range(bx.lower[i]..bx.upper[i]));
        if set.level(&x) >= margin {
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Largest violation statistic seen (check-specific, see `tolerance`).
    pub worst: f64,
    pub worst_at: Option<StateVec>,
    pub tolerance: f64,
    pub samples: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }

    pub fn line(&self) -> String {
        let at = self
            .worst_at
            .as_ref()
            .map(|x| format!(" at {:?}", x.as_slice()))
            .unwrap_or_default();
        format!(
            "{} {:<28} worst {:.3e} (tol {:.0e}, {} samples){}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.samples,
            at
        )
    }
}

fn worst_of(name: &'static str, tolerance: f64, xs: &[StateVec], stats: Vec<f64>) -> CheckOutcome {
    let mut worst = f64::NEG_INFINITY;
    let mut at = None;
    for (x, s) in xs.iter().zip(stats) {
        // NaN counts as the worst possible outcome.
        let s = if s.is_nan() { f64::INFINITY } else { s };
        if s > worst {
            worst = s;
            at = Some(x.clone());
        }
    }
    CheckOutcome { name, worst, worst_at: at, tolerance, samples: xs.len() }
}

fn stats<F>(xs: &[StateVec], f: F) -> Result<Vec<f64>>
where
    F: Fn(&StateVec) -> Result<f64> + Sync + Send,
{
    xs.par_iter().map(f).collect()
}

/// `max |rho|` of the exact value.
pub fn check_hji(model: &GameModel, exact: &ExactValue, xs: &[StateVec], tol: f64) -> Result<CheckOutcome> {
    let s = stats(xs, |x| Ok(hji_residual(model, exact, x)?.abs()))?;
    Ok(worst_of("hji_residual", tol, xs, s))
}

/// `max l(x)` of the exact value (decrease margin must be nonpositive).
pub fn check_decrease(
    model: &GameModel,
    exact: &ExactValue,
    ptp: &PredefinedTimeParams,
    xs: &[StateVec],
    tol: f64,
) -> Result<CheckOutcome> {
    let s = stats(xs, |x| lyapunov_decrease_margin(model, exact, ptp, x))?;
    Ok(worst_of("decrease_margin", tol, xs, s))
}

/// Largest deviation between the closed-form pair and the general Nash formula.
pub fn check_closed_form(
    model: &GameModel,
    exact: &ExactValue,
    params: StrategyParams,
    xs: &[StateVec],
    tol: f64,
) -> Result<CheckOutcome> {
    let general = NashFeedback::new(model, exact);
    let closed = closed_form_pair(exact.kind(), params.gamma1(), params.gamma2())?;
    let s = stats(xs, |x| {
        let du = general.control(x)? - closed.control(x)?;
        let da = general.adversary(x)? - closed.adversary(x)?;
        Ok(du.amax().max(da.amax()))
    })?;
    Ok(worst_of("closed_form_agreement", tol, xs, s))
}

/// Two checks per sample, with `u, a` drawn from `[-bound, bound]^m`:
/// the saddle inequalities (with slack `ineq_tol`) and agreement of both gaps
/// with their quadratic forms (relative to `1 + |q|`, tolerance `form_tol`).
pub fn check_saddle(
    model: &GameModel,
    exact: &ExactValue,
    xs: &[StateVec],
    bound: f64,
    seed: u64,
    ineq_tol: f64,
    form_tol: f64,
) -> Result<(CheckOutcome, CheckOutcome)> {
    let m_u = model.control_dim();
    let m_a = model.adversary_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(StateVec, StateVec)> = xs
        .iter()
        .map(|_| {
            (
                StateVec::from_fn(m_u, |_, _| rng.gen_range(-bound..=bound)),
                StateVec::from_fn(m_a, |_, _| rng.gen_range(-bound..=bound)),
            )
        })
        .collect();
    let pairs: Vec<Result<(f64, f64)>> = xs
        .par_iter()
        .zip(&inputs)
        .map(|(x, (u, a))| {
            let (g_adv, g_ctl) = saddle_gap(model, exact, x, u, a)?;
            let local = model.local(x)?;
            let p = crate::barrier::ValueFunction::gradient(exact, x)?;
            let (du, da) = (u - local.control(&p), a - local.adversary(&p));
            let qu = du.dot(&(&local.ru * &du));
            let qa = da.dot(&(&local.ra * &da));
            let ineq = g_adv.max(-g_ctl);
            let form = ((g_adv + qa).abs() / (1.0 + qa.abs())).max((g_ctl - qu).abs() / (1.0 + qu.abs()));
            Ok((ineq, form))
        })
        .collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let (ineq, form): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((
        worst_of("saddle_inequalities", ineq_tol, xs, ineq),
        worst_of("saddle_quadratic_forms", form_tol, xs, form),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub samples: usize,
    pub saddle_samples: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { samples: 10_000, saddle_samples: 100_000, margin: 0.01, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub example: ExampleKind,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("example {}\n", self.example.name());
        for c in &self.checks {
            out.push_str(&c.line());
            out.push('\n');
        }
        out
    }
}

/// Runs every oracle on one built-in example.
pub fn verify_exact(
    model: &GameModel,
    kind: ExampleKind,
    params: StrategyParams,
    ptp: &PredefinedTimeParams,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    if cfg.samples == 0 {
        return Err(Error::config("verification needs at least one sample"));
    }
    let exact = ExactValue::new(kind);
    let xs = sample_interior(model, cfg.samples, cfg.margin, cfg.seed);
    let saddle_xs = sample_interior(model, cfg.saddle_samples.max(1), cfg.margin, cfg.seed.wrapping_add(1));
    let (ineq, form) = check_saddle(model, &exact, &saddle_xs, 10.0, cfg.seed.wrapping_add(2), 1e-9, 1e-10)?;
    Ok(SuiteReport {
        example: kind,
        checks: vec![
            check_hji(model, &exact, &xs, 1e-8)?,
            ineq,
            form,
            check_decrease(model, &exact, ptp, &xs, 1e-10)?,
            check_closed_form(model, &exact, params, &xs, 1e-10)?,
        ],
    })
}
