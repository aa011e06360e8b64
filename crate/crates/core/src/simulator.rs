//! Closed-loop simulation, cost accumulation and surrogate evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::ValueFunction;
use crate::error::{Error, Result};
use crate::model::{GameModel, StateVec};
use crate::strategies::StrategyPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Fixed RK4 step, seconds.
    pub step: f64,
    /// Final time, seconds.
    pub horizon: f64,
    /// The state is snapped to the origin once `|x|_2 <= stop_norm`.
    pub stop_norm: f64,
    /// Abort when `s(x) < boundary_guard`.
    pub boundary_guard: f64,
}

impl SimConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            step: 1e-3,
            horizon,
            stop_norm: 1e-8,
            boundary_guard: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::config("simulation step and horizon must be positive"));
        }
        if !(self.stop_norm >= 0.0) || !(self.boundary_guard >= 0.0) {
            return Err(Error::config("stop_norm and boundary_guard must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    /// Reached the horizon.
    Completed,
    /// `s(x)` fell below the guard (or a strategy could not be evaluated
    /// because the state left the set) at `time`.
    SafetyViolation { time: f64, level: f64 },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    pub controls: Vec<StateVec>,
    pub adversaries: Vec<StateVec>,
    pub cost_samples: Vec<f64>,
    pub levels: Vec<f64>,
    pub min_safety_level: f64,
    /// First time with `|x|_2 <= stop_norm`.
    pub settled_at: Option<f64>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn is_safe(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Completed) && self.min_safety_level > 0.0
    }

    pub fn final_state(&self) -> &StateVec {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Linear interpolation of the state at time `t` within the recorded span.
    pub fn state_at(&self, t: f64) -> Option<StateVec> {
        let last = *self.times.last()?;
        if t < self.times[0] || t > last + 1e-12 {
            return None;
        }
        let idx = self.times.partition_point(|s| *s < t);
        if idx == 0 {
            return Some(self.states[0].clone());
        }
        if idx >= self.times.len() {
            return Some(self.final_state().clone());
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let th = (t - t0) / (t1 - t0);
        Some(&self.states[idx - 1] * (1.0 - th) + &self.states[idx] * th)
    }

    pub const CSV_PRECISION: usize = 16;

    /// `t,x1..xn,u1..um,a1..am,cost_integrand,s_level`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let mu = self.controls.first().map_or(0, |x| x.len());
        let ma = self.adversaries.first().map_or(0, |x| x.len());
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=mu {
            let _ = write!(out, ",u{i}");
        }
        for i in 1..=ma {
            let _ = write!(out, ",a{i}");
        }
        out.push_str(",cost_integrand,s_level\n");
        for k in 0..self.times.len() {
            out.push_str(&fmt17(self.times[k]));
            for v in self.states[k].iter().chain(self.controls[k].iter()).chain(self.adversaries[k].iter()) {
                out.push(',');
                out.push_str(&fmt17(*v));
            }
            out.push(',');
            out.push_str(&fmt17(self.cost_samples[k]));
            out.push(',');
            out.push_str(&fmt17(self.levels[k]));
            out.push('\n');
        }
        out
    }
}

/// Float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{:.*e}", Trajectory::CSV_PRECISION, v)
}

struct Sample {
    u: StateVec,
    a: StateVec,
    cost: f64,
}

fn sample_at(model: &GameModel, pair: &dyn StrategyPair, x: &StateVec) -> Result<Sample> {
    let u = pair.control(x)?;
    let a = pair.adversary(x)?;
    let cost = model.running_cost(x, &u, &a)?;
    Ok(Sample { u, a, cost })
}

fn closed_loop(model: &GameModel, pair: &dyn StrategyPair, x: &StateVec) -> Result<StateVec> {
    model.rhs(x, &pair.control(x)?, &pair.adversary(x)?)
}

/// Fixed-step RK4 integration of `xdot = F(x, u(x), a(x))` from `x0`.
pub fn integrate(
    model: &GameModel,
    pair: &dyn StrategyPair,
    x0: &StateVec,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let set = model.safe_set();
    set.check(x0)?;

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        adversaries: Vec::new(),
        cost_samples: Vec::new(),
        levels: Vec::new(),
        min_safety_level: f64::INFINITY,
        settled_at: None,
        status: TrajectoryStatus::Completed,
    };

    let mut x = x0.clone();
    let mut t = 0.0;
    let steps = (cfg.horizon / cfg.step).ceil() as usize;
    let zero = |m: usize| StateVec::zeros(m);

    for k in 0..=steps {
        if traj.settled_at.is_none() && x.norm() <= cfg.stop_norm {
            traj.settled_at = Some(t);
        }
        if traj.settled_at.is_some() {
            x.fill(0.0);
        }
        let level = set.level(&x);
        if level < cfg.boundary_guard {
            traj.status = TrajectoryStatus::SafetyViolation { time: t, level };
            traj.min_safety_level = traj.min_safety_level.min(level);
            break;
        }
        let sample = if traj.settled_at.is_some() {
            Sample {
                u: zero(model.control_dim()),
                a: zero(model.adversary_dim()),
                cost: 0.0,
            }
        } else {
            sample_at(model, pair, &x)?
        };
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.controls.push(sample.u);
        traj.adversaries.push(sample.a);
        traj.cost_samples.push(sample.cost);
        traj.levels.push(level);
        traj.min_safety_level = traj.min_safety_level.min(level);

        if k == steps {
            break;
        }
        let t_next = ((k + 1) as f64 * cfg.step).min(cfg.horizon);
        let h = t_next - t;
        if traj.settled_at.is_none() {
            match rk4_step(model, pair, &x, h) {
                Ok(next) => {
                    if next.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numeric(format!("state became non-finite at t = {t_next}")));
                    }
                    x = next;
                }
                Err(Error::Domain(_)) => {
                    // A stage left the safe set.
                    traj.status = TrajectoryStatus::SafetyViolation { time: t_next, level: f64::NEG_INFINITY };
                    traj.min_safety_level = f64::NEG_INFINITY;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        t = t_next;
    }
    Ok(traj)
}

fn rk4_step(model: &GameModel, pair: &dyn StrategyPair, x: &StateVec, h: f64) -> Result<StateVec> {
    let k1 = closed_loop(model, pair, x)?;
    let k2 = closed_loop(model, pair, &(x + 0.5 * h * &k1))?;
    let k3 = closed_loop(model, pair, &(x + 0.5 * h * &k2))?;
    let k4 = closed_loop(model, pair, &(x + h * &k3))?;
    Ok(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Integrates every initial condition independently; results keep input order.
pub fn integrate_batch(
    model: &GameModel,
    pair: &dyn StrategyPair,
    initial: &[StateVec],
    cfg: &SimConfig,
) -> Vec<Result<Trajectory>> {
    initial.par_iter().map(|x0| integrate(model, pair, x0, cfg)).collect()
}

/// Trapezoidal integral of the running cost over `[0, until]`.
pub fn accumulate_cost(traj: &Trajectory, until: f64) -> Result<f64> {
    if !matches!(traj.status, TrajectoryStatus::Completed) {
        return Err(Error::domain("cannot accumulate cost over an aborted trajectory"));
    }
    let last = *traj.times.last().ok_or_else(|| Error::domain("empty trajectory"))?;
    if last + 1e-12 < until {
        return Err(Error::domain(format!(
            "trajectory ends at {last}, cost requested up to {until}"
        )));
    }
    let mut total = 0.0;
    for k in 1..traj.times.len() {
        let (t0, t1) = (traj.times[k - 1], traj.times[k]);
        if t0 >= until {
            break;
        }
        let (c0, c1) = (traj.cost_samples[k - 1], traj.cost_samples[k]);
        if t1 <= until {
            total += 0.5 * (t1 - t0) * (c0 + c1);
        } else {
            let th = (until - t0) / (t1 - t0);
            let cm = c0 + th * (c1 - c0);
            total += 0.5 * (until - t0) * (c0 + cm);
        }
    }
    Ok(total)
}

/// First sample time after which `|x|_2 <= eps` holds for the rest of the
/// trajectory.
pub fn settling_time(traj: &Trajectory, eps: f64) -> Option<f64> {
    let mut first = None;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if x.norm() <= eps {
            first.get_or_insert(*t);
        } else {
            first = None;
        }
    }
    first
}

/// `|a - b| / (|a| + |b|)`, zero when both vanish.
pub fn sae_scalar(approx: f64, exact: f64) -> f64 {
    let den = approx.abs() + exact.abs();
    if den == 0.0 {
        0.0
    } else {
        (approx - exact).abs() / den
    }
}

/// `|a - b|_1 / (|a|_1 + |b|_1)`, zero when both vanish.
pub fn sae_vector(approx: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = approx.iter().chain(exact).map(|v| v.abs()).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub x: StateVec,
    pub value_sae: f64,
    pub control_sae: f64,
    pub adversary_sae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub value: MetricSummary,
    pub control: MetricSummary,
    pub adversary: MetricSummary,
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,value_sae,control_sae,adversary_sae\n");
        for r in &self.rows {
            for v in r.x.iter() {
                out.push_str(&fmt17(*v));
                out.push(',');
            }
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt17(r.value_sae),
                fmt17(r.control_sae),
                fmt17(r.adversary_sae)
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "metric,median,max\nvalue,{},{}\ncontrol,{},{}\nadversary,{},{}\n",
            fmt17(self.value.median),
            fmt17(self.value.max),
            fmt17(self.control.median),
            fmt17(self.control.max),
            fmt17(self.adversary.median),
            fmt17(self.adversary.max)
        )
    }
}

fn summarize(mut v: Vec<f64>) -> MetricSummary {
    if v.is_empty() {
        return MetricSummary { median: f64::NAN, max: f64::NAN };
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    MetricSummary { median, max: v[m - 1] }
}

/// Regular `per_axis x per_axis` grid over the sampling box, keeping only
/// points with `s(x) >= margin`.
pub fn interior_grid(model: &GameModel, per_axis: usize, margin: f64) -> Vec<StateVec> {
    let bx = model.safe_set().sampling_box();
    let n = bx.dim();
    let mut out = Vec::new();
    let total = per_axis.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut x = StateVec::zeros(n);
        for k in 0..n {
            let i = rem % per_axis;
            rem /= per_axis;
            // Cell centres, so the box faces are never sampled.
            let frac = (i as f64 + 0.5) / per_axis as f64;
            x[k] = bx.lower[k] + frac * (bx.upper[k] - bx.lower[k]);
        }
        if model.safe_set().level(&x) >= margin {
            out.push(x);
        }
    }
    out
}

/// Per-point SAE of value, control and adversary between an approximate and
/// an exact value function, both pushed through the Nash formulas.
pub fn evaluate_surrogate(
    model: &GameModel,
    approx: &dyn ValueFunction,
    exact: &dyn ValueFunction,
    grid: &[StateVec],
) -> Result<MetricsTable> {
    let rows: Vec<Result<MetricsRow>> = grid
        .par_iter()
        .map(|x| {
            let local = model.local(x)?;
            let (pa, pe) = (approx.gradient(x)?, exact.gradient(x)?);
            Ok(MetricsRow {
                x: x.clone(),
                value_sae: sae_scalar(approx.value(x)?, exact.value(x)?),
                control_sae: sae_vector(local.control(&pa).as_slice(), local.control(&pe).as_slice()),
                adversary_sae: sae_vector(local.adversary(&pa).as_slice(), local.adversary(&pe).as_slice()),
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable {
        value: summarize(rows.iter().map(|r| r.value_sae).collect()),
        control: summarize(rows.iter().map(|r| r.control_sae).collect()),
        adversary: summarize(rows.iter().map(|r| r.adversary_sae).collect()),
        rows,
    })
}
