//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Two-loop recursion for the search direction, initial inverse Hessian scaled
//! by `s'y / y'y`. The line search is the bracketing/zoom scheme with cubic
//! interpolation. Non-finite objective values are treated as "too far" and
//! shrink the step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Stored curvature pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `|grad|_inf <= gradient_tolerance`.
    pub gradient_tolerance: f64,
    pub max_line_search_steps: usize,
    /// Sufficient decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-9,
            max_line_search_steps: 40,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gradient tolerance met.
    Converged,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the best point so
    /// far is returned.
    LineSearchFailed,
    /// The objective stopped changing at machine precision.
    Stalled,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::LineSearchFailed => "line_search_failed",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub w: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    w: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizes `objective`, which returns the value and gradient at `w`.
///
/// Errors from the objective at the starting point are returned; errors at
/// trial points during the line search count as rejected steps.
pub fn minimize<F>(initial: &[f64], mut objective: F, config: &LbfgsConfig) -> Result<MinimizeOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut evaluations = 1;
    let (f0, g0) = objective(initial)?;
    let mut cur = Point {
        w: initial.to_vec(),
        f: f0,
        g: g0,
    };
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&cur.g) <= config.gradient_tolerance {
            break Termination::Converged;
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }

        let mut dir = two_loop(&cur.g, &history);
        let mut slope = dot(&dir, &cur.g);
        if !(slope < 0.0) {
            // Not a descent direction: restart from steepest descent.
            history.clear();
            dir = cur.g.iter().map(|v| -v).collect();
            slope = dot(&dir, &cur.g);
        }
        let step0 = if history.is_empty() {
            (1.0 / inf_norm(&cur.g)).min(1.0)
        } else {
            1.0
        };

        let ls = line_search(&mut objective, &cur, &dir, slope, step0, config, &mut evaluations);
        let Some(next) = ls else {
            break Termination::LineSearchFailed;
        };
        iterations += 1;

        let s: Vec<f64> = next.w.iter().zip(&cur.w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let stalled = (cur.f - next.f).abs() <= f64::EPSILON * cur.f.abs().max(1e-300)
            && inf_norm(&s) <= f64::EPSILON * inf_norm(&cur.w).max(1.0);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        cur = next;
        if stalled {
            break Termination::Stalled;
        }
    };

    Ok(MinimizeOutcome {
        grad_inf: inf_norm(&cur.g),
        w: cur.w,
        value: cur.f,
        iterations,
        evaluations,
        termination,
    })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let scale = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= scale;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

fn trial<F>(objective: &mut F, base: &Point, dir: &[f64], step: f64, evals: &mut usize) -> Option<Point>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let w: Vec<f64> = base.w.iter().zip(dir).map(|(x, d)| x + step * d).collect();
    *evals += 1;
    match objective(&w) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some(Point { w, f, g }),
        _ => None,
    }
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, safeguarded
/// into the middle of the interval.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if disc < 0.0 || !disc.is_finite() {
        return mid;
    }
    let d2 = disc.sqrt().copysign(b - a);
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

fn line_search<F>(
    objective: &mut F,
    base: &Point,
    dir: &[f64],
    slope0: f64,
    step0: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let f0 = base.f;
    let mut prev_step = 0.0;
    let mut prev_f = f0;
    let mut prev_slope = slope0;
    let mut prev_point: Option<Point> = None;
    let mut step = step0;

    for i in 0..cfg.max_line_search_steps {
        let Some(p) = trial(objective, base, dir, step, evals) else {
            // Overflow or domain failure: pull back toward the last good step.
            step = prev_step + 0.1 * (step - prev_step);
            continue;
        };
        let slope = dot(&p.g, dir);
        if p.f > f0 + cfg.c1 * step * slope0 || (i > 0 && p.f >= prev_f) {
            return zoom(
                objective,
                base,
                dir,
                slope0,
                (prev_step, prev_f, prev_slope, prev_point),
                (step, p.f, slope, Some(p)),
                cfg,
                evals,
            );
        }
        if slope.abs() <= -cfg.c2 * slope0 {
            return Some(p);
        }
        if slope >= 0.0 {
            return zoom(
                objective,
                base,
                dir,
                slope0,
                (step, p.f, slope, Some(p)),
                (prev_step, prev_f, prev_slope, prev_point),
                cfg,
                evals,
            );
        }
        prev_step = step;
        prev_f = p.f;
        prev_slope = slope;
        prev_point = Some(p);
        step *= 2.0;
    }
    // Accept the last sufficient-decrease point if the budget ran out.
    prev_point
}

type Bracket = (f64, f64, f64, Option<Point>);

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    objective: &mut F,
    base: &Point,
    dir: &[f64],
    slope0: f64,
    lo: Bracket,
    hi: Bracket,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let f0 = base.f;
    let (mut a_lo, mut f_lo, mut d_lo, mut p_lo) = lo;
    let (mut a_hi, mut f_hi, mut d_hi, _) = hi;
    for _ in 0..cfg.max_line_search_steps {
        let step = cubic_step(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi);
        if (a_hi - a_lo).abs() <= 1e-16 * a_lo.abs().max(1e-300) {
            break;
        }
        let Some(p) = trial(objective, base, dir, step, evals) else {
            a_hi = step;
            f_hi = f64::INFINITY;
            d_hi = f64::NAN;
            continue;
        };
        let slope = dot(&p.g, dir);
        if p.f > f0 + cfg.c1 * step * slope0 || p.f >= f_lo {
            a_hi = step;
            f_hi = p.f;
            d_hi = slope;
        } else {
            if slope.abs() <= -cfg.c2 * slope0 {
                return Some(p);
            }
            if slope * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
                f_hi = f_lo;
                d_hi = d_lo;
            }
            a_lo = step;
            f_lo = p.f;
            d_lo = slope;
            p_lo = Some(p);
        }
    }
    // Fall back to the best sufficient-decrease point, if any.
    p_lo.filter(|p| p.f < f0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (x, y) = (w[0], w[1]);
        let f = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
        let g = vec![-2.0 * (1.0 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_bowl() {
        let target: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let t = target.clone();
        let out = minimize(
            &[0.0; 20],
            move |w| {
                let f = w.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
                let g = w.iter().zip(&t).map(|(a, b)| 2.0 * (a - b)).collect();
                Ok((f, g))
            },
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert!(out.iterations <= 25, "iterations = {}", out.iterations);
        for (a, b) in out.w.iter().zip(&target) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let cfg = LbfgsConfig {
            max_iterations: 1000,
            ..LbfgsConfig::default()
        };
        let out = minimize(&[-1.2, 1.0], rosenbrock, &cfg).unwrap();
        assert!((out.w[0] - 1.0).abs() < 1e-6 && (out.w[1] - 1.0).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn zero_gradient_start_returns_immediately() {
        let mut calls = 0;
        let out = minimize(
            &[1.0, 1.0],
            |w| {
                calls += 1;
                rosenbrock(w)
            },
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(calls, 1);
    }

    #[test]
    fn accepted_steps_never_increase_objective() {
        let mut values = Vec::new();
        let cfg = LbfgsConfig {
            max_iterations: 60,
            ..LbfgsConfig::default()
        };
        // Record values at accepted iterates by re-evaluating the returned
        // point after each capped run.
        for cap in 1..=cfg.max_iterations {
            let c = LbfgsConfig { max_iterations: cap, ..cfg };
            values.push(minimize(&[-1.2, 1.0], rosenbrock, &c).unwrap().value);
        }
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn non_finite_region_is_avoided() {
        // f = -log(1 - w^2) has a barrier at |w| = 1; start near the wall.
        let out = minimize(
            &[0.9],
            |w| {
                let s = 1.0 - w[0] * w[0];
                if s <= 0.0 {
                    return Ok((f64::NAN, vec![f64::NAN]));
                }
                Ok((-s.ln(), vec![2.0 * w[0] / s]))
            },
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert!(out.w[0].abs() < 1e-8);
    }
}
