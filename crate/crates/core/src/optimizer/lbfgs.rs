use std::collections::VecDeque;

use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇f‖_∞` falls to this.
    pub gradient_tolerance: f64,
    /// Stop when `stall_iterations` accepted steps in a row each lower `f`
    /// by no more than this.
    pub improvement_tolerance: f64,
    pub stall_iterations: usize,
    /// Largest coordinate change of the first (steepest-descent) trial step.
    pub initial_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 8,
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            improvement_tolerance: 1e-10,
            stall_iterations: 3,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Improvement,
    MaxIterations,
    LineSearch,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `f` at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory BFGS with Armijo backtracking.
pub fn lbfgs(f: &mut dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)>, x0: &[f64], opts: LbfgsOptions) -> Result<LbfgsResult> {
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < opts.max_iterations {
        if inf_norm(&g) <= opts.gradient_tolerance {
            stop = StopReason::Gradient;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        } else {
            let scale = opts.initial_step / inf_norm(&g).max(1e-300);
            q.iter_mut().for_each(|qi| *qi *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            let scale = opts.initial_step / inf_norm(&g).max(1e-300);
            dir = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = f(&trial)?;
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((xn, fn_, gn)) = accepted else {
            stop = StopReason::LineSearch;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let gain = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        if gain <= opts.improvement_tolerance {
            stalled += 1;
            // a poor quasi-Newton direction can stall; retry from steepest descent
            history.clear();
            if stalled >= opts.stall_iterations {
                stop = StopReason::Improvement;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(LbfgsResult { x, value: fx, gradient: g, trace, iterations, stop })
}
