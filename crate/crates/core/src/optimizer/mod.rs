//! Waveform synthesis: minimizes `C = 1 − F + ε T/T_max` over the coarse
//! phases and the duration scale `s = T/T_max`.
//!
//! The coarse phases pass through the linear filter `M` (fine = `M` coarse),
//! the filtered waveform is propagated from `|↓,0,0⟩`, and `F` is the squared
//! overlap with the target on the `|↓⟩` branch. Gradients are exact: with
//! `ψ_k` the state after segment `k` and `λ_k` the target propagated back to
//! the same time, a phase entering segment `k` through the gauge `e^{iDφ}`
//! contributes `i⟨λ_k|D|ψ_k⟩ − i⟨λ_{k−1}|D|ψ_{k−1}⟩` to `∂⟨target|ψ_N⟩`.

mod lbfgs;

pub use lbfgs::{lbfgs, LbfgsOptions, LbfgsResult, StopReason};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::dynamics::{mode_edge_population, ControlHamiltonianSpec, SectorPropagator, Sidebands};
use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::fock::{superposition_state_with_tolerance, tmsv_state_with_tolerance, ModeDims, StateVector, TmsvParams, Truncated};
use crate::linalg::{CVector, C64, I, ZERO};
use crate::tomography::RngSpec;
use crate::waveform::{apply_filter, FilterSpec, PhaseWaveform};

/// Default Rabi rate `Ω = 2π × 2 kHz`.
pub const DEFAULT_RABI_RATE: f64 = TAU * 2e3;

/// Named target states, buildable at any truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetState {
    Vacuum,
    Tmsv { r: f64, #[serde(default)] phi: f64 },
    Superposition { r: f64 },
}

impl TargetState {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetState::Vacuum => Ok(()),
            TargetState::Tmsv { r, phi } => TmsvParams::new(r, phi).map(|_| ()),
            TargetState::Superposition { r } => TmsvParams::new(r, 0.0).map(|_| ()),
        }
    }

    /// Truncated, renormalized target; the deficit is reported, not bounded.
    pub fn build(&self, dims: ModeDims) -> Result<Truncated> {
        match *self {
            TargetState::Vacuum => Ok(Truncated { state: StateVector::ground(dims), deficit: 0.0 }),
            TargetState::Tmsv { r, phi } => tmsv_state_with_tolerance(TmsvParams::new(r, phi)?, dims, 1.0),
            TargetState::Superposition { r } => superposition_state_with_tolerance(r, dims, 1.0),
        }
    }

    pub fn squeezing(&self) -> f64 {
        match *self {
            TargetState::Vacuum => 0.0,
            TargetState::Tmsv { r, .. } | TargetState::Superposition { r } => r,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationProblem {
    pub target: StateVector,
    pub dims: ModeDims,
    pub epsilon: f64,
    pub t_max: f64,
    pub filter: FilterSpec,
    pub rabi_rate: f64,
    pub seed: u64,
    pub max_iterations: usize,
    pub n_starts: usize,
}

impl OptimizationProblem {
    /// Defaults: `ε = 0.05`, `T_max = 2 ms`, `Ω = 2π × 2 kHz`, 8 starts.
    pub fn new(target: StateVector) -> Self {
        OptimizationProblem {
            dims: target.dims(),
            target,
            epsilon: 0.05,
            t_max: 2e-3,
            filter: FilterSpec::default(),
            rabi_rate: DEFAULT_RABI_RATE,
            seed: 0,
            max_iterations: 2000,
            n_starts: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.dims() != self.dims {
            return Err(Error::Dimension("target truncation differs from the problem's".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid("t_max must be positive"));
        }
        if !self.rabi_rate.is_finite() || self.rabi_rate < 0.0 {
            return Err(invalid("Rabi rate must be finite and non-negative"));
        }
        if self.n_starts == 0 {
            return Err(invalid("need at least one start"));
        }
        self.filter.validate()
    }

    /// Number of optimized parameters: `2·N_opt` phases and the duration scale.
    pub fn n_params(&self) -> usize {
        2 * self.filter.n_opt + 1
    }

    fn compile(&self) -> Result<Compiled> {
        self.validate()?;
        Ok(Compiled {
            prop: SectorPropagator::new(self.dims, self.rabi_rate, Sidebands::default()),
            filter: self.filter.matrix()?,
            initial: StateVector::ground(self.dims).amplitudes().clone(),
            target: self.target.amplitudes().clone(),
        })
    }

    /// Fine waveform for coarse parameters `[φ_r; φ_b; s]`.
    pub fn waveform(&self, params: &[f64]) -> Result<PhaseWaveform> {
        self.check_params(params)?;
        let n = self.filter.n_opt;
        let coarse = PhaseWaveform::new(params[..n].to_vec(), params[n..2 * n].to_vec(), params[2 * n] * self.t_max, self.rabi_rate)?;
        apply_filter(&self.filter.matrix()?, &coarse)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.n_params(), params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        let s = params[self.n_params() - 1];
        if !(s > 0.0 && s <= 1.0) {
            return Err(invalid(format!("duration T = {:.3e} s outside (0, T_max]", s * self.t_max)));
        }
        Ok(())
    }
}

struct Compiled {
    prop: SectorPropagator,
    filter: DMatrix<f64>,
    initial: CVector,
    target: CVector,
}

/// Cost and its parts at one parameter point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    pub fidelity: f64,
    pub duration: f64,
    pub leakage: f64,
}

fn cdot(a: &CVector, b: &CVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn weighted_dot(a: &CVector, d: &[f64], b: &CVector) -> C64 {
    a.iter().zip(d).zip(b.iter()).map(|((x, w), y)| x.conj() * y * *w).sum()
}

impl Compiled {
    fn fine(&self, p: &OptimizationProblem, params: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = p.filter.n_opt;
        let run = |v: &[f64]| (&self.filter * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec();
        (run(&params[..n]), run(&params[n..2 * n]), params[2 * n] * p.t_max / p.filter.n_seg as f64)
    }

    fn evaluate(&self, p: &OptimizationProblem, params: &[f64], want_gradient: bool) -> Result<(Evaluation, Option<Vec<f64>>)> {
        p.check_params(params)?;
        let (fr, fb, dt) = self.fine(p, params);
        let kernel = self.prop.kernel(dt);
        let mut states = Vec::with_capacity(if want_gradient { fr.len() + 1 } else { 0 });
        let mut v = self.initial.clone();
        let mut leakage = mode_edge_population(p.dims, &v);
        for (r, b) in fr.iter().zip(&fb) {
            if want_gradient {
                states.push(v.clone());
            }
            self.prop.apply(&kernel, *r, *b, &mut v);
            leakage = leakage.max(mode_edge_population(p.dims, &v));
        }
        let overlap = cdot(&self.target, &v);
        let fidelity = overlap.norm_sqr();
        let s = params[2 * p.filter.n_opt];
        let eval = Evaluation { cost: 1.0 - fidelity + p.epsilon * s, fidelity, duration: s * p.t_max, leakage };
        if !want_gradient {
            return Ok((eval, None));
        }
        states.push(v);

        let n_seg = fr.len();
        let red = self.prop.red_count();
        let blue_neg: Vec<f64> = self.prop.blue_count().iter().map(|c| -c).collect();
        let mut d_fine_r = vec![0.0; n_seg];
        let mut d_fine_b = vec![0.0; n_seg];
        let mut d_dt = ZERO;
        let mut lambda = self.target.clone();
        // A_j = ⟨λ_j|D|ψ_j⟩ at j = n_seg
        let mut a_r = weighted_dot(&lambda, red, &states[n_seg]);
        let mut a_b = weighted_dot(&lambda, &blue_neg, &states[n_seg]);
        let dfid = |dover: C64| 2.0 * (overlap.conj() * dover).re;
        for k in (0..n_seg).rev() {
            // segment k maps states[k] to states[k+1]; λ currently pairs with states[k+1]
            let h_psi = self.prop.apply_hamiltonian(fr[k], fb[k], &states[k + 1]);
            d_dt += -I * cdot(&lambda, &h_psi);
            self.prop.apply_adjoint(&kernel, fr[k], fb[k], &mut lambda);
            let a_r_prev = weighted_dot(&lambda, red, &states[k]);
            let a_b_prev = weighted_dot(&lambda, &blue_neg, &states[k]);
            d_fine_r[k] = -dfid(I * (a_r - a_r_prev));
            d_fine_b[k] = -dfid(I * (a_b - a_b_prev));
            a_r = a_r_prev;
            a_b = a_b_prev;
        }
        let mt = self.filter.transpose();
        let gr = &mt * nalgebra::DVector::from_vec(d_fine_r);
        let gb = &mt * nalgebra::DVector::from_vec(d_fine_b);
        let d_s = -dfid(d_dt) * p.t_max / n_seg as f64 + p.epsilon;
        let mut grad: Vec<f64> = gr.iter().chain(gb.iter()).copied().collect();
        grad.push(d_s);
        Ok((eval, Some(grad)))
    }
}

/// `C = 1 − F + ε T/T_max`.
pub fn cost(problem: &OptimizationProblem, params: &[f64]) -> Result<f64> {
    Ok(evaluate(problem, params)?.cost)
}

pub fn evaluate(problem: &OptimizationProblem, params: &[f64]) -> Result<Evaluation> {
    Ok(problem.compile()?.evaluate(problem, params, false)?.0)
}

/// Exact `∂C/∂(φ_r, φ_b, s)` through the filter.
pub fn gradient(problem: &OptimizationProblem, params: &[f64]) -> Result<Vec<f64>> {
    Ok(problem.compile()?.evaluate(problem, params, true)?.1.expect("gradient requested"))
}

/// Central finite differences with step `h` (phases in radians, scale unitless).
pub fn gradient_fd(problem: &OptimizationProblem, params: &[f64], h: f64) -> Result<Vec<f64>> {
    let c = problem.compile()?;
    let mut q = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        q[k] = params[k] + h;
        let up = c.evaluate(problem, &q, false)?.0.cost;
        q[k] = params[k] - h;
        let down = c.evaluate(problem, &q, false)?.0.cost;
        q[k] = params[k];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Filtered fine waveform.
    pub waveform: PhaseWaveform,
    /// `[φ_r (N_opt); φ_b (N_opt); s]`.
    pub coarse_params: Vec<f64>,
    pub fidelity: f64,
    pub cost: f64,
    pub cost_trace: Vec<f64>,
    pub leakage: f64,
    pub revalidated_fidelity: Option<f64>,
    pub converged: bool,
    pub best_start: usize,
    pub iterations: usize,
    pub stop: StopReason,
    pub dims: ModeDims,
    pub start_costs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

struct StartOutcome {
    params: Vec<f64>,
    eval: Evaluation,
    trace: Vec<f64>,
    iterations: usize,
    stop: StopReason,
}

fn run_start(problem: &OptimizationProblem, c: &Compiled, index: usize) -> Result<StartOutcome> {
    let n = problem.filter.n_opt;
    let mut g = RngSpec::new(problem.seed).child(index as u64).generator();
    let mut x: Vec<f64> = (0..2 * n).map(|_| g.random::<f64>() * TAU).collect();
    x.push(logit(g.random_range(0.3..1.0)));

    // internal variables: phases and u with s = σ(u)
    let to_params = |x: &[f64]| {
        let mut p = x.to_vec();
        p[2 * n] = sigmoid(x[2 * n]);
        p
    };
    let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = to_params(x);
        let (e, grad) = c.evaluate(problem, &p, true)?;
        let mut grad = grad.expect("gradient requested");
        let s = p[2 * n];
        grad[2 * n] *= s * (1.0 - s);
        Ok((e.cost, grad))
    };
    let opts = LbfgsOptions { max_iterations: problem.max_iterations, ..Default::default() };
    let r = lbfgs(&mut f, &x, opts)?;
    let params = to_params(&r.x);
    let eval = c.evaluate(problem, &params, false)?.0;
    Ok(StartOutcome { params, eval, trace: r.trace, iterations: r.iterations, stop: r.stop })
}

/// Multi-start L-BFGS. Start `k` draws its initial point from
/// `RngSpec::new(seed).child(k)`: phases uniform in `[0, 2π)`, duration scale
/// uniform in `[0.3, 1)`. The lowest cost wins, ties to the lowest index.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    optimize_with(problem, Execution::default())
}

pub fn optimize_with(problem: &OptimizationProblem, exec: Execution) -> Result<OptimizationResult> {
    let c = problem.compile()?;
    let outcomes = map_indexed(problem.n_starts, exec, |k| run_start(problem, &c, k));
    let outcomes: Vec<StartOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let start_costs: Vec<f64> = outcomes.iter().map(|o| o.eval.cost).collect();
    let best_start = start_costs
        .iter()
        .enumerate()
        .fold(0, |b, (k, c)| if *c < start_costs[b] { k } else { b });
    let best = &outcomes[best_start];
    Ok(OptimizationResult {
        waveform: problem.waveform(&best.params)?,
        coarse_params: best.params.clone(),
        fidelity: best.eval.fidelity,
        cost: best.eval.cost,
        cost_trace: best.trace.clone(),
        leakage: best.eval.leakage,
        revalidated_fidelity: None,
        converged: best.eval.cost < problem.epsilon,
        best_start,
        iterations: best.iterations,
        stop: best.stop,
        dims: problem.dims,
        start_costs,
    })
}

/// Fidelity of the optimized waveform propagated at a larger truncation,
/// against the target rebuilt there.
pub fn revalidate(result: &OptimizationResult, target: &TargetState, larger: ModeDims) -> Result<f64> {
    let small = result.dims;
    if larger.n_max_1() < small.n_max_1() || larger.n_max_2() < small.n_max_2() {
        return Err(invalid(format!(
            "revalidation dims ({}, {}) are smaller than the optimization dims ({}, {})",
            larger.n_max_1(),
            larger.n_max_2(),
            small.n_max_1(),
            small.n_max_2()
        )));
    }
    let spec = ControlHamiltonianSpec::new(larger, result.waveform.clone());
    let out = crate::dynamics::propagate(&spec, &StateVector::ground(larger))?;
    let t = target.build(larger)?.state;
    Ok(t.inner(&out.state)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::tmsv_state;

    fn small_problem(r: f64, n: usize) -> OptimizationProblem {
        let t = tmsv_state(TmsvParams::new(r, 0.0).unwrap(), ModeDims::symmetric(n).unwrap()).unwrap().state;
        let mut p = OptimizationProblem::new(t);
        p.filter = FilterSpec { n_opt: 6, n_seg: 24, ..FilterSpec::default() };
        p
    }

    fn random_params(p: &OptimizationProblem, seed: u64) -> Vec<f64> {
        let mut g = RngSpec::new(seed).generator();
        let mut x: Vec<f64> = (0..2 * p.filter.n_opt).map(|_| g.random::<f64>() * TAU).collect();
        x.push(g.random_range(0.2..0.9));
        x
    }

    #[test]
    fn cost_substitution() {
        let p = small_problem(0.25, 6);
        assert!((1.0 - 0.999 + p.epsilon * (936e-6 / p.t_max) - 0.0244).abs() < 1e-12);
        let x = random_params(&p, 1);
        let e = evaluate(&p, &x).unwrap();
        assert!((e.cost - (1.0 - e.fidelity + p.epsilon * e.duration / p.t_max)).abs() < 1e-12);
        assert!(e.cost >= p.epsilon * e.duration / p.t_max);
    }

    #[test]
    fn zero_rabi_vacuum_target() {
        let mut p = OptimizationProblem::new(StateVector::ground(ModeDims::symmetric(4).unwrap()));
        p.rabi_rate = 0.0;
        p.filter = FilterSpec { n_opt: 3, n_seg: 6, ..FilterSpec::default() };
        let mut x = vec![1.0; 6];
        x.push(1e-9);
        assert!(cost(&p, &x).unwrap() < 1e-9);
    }

    #[test]
    fn duration_bounds_enforced() {
        let p = small_problem(0.25, 6);
        let mut x = random_params(&p, 2);
        *x.last_mut().unwrap() = 1.2;
        assert!(cost(&p, &x).is_err());
        *x.last_mut().unwrap() = 0.0;
        assert!(cost(&p, &x).is_err());
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let p = small_problem(0.25, 6);
        for seed in 0..5 {
            let x = random_params(&p, seed);
            let exact = gradient(&p, &x).unwrap();
            let fd = gradient_fd(&p, &x, 1e-6).unwrap();
            for (a, b) in exact.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-2), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_is_deterministic() {
        let p = small_problem(0.4, 6);
        let x = random_params(&p, 7);
        let a = gradient(&p, &x).unwrap();
        let b = gradient(&p.clone(), &x.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn phase_rotation_moves_target_phase() {
        // φ_r + c, φ_b − c rotates the TMSV phase by 2c
        let p = small_problem(0.3, 6);
        let x = random_params(&p, 3);
        let c = 0.37;
        let n = p.filter.n_opt;
        let mut y = x.clone();
        for k in 0..n {
            y[k] += c;
            y[n + k] -= c;
        }
        let mut rotated = p.clone();
        rotated.target = tmsv_state(TmsvParams::new(0.3, 2.0 * c).unwrap(), p.dims).unwrap().state;
        let a = cost(&p, &x).unwrap();
        let b = cost(&rotated, &y).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn vacuum_target_shrinks_duration() {
        let mut p = OptimizationProblem::new(StateVector::ground(ModeDims::symmetric(4).unwrap()));
        p.n_starts = 4;
        let r = optimize(&p).unwrap();
        assert!(r.fidelity >= 0.9999, "{} {:?} {} {:?} {:?}", r.fidelity, r.stop, r.iterations, r.coarse_params.last(), r.start_costs);
        assert!(r.waveform.total_duration() < 0.01 * p.t_max);
        assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.converged);
    }

    #[test]
    fn more_starts_never_hurt() {
        let mut p = small_problem(0.25, 5);
        p.max_iterations = 200;
        p.n_starts = 2;
        let a = optimize(&p).unwrap();
        p.n_starts = 4;
        let b = optimize(&p).unwrap();
        assert!(b.cost <= a.cost);
        assert_eq!(&b.start_costs[..2], &a.start_costs[..]);
    }

    #[test]
    fn revalidation_rules() {
        let mut p = small_problem(0.25, 6);
        p.n_starts = 1;
        p.max_iterations = 50;
        let r = optimize(&p).unwrap();
        let target = TargetState::Tmsv { r: 0.25, phi: 0.0 };
        let same = revalidate(&r, &target, r.dims).unwrap();
        assert!((same - r.fidelity).abs() < 1e-12);
        assert!(revalidate(&r, &target, ModeDims::symmetric(5).unwrap()).is_err());
    }
}
