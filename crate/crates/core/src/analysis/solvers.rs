//! Small dense solvers: Levenberg–Marquardt least squares and Nelder–Mead.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 500, cost_tolerance: 1e-14, step_tolerance: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// `Σ rᵢ²` at `params`.
    pub cost: f64,
    pub iterations: usize,
}

fn jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, p: &[f64], m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let up = f(&q);
        q[k] = p[k] - h;
        let down = f(&q);
        q[k] = p[k];
        for i in 0..m {
            j[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    j
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes `Σ f(p)ᵢ²` with a central-difference Jacobian.
pub fn levenberg_marquardt(f: &dyn Fn(&[f64]) -> Vec<f64>, p0: &[f64], opts: LmOptions) -> Result<LmResult> {
    let mut p = p0.to_vec();
    let mut r = f(&p);
    let m = r.len();
    if m < p.len() {
        return Err(Error::Degenerate(format!("{m} residuals for {} parameters", p.len())));
    }
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::NonConvergence("non-finite initial cost".into()));
    }
    let mut lambda = 1e-3;
    for it in 0..opts.max_iterations {
        let j = jacobian(f, &p, m);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < 1e-300 || cost == 0.0 {
            return Ok(LmResult { params: p, cost, iterations: it });
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = f(&trial);
            let ct = sum_sq(&rt);
            if ct.is_finite() && ct <= cost {
                let small_step = step.amax() <= opts.step_tolerance * (1.0 + p.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                let small_gain = cost - ct <= opts.cost_tolerance * cost;
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    return Ok(LmResult { params: p, cost, iterations: it + 1 });
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            return Ok(LmResult { params: p, cost, iterations: it + 1 });
        }
    }
    Err(Error::NonConvergence(format!("least squares did not settle in {} iterations", opts.max_iterations)))
}

/// Nelder–Mead minimization from `x0` with initial simplex edge `scale`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], scale: f64, tol: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=n)
        .map(|k| {
            let mut x = x0.to_vec();
            if k > 0 {
                x[k - 1] += scale;
            }
            let v = f(&x);
            (x, v)
        })
        .collect();
    let mut evals = n + 1;
    let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() <= tol * (1e-30 + simplex[0].1.abs()) {
            let spread = simplex.iter().map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
            if spread < tol.sqrt() {
                break;
            }
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let xr = blend(&centroid, &worst.0, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = blend(&centroid, &worst.0, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < worst.1 { blend(&centroid, &xr, 0.5) } else { blend(&centroid, &worst.0, 0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = blend(&best, &item.0, 0.5);
                    let v = f(&x);
                    *item = (x, v);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
