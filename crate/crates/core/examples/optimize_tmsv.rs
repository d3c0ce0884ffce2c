//! Optimizes a waveform for TMSV(r) at a small truncation and prints the result.
//!
//! `cargo run --release -p tmsv-core --example optimize_tmsv -- 0.25 6 8 [seed]`

use tmsv_core::fock::{tmsv_state_with_tolerance, ModeDims, TmsvParams};
use tmsv_core::optimizer::{gradient, optimize, OptimizationProblem};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let r: f64 = arg(0, "0.25").parse().expect("r");
    let n: usize = arg(1, "6").parse().expect("n_max");
    let starts: usize = arg(2, "8").parse().expect("starts");
    let seed: u64 = arg(3, "1").parse().expect("seed");

    let dims = ModeDims::symmetric(n).expect("dims");
    let target = tmsv_state_with_tolerance(TmsvParams::new(r, 0.0).expect("r"), dims, 1.0).expect("target");
    let mut p = OptimizationProblem::new(target.state);
    p.n_starts = starts;
    p.seed = seed;
    let t0 = std::time::Instant::now();
    let res = optimize(&p).expect("optimize");
    println!(
        "r={r} n_max={n} F={:.6} T={:.1}us cost={:.6} converged={} start={} iters={} stop={:?} leak={:.2e} in {:.1?}",
        res.fidelity,
        res.waveform.total_duration() * 1e6,
        res.cost,
        res.converged,
        res.best_start,
        res.iterations,
        res.stop,
        res.leakage,
        t0.elapsed()
    );
    println!("start costs {:?}", res.start_costs);
    let g = gradient(&p, &res.coarse_params).expect("gradient");
    println!("gradient max-norm {:.2e}", g.iter().fold(0.0f64, |m, x| m.max(x.abs())));
}
