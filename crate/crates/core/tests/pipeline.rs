use num_complex::Complex64 as C64;
use proptest::prelude::*;
use tmsv_core::analysis::{
    bell_trace, fit_gaussian_2d, fit_superposition_with, optimize_bell_settings, reid_criterion, synthetic_superposition_grid,
};
use tmsv_core::dynamics::{propagate, ControlHamiltonianSpec};
use tmsv_core::fock::{fidelity, tmsv_state, ModeDims, StateVector, TmsvParams};
use tmsv_core::tomography::{chi_exact, postselect_prep, scan_grid, GridSpec, MeasurementSetting, QuadraturePlane, QuantumState, RngSpec, ScanMode};
use tmsv_core::waveform::{parse_csv, render_csv, PhaseWaveform};
use tmsv_core::Execution;

fn tmsv(r: f64, phi: f64, n: usize) -> QuantumState {
    tmsv_state(TmsvParams::new(r, phi).unwrap(), ModeDims::symmetric(n).unwrap()).unwrap().state.into()
}

/// Gaussian χ of TMSV(r, φ) with displacement argument iβ.
fn gaussian_chi(r: f64, phi: f64, b1: C64, b2: C64) -> f64 {
    let cross = (C64::from_polar(1.0, -phi) * b1 * b2).re;
    (-0.5 * (2.0 * r).cosh() * (b1.norm_sqr() + b2.norm_sqr()) - (2.0 * r).sinh() * cross).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_chi_matches_gaussian_form(
        r in 0.0..0.8f64, phi in 0.0..std::f64::consts::TAU,
        x1 in -1.0..1.0f64, y1 in -1.0..1.0f64, x2 in -1.0..1.0f64, y2 in -1.0..1.0f64,
    ) {
        let (b1, b2) = (C64::new(x1, y1), C64::new(x2, y2));
        let got = chi_exact(&tmsv(r, phi, 36), &MeasurementSetting::new(b1, b2).unwrap()).unwrap();
        prop_assert!((got.re - gaussian_chi(r, phi, b1, b2)).abs() < 1e-8);
        prop_assert!(got.im.abs() < 1e-8);
    }

    #[test]
    fn constant_phase_drive_is_norm_preserving(phi_r in 0.0..6.3f64, phi_b in 0.0..6.3f64, t in 1e-5..2e-4f64) {
        let dims = ModeDims::symmetric(10).unwrap();
        let w = PhaseWaveform::constant(phi_r, phi_b, 12, t, std::f64::consts::TAU * 2e3).unwrap();
        let out = propagate(&ControlHamiltonianSpec::new(dims, w), &StateVector::ground(dims)).unwrap();
        prop_assert!((out.state.norm() - 1.0).abs() < 1e-10);
        let [down, up] = out.state.spin_populations();
        prop_assert!((down + up - 1.0).abs() < 1e-10);
    }
}

#[test]
fn reid_product_from_fits_follows_squeezing() {
    for r in [0.25, 0.5, 0.75] {
        let state = tmsv(r, 0.0, 30);
        let fit = |plane| {
            let g = scan_grid(&state, &GridSpec { plane, extent: 2.5, step: 0.125 }, ScanMode::Exact, true, Execution::Sequential).unwrap();
            fit_gaussian_2d(&g).unwrap()
        };
        let (rr, ii) = (fit(QuadraturePlane::ReRe), fit(QuadraturePlane::ImIm));
        let reid = reid_criterion(rr.variance_minus, ii.variance_plus).unwrap().reid_value;
        let want = (-4.0 * r).exp() / 4.0;
        assert!((reid - want).abs() < 1e-3 * want, "r = {r}: {reid} vs {want}");
    }
}

#[test]
fn strategies_agree_bit_for_bit() {
    let state = tmsv(0.5, 0.0, 16);
    let spec = GridSpec { plane: QuadraturePlane::ReIm, extent: 1.0, step: 0.25 };
    let mode = ScanMode::Sampled { shots: 300, rng: RngSpec::new(8) };
    let a = scan_grid(&state, &spec, mode, false, Execution::Sequential).unwrap();
    let b = scan_grid(&state, &spec, mode, false, Execution::Parallel).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());

    let settings = optimize_bell_settings(TmsvParams::new(0.5, 0.0).unwrap()).settings;
    let rng = RngSpec::new(2);
    let ta = bell_trace(&state, &settings, &[1000, 200_000], &rng, Execution::Sequential).unwrap();
    let tb = bell_trace(&state, &settings, &[1000, 200_000], &rng, Execution::Parallel).unwrap();
    assert_eq!(ta, tb);

    let grid = synthetic_superposition_grid(0.6, 0.4, 0.5, 0.8, 2.5, 0.25);
    let fa = fit_superposition_with(&grid, Execution::Sequential).unwrap();
    let fb = fit_superposition_with(&grid, Execution::Parallel).unwrap();
    assert_eq!((fa.c_1, fa.c_2, fa.r_1, fa.r_2), (fb.c_1, fb.c_2, fb.r_1, fb.r_2));
}

#[test]
fn exported_waveform_reproduces_the_state() {
    let dims = ModeDims::symmetric(8).unwrap();
    let n = 24;
    let phi_r: Vec<f64> = (0..n).map(|k| (0.3 * k as f64).sin()).collect();
    let phi_b: Vec<f64> = (0..n).map(|k| 1.0 + (0.2 * k as f64).cos()).collect();
    let w = PhaseWaveform::new(phi_r, phi_b, 1.5e-4, std::f64::consts::TAU * 2e3).unwrap();
    let csv = render_csv(&w, 4.0 * n as f64 / w.total_duration()).unwrap();
    let back = parse_csv(&csv, n, w.rabi_rate()).unwrap();
    let run = |w: PhaseWaveform| propagate(&ControlHamiltonianSpec::new(dims, w), &StateVector::ground(dims)).unwrap().state;
    let (a, b) = (run(w), run(back));
    assert!(1.0 - fidelity(&a, &b).unwrap() < 1e-9);

    let (prep, p) = postselect_prep(&a).unwrap();
    assert!((p - a.spin_populations()[0]).abs() < 1e-12);
    assert!(prep.spin_populations()[1] < 1e-15);
}
