//! One function per subcommand. Each returns its files in memory; nothing is
//! written until the whole computation has succeeded.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use tmsv_core::analysis::{
    bell_trace, fit_gaussian_1d, fit_gaussian_2d, fit_superposition, mean_axis_profiles, optimize_bell_settings_with, predicted_bell,
    predicted_bell_variance, reid_criterion, squeezing_db, synthetic_superposition_grid, variance_reciprocity, AxisProfiles, BellOptimum,
    BellResult, BellSearch, BellSettings, EprResult, GaussianFit1D, GaussianFit2D, TwoGaussianFit, CLASSICAL_BOUND, TMSV_LIMIT,
};
use tmsv_core::dynamics::{coherent_tail, propagate, ControlHamiltonianSpec};
use tmsv_core::fock::{tmsv_deficit, ModeDims, StateVector, TmsvParams};
use tmsv_core::optimizer::{optimize as run_optimizer, revalidate, OptimizationProblem, OptimizationResult, TargetState};
use tmsv_core::tomography::{postselect_prep, scan_grid, ChiGrid, QuadraturePlane, QuantumState, RngSpec, ScanMode};
use tmsv_core::waveform::render_csv;
use tmsv_core::Execution;

use crate::config::{BellChoice, LabMetadata, Measurement, RunConfig, StateSource, SCHEMA_VERSION};
use crate::error::CliError;
use crate::state::{ideal_state, prepare, StateInfo};

/// Sampled-measurement stream bases, one family per command.
const SCAN_STREAM: u64 = 0x5CA0;
const BELL_STREAM: u64 = 0xBE11;
const SWEEP_STREAM: u64 = 0x5EE9;

/// Either mode above this many levels marks an optimization as slow.
pub const EXTENDED_RUNTIME_LEVELS: usize = 16;
/// Largest truncation a thermal sweep row may use (density matrices grow as `n⁴`).
pub const NOISY_SWEEP_LEVELS: usize = 32;
/// Truncation error allowed in a sweep row: state deficit and displacement tail.
const SWEEP_TRUNCATION: f64 = 1e-9;

pub struct Artifact {
    pub name: String,
    pub contents: String,
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
    /// Set when the command finished but missed its convergence target.
    pub non_convergence: Option<String>,
}

impl Outcome {
    fn new(summary: String) -> Self {
        Outcome { artifacts: Vec::new(), summary, non_convergence: None }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.artifacts.push(Artifact { name: name.into(), contents });
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.contents.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        for a in &self.artifacts {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lab_metadata: Option<LabMetadata>,
    #[serde(flatten)]
    body: T,
}

fn envelope<'a, T: Serialize>(cfg: &RunConfig, command: &'a str, body: T) -> Envelope<'a, T> {
    Envelope { schema_version: SCHEMA_VERSION, command, seed: cfg.seed, lab_metadata: cfg.lab_metadata, body }
}

fn scan_mode(cfg: &RunConfig, stream: u64) -> ScanMode {
    match cfg.tomography.mode {
        Measurement::Exact => ScanMode::Exact,
        Measurement::Sampled => ScanMode::Sampled { shots: cfg.tomography.shots, rng: RngSpec::new(cfg.seed).with_stream(stream) },
    }
}

fn plane_stream(plane: QuadraturePlane) -> u64 {
    SCAN_STREAM + QuadraturePlane::ALL.iter().position(|p| *p == plane).unwrap_or(0) as u64
}

fn scan(cfg: &RunConfig, state: &QuantumState, plane: QuadraturePlane) -> Result<ChiGrid, CliError> {
    let grid = scan_grid(state, &cfg.tomography.grid(plane), scan_mode(cfg, plane_stream(plane)), cfg.tomography.symmetry_fill, Execution::default())?;
    Ok(grid)
}

fn problem_for(cfg: &RunConfig, target: &TargetState, dims: ModeDims) -> Result<(OptimizationProblem, f64), CliError> {
    let t = target.build(dims)?;
    let o = &cfg.optimizer;
    let mut p = OptimizationProblem::new(t.state);
    p.epsilon = o.epsilon;
    p.t_max = o.t_max;
    p.filter = o.filter();
    p.rabi_rate = o.rabi_rate;
    p.seed = cfg.seed;
    p.max_iterations = o.max_iterations;
    p.n_starts = o.n_starts;
    p.validate()?;
    Ok((p, t.deficit))
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    target: TargetState,
    dims: ModeDims,
    target_deficit: f64,
    tags: Vec<&'static str>,
    epsilon: f64,
    t_max: f64,
    result: &'a OptimizationResult,
}

/// Waveform synthesis: result JSON, waveform CSV and cost-trace CSV.
pub fn optimize(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (problem, deficit) = problem_for(cfg, &cfg.target, cfg.dims)?;
    let mut result = run_optimizer(&problem)?;
    if let Some(n) = cfg.optimizer.revalidate_n_max {
        result.revalidated_fidelity = Some(revalidate(&result, &cfg.target, ModeDims::symmetric(n)?)?);
    }
    let mut tags = Vec::new();
    if cfg.dims.n_max_1().max(cfg.dims.n_max_2()) > EXTENDED_RUNTIME_LEVELS {
        tags.push("extended-runtime");
    }
    let t = result.waveform.total_duration();
    let rate = cfg.optimizer.sample_rate.unwrap_or(4.0 * result.waveform.n_seg() as f64 / t);
    let waveform_csv = render_csv(&result.waveform, rate)?;
    let mut trace = String::from("iteration,cost\n");
    for (k, c) in result.cost_trace.iter().enumerate() {
        writeln!(trace, "{k},{c}").unwrap();
    }

    let mut out = Outcome::new(format!(
        "fidelity {:.6}, duration {:.1} us, cost {:.6}, converged {}",
        result.fidelity,
        t * 1e6,
        result.cost,
        result.converged
    ));
    if !result.converged {
        out.non_convergence = Some(format!("best cost {:.6} did not fall below epsilon {}", result.cost, problem.epsilon));
    }
    let report = OptimizeReport {
        target: cfg.target,
        dims: cfg.dims,
        target_deficit: deficit,
        tags,
        epsilon: problem.epsilon,
        t_max: problem.t_max,
        result: &result,
    };
    out.add_json("optimize_result.json", &envelope(cfg, "optimize", report))?;
    out.add("waveform.csv", waveform_csv);
    out.add("cost_trace.csv", trace);
    Ok(out)
}

#[derive(Serialize)]
struct PlaneEntry {
    plane: QuadraturePlane,
    file: String,
    points: usize,
}

#[derive(Serialize)]
struct ScanManifest {
    state: StateInfo,
    measurement: Measurement,
    #[serde(skip_serializing_if = "Option::is_none")]
    shots_per_setting: Option<u64>,
    extent: f64,
    step: f64,
    planes: Vec<PlaneEntry>,
}

/// `Re χ` grids for each configured plane plus a JSON manifest.
pub fn scan_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let prepared = prepare(cfg)?;
    cfg.check_grid_truncation(prepared.info.dims)?;
    let mut out = Outcome::new(String::new());
    let mut planes = Vec::new();
    for &plane in &cfg.tomography.planes {
        let grid = scan(cfg, &prepared.state, plane)?;
        let file = format!("chi_{}.csv", plane.name());
        planes.push(PlaneEntry { plane, file: file.clone(), points: grid.samples.len() });
        out.add(&file, grid.to_csv());
    }
    out.summary = format!("{} planes scanned", planes.len());
    let manifest = ScanManifest {
        state: prepared.info,
        measurement: cfg.tomography.mode,
        shots_per_setting: (cfg.tomography.mode == Measurement::Sampled).then_some(cfg.tomography.shots),
        extent: cfg.tomography.extent,
        step: cfg.tomography.step,
        planes,
    };
    out.add_json("scan_manifest.json", &envelope(cfg, "scan", manifest))?;
    Ok(out)
}

#[derive(Serialize)]
pub struct EprReport {
    pub state: StateInfo,
    pub fit_re_re: GaussianFit2D,
    pub fit_im_im: GaussianFit2D,
    pub epr: EprResult,
    /// Quadrature variances `1/(2V)` of the two fitted χ variances.
    pub v_x_minus: f64,
    pub v_p_plus: f64,
}

/// Fits the Re–Re and Im–Im grids and evaluates the Reid product.
pub fn epr_report(cfg: &RunConfig) -> Result<EprReport, CliError> {
    let prepared = prepare(cfg)?;
    cfg.check_grid_truncation(prepared.info.dims)?;
    let rr = scan(cfg, &prepared.state, QuadraturePlane::ReRe)?;
    let ii = scan(cfg, &prepared.state, QuadraturePlane::ImIm)?;
    let fit_re_re = fit_gaussian_2d(&rr)?;
    let fit_im_im = fit_gaussian_2d(&ii)?;
    let epr = reid_criterion(fit_re_re.variance_minus, fit_im_im.variance_plus)?;
    Ok(EprReport {
        state: prepared.info,
        v_x_minus: variance_reciprocity(epr.v_beta_re_minus)?,
        v_p_plus: variance_reciprocity(epr.v_beta_im_plus)?,
        fit_re_re,
        fit_im_im,
        epr,
    })
}

pub fn epr(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let report = epr_report(cfg)?;
    let mut out = Outcome::new(format!("reid {:.6}, entangled {}", report.epr.reid_value, report.epr.entangled));
    out.add_json("epr_result.json", &envelope(cfg, "epr", &report))?;
    Ok(out)
}

fn target_params(target: &TargetState) -> Option<TmsvParams> {
    match *target {
        TargetState::Vacuum => TmsvParams::new(0.0, 0.0).ok(),
        TargetState::Tmsv { r, phi } => TmsvParams::new(r, phi).ok(),
        TargetState::Superposition { .. } => None,
    }
}

#[derive(Serialize)]
pub struct BellReport {
    pub state: StateInfo,
    pub search: Option<BellSearch>,
    pub settings: BellSettings,
    /// Closed-form `B` and projection-noise `√Var[B]` of the target at the final shot count.
    pub predicted: Option<f64>,
    pub predicted_std_dev: Option<f64>,
    pub result: BellResult,
    pub std_dev: f64,
    pub classical_bound: f64,
    pub tmsv_limit: f64,
}

pub const BELL_TRACE_HEADER: &str = "total_shots,bell_signal,std_dev,classical_bound,tmsv_limit";

/// Bell runs at each scheduled shot count (prefixes of one seeded run).
pub fn bell_report(cfg: &RunConfig) -> Result<(BellReport, Vec<BellResult>), CliError> {
    let params = target_params(&cfg.target);
    let (settings, search) = match cfg.bell.settings {
        BellChoice::Fixed(s) => (s, None),
        BellChoice::Auto(_) => {
            let p = params.ok_or_else(|| CliError::config("automatic Bell settings need a vacuum or tmsv target"))?;
            let BellOptimum { settings, .. } = optimize_bell_settings_with(p, cfg.bell.search);
            (settings, Some(cfg.bell.search))
        }
    };
    let prepared = prepare(cfg)?;
    for s in settings.measurement_settings() {
        tmsv_core::dynamics::check_displacement(s.beta_1.norm(), prepared.info.dims.n_max_1())?;
        tmsv_core::dynamics::check_displacement(s.beta_2.norm(), prepared.info.dims.n_max_2())?;
    }
    let rng = RngSpec::new(cfg.seed).with_stream(BELL_STREAM);
    let trace = bell_trace(&prepared.state, &settings, &cfg.bell.schedule, &rng, Execution::default())?;
    let last = trace.last().cloned().expect("schedule is non-empty");
    let m = *cfg.bell.schedule.last().unwrap();
    let report = BellReport {
        state: prepared.info,
        search,
        settings,
        predicted: params.map(|p| predicted_bell(p, &settings)),
        predicted_std_dev: params.map(|p| predicted_bell_variance(p, &settings, m).sqrt()),
        std_dev: last.variance.sqrt(),
        result: last,
        classical_bound: CLASSICAL_BOUND,
        tmsv_limit: TMSV_LIMIT,
    };
    Ok((report, trace))
}

pub fn bell_trace_csv(trace: &[BellResult]) -> String {
    let mut csv = format!("# classical_bound={CLASSICAL_BOUND} tmsv_limit={TMSV_LIMIT}\n{BELL_TRACE_HEADER}\n");
    for b in trace {
        writeln!(csv, "{},{},{},{},{}", b.total_shots, b.bell_signal, b.variance.sqrt(), CLASSICAL_BOUND, TMSV_LIMIT).unwrap();
    }
    csv
}

pub fn bell(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (report, trace) = bell_report(cfg)?;
    let mut out = Outcome::new(format!("B = {:.4} ± {:.4} after {} shots", report.result.bell_signal, report.std_dev, report.result.total_shots));
    out.add("bell_trace.csv", bell_trace_csv(&trace));
    out.add_json("bell_result.json", &envelope(cfg, "bell", &report))?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub n_max: usize,
    pub fit_squeezed: GaussianFit1D,
    pub fit_anti_squeezed: GaussianFit1D,
    pub db_squeezed: f64,
    pub db_anti_squeezed: f64,
    pub theory_db_squeezed: f64,
    pub theory_db_anti_squeezed: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

pub const SWEEP_HEADER: &str =
    "r,n_max,v_squeezed,v_anti_squeezed,db_squeezed,db_anti_squeezed,theory_db_squeezed,theory_db_anti_squeezed";

/// `2.5·e^r`: two and a half widths of the wider profile.
fn sweep_reach(r: f64) -> f64 {
    2.5 * r.exp()
}

/// Smallest symmetric truncation holding `TMSV(r)` and every profile displacement.
pub fn sweep_truncation(r: f64) -> usize {
    let beta = sweep_reach(r) * std::f64::consts::FRAC_1_SQRT_2;
    let mut n = 4;
    while tmsv_deficit(r, n) > SWEEP_TRUNCATION || coherent_tail(beta, n) > SWEEP_TRUNCATION {
        n += 1;
    }
    n
}

/// `10·log₁₀(e^{2r})`.
pub fn theory_db(r: f64) -> f64 {
    20.0 * r / std::f64::consts::LN_10
}

fn sweep_state(cfg: &RunConfig, r: f64, n: usize, optimized: bool) -> Result<(QuantumState, Option<OptimizationResult>), CliError> {
    let dims = ModeDims::symmetric(n)?;
    let target = TargetState::Tmsv { r, phi: 0.0 };
    if !optimized {
        return Ok((ideal_state(&target, dims, cfg.noise)?.state, None));
    }
    let (problem, _) = problem_for(cfg, &target, cfg.dims)?;
    let result = run_optimizer(&problem)?;
    let run = propagate(&ControlHamiltonianSpec::new(cfg.dims, result.waveform.clone()), &StateVector::ground(cfg.dims))?;
    let (prep, _) = postselect_prep(&run.state)?;
    let state = if cfg.dims.n_max_1() < n || cfg.dims.n_max_2() < n { prep.embed_into(dims)? } else { prep };
    Ok((state.into(), Some(result)))
}

/// Squeezing against `r` from axis-averaged profiles.
pub fn sweep_rows(cfg: &RunConfig, optimized: bool) -> Result<(Vec<SweepRow>, Vec<AxisProfiles>), CliError> {
    if optimized && !cfg.noise.is_noiseless() {
        return Err(CliError::config("an optimized sweep runs without thermal noise"));
    }
    let sizes: Vec<usize> = cfg.sweep.r_values.iter().map(|&r| sweep_truncation(r)).collect();
    if !cfg.noise.is_noiseless() {
        if let Some((r, n)) = cfg.sweep.r_values.iter().zip(&sizes).find(|(_, n)| **n > NOISY_SWEEP_LEVELS) {
            return Err(CliError::config(format!(
                "a thermal sweep row at r = {r} needs {n} levels per mode, above the density-matrix limit {NOISY_SWEEP_LEVELS}"
            )));
        }
    }
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    for (k, (&r, &n)) in cfg.sweep.r_values.iter().zip(&sizes).enumerate() {
        let (state, opt) = sweep_state(cfg, r, n, optimized)?;
        let points = cfg.sweep.points;
        let alphas: Vec<f64> = (0..points).map(|i| sweep_reach(r) * i as f64 / (points - 1) as f64).collect();
        let p = mean_axis_profiles(&state, &alphas, scan_mode(cfg, SWEEP_STREAM + k as u64), Execution::default())?;
        let fs = fit_gaussian_1d(&p.squeezed)?;
        let fa = fit_gaussian_1d(&p.anti_squeezed)?;
        rows.push(SweepRow {
            r,
            n_max: n,
            db_squeezed: squeezing_db(fs.variance)?,
            db_anti_squeezed: squeezing_db(fa.variance)?,
            fit_squeezed: fs,
            fit_anti_squeezed: fa,
            theory_db_squeezed: theory_db(r),
            theory_db_anti_squeezed: 0.0 - theory_db(r),
            fidelity: opt.as_ref().map(|o| o.fidelity),
            converged: opt.as_ref().map(|o| o.converged),
        });
        profiles.push(p);
    }
    Ok((rows, profiles))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut csv = format!("{SWEEP_HEADER}\n");
    for w in rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            w.r,
            w.n_max,
            w.fit_squeezed.variance,
            w.fit_anti_squeezed.variance,
            w.db_squeezed,
            w.db_anti_squeezed,
            w.theory_db_squeezed,
            w.theory_db_anti_squeezed
        )
        .unwrap();
    }
    csv
}

#[derive(Serialize)]
struct SweepReport<'a> {
    optimized: bool,
    noise: crate::config::NoiseConfig,
    measurement: Measurement,
    rows: &'a [SweepRow],
}

pub fn sweep(cfg: &RunConfig, optimized: bool) -> Result<Outcome, CliError> {
    let (rows, profiles) = sweep_rows(cfg, optimized)?;
    let mut prof = String::from("r,alpha,squeezed,squeezed_stderr,anti_squeezed,anti_squeezed_stderr\n");
    for (w, p) in rows.iter().zip(&profiles) {
        for (s, a) in p.squeezed.iter().zip(&p.anti_squeezed) {
            writeln!(prof, "{},{},{},{},{},{}", w.r, s.x, s.value, s.stderr, a.value, a.stderr).unwrap();
        }
    }
    let mut out = Outcome::new(format!("{} rows", rows.len()));
    if let Some(w) = rows.iter().find(|w| w.converged == Some(false)) {
        out.non_convergence = Some(format!("waveform for r = {} did not converge", w.r));
    }
    out.add("sweep.csv", sweep_csv(&rows));
    out.add("sweep_profiles.csv", prof);
    let report = SweepReport { optimized, noise: cfg.noise, measurement: cfg.tomography.mode, rows: &rows };
    out.add_json("sweep_result.json", &envelope(cfg, "sweep", report))?;
    Ok(out)
}

#[derive(Serialize)]
pub struct SuperpositionReport {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<StateInfo>,
    pub fit: TwoGaussianFit,
}

/// Re–Re grid of the configured source and its fitted two-ridge surface.
pub fn superposition_fit(cfg: &RunConfig) -> Result<(SuperpositionReport, ChiGrid), CliError> {
    let (grid, state, source) = match &cfg.state {
        StateSource::Synthetic { c_1, c_2, r_1, r_2 } => {
            (synthetic_superposition_grid(*c_1, *c_2, *r_1, *r_2, cfg.tomography.extent, cfg.tomography.step), None, "synthetic".to_string())
        }
        _ => {
            let prepared = prepare(cfg)?;
            cfg.check_grid_truncation(prepared.info.dims)?;
            let grid = scan(cfg, &prepared.state, QuadraturePlane::ReRe)?;
            let source = prepared.info.source.clone();
            (grid, Some(prepared.info), source)
        }
    };
    let fit = fit_superposition(&grid)?;
    Ok((SuperpositionReport { source, state, fit }, grid))
}

pub fn fit_superposition_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (report, grid) = superposition_fit(cfg)?;
    let mut surface = String::from("axis1,axis2,measured,fitted\n");
    for (x, y, s) in grid.values() {
        writeln!(surface, "{x},{y},{},{}", s.value, report.fit.eval(x, y)).unwrap();
    }
    let f = report.fit;
    let mut out = Outcome::new(format!("c_1 {:.4}, c_2 {:.4}, r_1 {:.4}, r_2 {:.4}", f.c_1, f.c_2, f.r_1, f.r_2));
    out.add_json("superposition_fit.json", &envelope(cfg, "fit-superposition", &report))?;
    out.add("superposition_surface.csv", surface);
    Ok(out)
}
