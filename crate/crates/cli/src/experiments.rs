//! Experiment implementations: each turns a resolved config into checks,
//! a JSON result tree, cell rows, node dumps and plot series.

use std::collections::BTreeMap;
use std::sync::Arc;

use fermatlab_core::functionals::{ClassicalLength, ClassicalTime, InverseJacobiAction, JacobiAction, QuantumTime};
use fermatlab_core::hilbert::{
    aa_length_check, fs_segment_length, nonlinear_velocity, propagate_nonlinear, propagate_schrodinger,
    propagate_schrodinger_td, schrodinger_velocity, stationarity_residual, time_dependent_residual, QuantumState,
    QuantumTrajectory, C64,
};
use fermatlab_core::numeric::fit_order;
use fermatlab_core::phase::{
    cross_validate, gradient_flow, hamilton_flow, ClassicalSystem, ClassicalTrajectory, PhasePoint,
};
use fermatlab_core::systems::{build_classical, build_quantum, build_time_dependent, random_state, SystemKind};
use fermatlab_core::variation::{
    isoperimetric_refinement, lambda_consistency, stationarity_test, ConfigChordSource, ConfigDistortedSource,
    ConfigFlowSource, Constraint, ConstraintPolicy, DenseFlow, Direction, DirectionSpec, FlowSource, GeodesicSource,
    MultiplierTrace, PathSource, SchrodingerSource, ShellChordSource, ShellDistortedSource, SmoothRandomSource,
    StationarityReport, Thresholds,
};
use fermatlab_core::{Error, Result};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BaselineKind, ExperimentKind, InitialSpec, ResolvedConfig};

/// Extra run time integrated past `t_final` for distorted baselines.
const OVERSHOOT: f64 = 0.125;
/// Re-timing strength of the distorted shell baseline.
const DISTORTION_WARP: f64 = 0.5;
/// Bump amplitude of distorted baselines.
const DISTORTION_AMPLITUDE: f64 = 0.05;
/// Bump amplitude of the smooth random quantum baseline.
const SMOOTH_RANDOM_AMPLITUDE: f64 = 0.2;
/// Seed offset separating baseline geometry from perturbation directions.
const BASELINE_SEED_OFFSET: u64 = 1_000_003;
/// Probe points for derivative validation.
const PROBES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub observed: String,
    pub expected: Option<String>,
    /// `None` when no expectation is declared.
    pub agrees: Option<bool>,
    pub metrics: BTreeMap<String, f64>,
}

/// One `(path, direction, epsilon, grid)` row of cells.csv.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRow {
    pub experiment: String,
    pub direction: usize,
    pub mode: u32,
    pub seed: u64,
    pub epsilon: f64,
    pub grid: usize,
    #[serde(rename = "T")]
    pub value: f64,
    #[serde(rename = "dTde_2pt")]
    pub central: f64,
    #[serde(rename = "dTde_4pt")]
    pub four_point: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathDump {
    pub label: String,
    pub columns: Vec<String>,
    pub taus: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub results: BTreeMap<String, Value>,
    pub checks: Vec<CheckResult>,
    pub cells: Vec<CellRow>,
    pub paths: Vec<PathDump>,
    pub plots: Vec<Plot>,
    /// Stationarity reports by result key, for sweep post-processing.
    pub reports: Vec<(String, StationarityReport)>,
}

impl Outcome {
    fn check(&mut self, name: &str, observed: &str, metrics: &[(&str, f64)]) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            observed: observed.to_string(),
            expected: None,
            agrees: None,
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }

    fn result<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(format!("serializing {key}: {e}")))?;
        self.results.insert(key.to_string(), v);
        Ok(())
    }

    fn report(&mut self, key: &str, report: StationarityReport) -> Result<()> {
        self.result(key, &report)?;
        self.reports.push((key.to_string(), report));
        Ok(())
    }

    /// Whether every declared expectation is met.
    pub fn agrees(&self) -> bool {
        self.checks.iter().all(|c| c.agrees != Some(false))
    }
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

/// Runs the experiment of `cfg` on the ambient rayon pool.
pub fn run(cfg: &ResolvedConfig) -> Result<Outcome> {
    let mut out = match cfg.experiment {
        ExperimentKind::QuantumStationarity => quantum_stationarity(cfg),
        ExperimentKind::QuantumResiduals => quantum_residuals(cfg),
        ExperimentKind::AaLength => aa_length(cfg),
        ExperimentKind::NonlinearFlow => nonlinear_flow(cfg),
        ExperimentKind::ClassicalStationarity => phase_stationarity(cfg, false),
        ExperimentKind::ShellGeodesic => phase_stationarity(cfg, true),
        ExperimentKind::LambdaConsistency => multiplier_consistency(cfg),
        ExperimentKind::Isoperimetric => isoperimetric(cfg),
        ExperimentKind::ConfigSpace => config_space(cfg),
        ExperimentKind::SpinHypothesis => spin_hypothesis(cfg),
    }?;
    for c in &mut out.checks {
        c.expected = cfg.expect.get(&c.name).cloned();
        c.agrees = c.expected.as_ref().map(|e| *e == c.observed);
    }
    Ok(out)
}

fn thresholds(cfg: &ResolvedConfig) -> Thresholds {
    Thresholds {
        ratio: cfg.tolerance("ratio"),
        min_order: cfg.tolerance("min_order"),
        order_slack: cfg.tolerance("order_slack"),
        convergence: cfg.tolerance("convergence"),
        noise_floor: cfg.tolerance("noise_floor"),
    }
}

fn directions(cfg: &ResolvedConfig) -> Result<Vec<DirectionSpec>> {
    DirectionSpec::family(cfg.variation.n_directions, &cfg.variation.modes, cfg.variation.seed)
}

fn baseline_seed(cfg: &ResolvedConfig) -> u64 {
    cfg.variation.seed.wrapping_add(BASELINE_SEED_OFFSET)
}

fn quantum_initial(cfg: &ResolvedConfig, dim: usize, offset: u64) -> Result<QuantumState> {
    match &cfg.path.initial {
        InitialSpec::Seed(s) => random_state(dim, s.wrapping_add(offset)),
        InitialSpec::Basis(k) => QuantumState::basis(dim, *k),
        other => Err(Error::InvalidParameter(format!("{other:?} is not a quantum initial state"))),
    }
}

fn classical_initial(cfg: &ResolvedConfig, sys: &ClassicalSystem) -> Result<PhasePoint> {
    let x = match &cfg.path.initial {
        InitialSpec::Point(v) => PhasePoint::from_slice(v)?,
        InitialSpec::Default => cfg.system.default_initial_point()?,
        other => return Err(Error::InvalidParameter(format!("{other:?} is not a classical initial point"))),
    };
    if x.coords().len() != sys.phase_dim() {
        return Err(Error::DimensionMismatch { expected: sys.phase_dim(), found: x.coords().len() });
    }
    Ok(x)
}

fn quantum_columns(dim: usize) -> Vec<String> {
    (0..dim).flat_map(|i| [format!("re{i}"), format!("im{i}")]).collect()
}

fn quantum_row(psi: &QuantumState) -> Vec<f64> {
    psi.amplitudes().iter().flat_map(|z| [z.re, z.im]).collect()
}

fn trajectory_dump(label: &str, traj: &QuantumTrajectory) -> PathDump {
    PathDump {
        label: label.to_string(),
        columns: quantum_columns(traj.states[0].dim()),
        taus: traj.times.clone(),
        rows: traj.states.iter().map(quantum_row).collect(),
    }
}

fn classical_dump(label: &str, traj: &ClassicalTrajectory) -> PathDump {
    let n = traj.points[0].dof();
    PathDump {
        label: label.to_string(),
        columns: (0..n).map(|i| format!("q{i}")).chain((0..n).map(|i| format!("p{i}"))).collect(),
        taus: traj.times.clone(),
        rows: traj.points.iter().map(|x| x.coords().as_slice().to_vec()).collect(),
    }
}

fn uniform_taus(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Checks and records for one stationarity report; `prefix` separates the two
/// reports of the configuration-space suite.
fn absorb_report(out: &mut Outcome, cfg: &ResolvedConfig, report: &StationarityReport, check_prefix: Option<&str>) {
    let tag = |label: &str| match check_prefix {
        Some(p) => format!("{}/{p}/{label}", cfg.experiment),
        None => format!("{}/{label}", cfg.experiment),
    };
    let mut push_cells = |label: &str, cells: &[fermatlab_core::variation::Cell]| {
        out.cells.extend(cells.iter().map(|c| CellRow {
            experiment: tag(label),
            direction: c.direction,
            mode: c.mode,
            seed: c.seed,
            epsilon: c.epsilon,
            grid: c.grid,
            value: c.value,
            central: c.central,
            four_point: c.four_point,
        }));
    };
    push_cells(&report.candidate.label, &report.candidate.cells);
    for b in &report.baselines {
        if let Some(r) = &b.report {
            push_cells(&b.label, &r.cells);
        }
    }

    let max_ratio = report.ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min_order = report.candidate.directions.iter().filter_map(|d| d.order).fold(f64::INFINITY, f64::min);
    let max_final = report.candidate.directions.iter().map(|d| d.final_slope().abs()).fold(0.0, f64::max);
    let usable = report.baselines.iter().filter(|b| b.usable).count() as f64;
    let name = check_prefix.unwrap_or("candidate");
    out.check(
        name,
        report.verdict.as_str(),
        &[
            ("max_ratio", max_ratio),
            ("min_order", if min_order.is_finite() { min_order } else { f64::NAN }),
            ("max_final_slope", max_final),
            ("usable_baselines", usable),
        ],
    );
    if check_prefix.is_none() {
        for b in &report.baselines {
            let (observed, scale) = match &b.report {
                Some(r) => (r.intrinsic.as_str(), b.scale.unwrap_or(f64::NAN)),
                None => ("inconclusive", f64::NAN),
            };
            out.check(&b.label, observed, &[("slope_scale", scale)]);
        }
    }

    let mut series = vec![];
    let mut add = |label: String, levels: Vec<(f64, f64)>| series.push(Series { label, points: levels });
    for d in &report.candidate.directions {
        add(
            format!("{} dir {}", report.candidate.label, d.index),
            d.levels.iter().map(|l| (l.grid as f64, l.slope.abs())).collect(),
        );
    }
    for b in &report.baselines {
        if let Some(r) = &b.report {
            let rms = |g: usize| {
                let n = r.directions.len().max(1) as f64;
                (r.directions.iter().map(|d| d.levels[g].slope.powi(2)).sum::<f64>() / n).sqrt()
            };
            add(
                format!("{} rms", b.label),
                (0..report.grid_sizes.len()).map(|g| (report.grid_sizes[g] as f64, rms(g))).collect(),
            );
        }
    }
    out.plots.push(Plot {
        title: format!("{} {}", tag(""), report.functional.id()),
        x_label: "grid segments".into(),
        y_label: "|dT/de| extrapolated".into(),
        log_x: true,
        log_y: true,
        series,
    });
}

fn time_identity_check(out: &mut Outcome, cfg: &ResolvedConfig, report: &StationarityReport) {
    let value = report.candidate.final_value();
    let rel = (value - cfg.path.t_final).abs() / cfg.path.t_final;
    let observed = if rel < cfg.tolerance("time_identity") { "holds" } else { "violated" };
    out.check(
        "time_identity",
        observed,
        &[("functional", value), ("elapsed", cfg.path.t_final), ("relative_error", rel)],
    );
}

fn quantum_stationarity(cfg: &ResolvedConfig) -> Result<Outcome> {
    let h = build_quantum(&cfg.system)?;
    let psi0 = quantum_initial(cfg, h.dim(), 0)?;
    let sign = cfg.path.sign;
    let end = propagate_schrodinger(&psi0, &h, cfg.path.t_final, 1, sign)?.last().clone();
    let cand = SchrodingerSource { hamiltonian: h.clone(), initial: psi0.clone(), t_final: cfg.path.t_final, sign };
    let baselines: Vec<Box<dyn PathSource<_>>> = cfg
        .variation
        .baselines
        .iter()
        .map(|b| -> Box<dyn PathSource<_>> {
            match b {
                BaselineKind::FsGeodesic => Box::new(GeodesicSource { start: psi0.clone(), end: end.clone() }),
                _ => Box::new(SmoothRandomSource {
                    start: psi0.clone(),
                    end: end.clone(),
                    seed: baseline_seed(cfg),
                    amplitude: SMOOTH_RANDOM_AMPLITUDE,
                }),
            }
        })
        .collect();
    let refs: Vec<&dyn PathSource<_>> = baselines.iter().map(|b| b.as_ref()).collect();
    let report = stationarity_test(
        &cand,
        &refs,
        &QuantumTime(h.clone()),
        &Constraint::Renormalize,
        &directions(cfg)?,
        &cfg.variation.epsilons,
        &cfg.path.grids,
        &thresholds(cfg),
    )?;

    let mut out = Outcome::default();
    absorb_report(&mut out, cfg, &report, None);
    time_identity_check(&mut out, cfg, &report);
    let finest = *cfg.path.grids.last().unwrap();
    for src in std::iter::once(&cand as &dyn PathSource<_>).chain(refs.iter().copied()) {
        let path = src.at_grid(finest)?;
        out.paths.push(PathDump {
            label: src.label(),
            columns: quantum_columns(h.dim()),
            taus: uniform_taus(finest),
            rows: path.states().iter().map(quantum_row).collect(),
        });
    }
    out.report("stationarity", report)?;
    Ok(out)
}

fn random_velocity(dim: usize, seed: u64) -> DVector<C64> {
    match Direction::random_complex(dim, seed) {
        Direction::Complex(v) => v,
        Direction::Real(_) => unreachable!("random_complex returns a complex direction"),
    }
}

#[derive(Serialize)]
struct ResidualSample {
    index: usize,
    dim: usize,
    schrodinger: [f64; 2],
    nonlinear: [f64; 2],
    time_dependent: [f64; 4],
    random: f64,
}

fn residual_verdict(max: f64, tol: f64) -> &'static str {
    if max < tol {
        "vanishing"
    } else {
        "nonzero"
    }
}

fn quantum_residuals(cfg: &ResolvedConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    let tol = cfg.tolerance("residual");
    let random_tol = cfg.tolerance("random_residual");
    let system_seed = cfg.system.seed_or_default();
    let signs = [cfg.path.sign, cfg.path.sign.flip()];

    if cfg.system.kind == SystemKind::DrivenQubit {
        let td = build_time_dependent(&cfg.system)?;
        let psi0 = quantum_initial(cfg, 2, 0)?;
        let traj = propagate_schrodinger_td(&psi0, &td, cfg.path.t_final, cfg.path.n_steps)?;
        let mut worst: f64 = 0.0;
        let mut worst_imag: f64 = 0.0;
        let mut smallest_random = f64::INFINITY;
        let mut series = vec![];
        for (k, (t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
            let h = td.at(*t)?;
            let mut node: f64 = 0.0;
            for v in [
                schrodinger_velocity(psi, &h, fermatlab_core::hilbert::Sign::Forward)?,
                nonlinear_velocity(psi, &h, fermatlab_core::hilbert::Sign::Forward)?,
            ] {
                let r = time_dependent_residual(psi, &v, &h)?;
                node = node.max(r.value.abs());
                worst_imag = worst_imag.max(r.imaginary.abs());
            }
            worst = worst.max(node);
            series.push((*t, node));
            if k < cfg.path.samples {
                let r = time_dependent_residual(psi, &random_velocity(2, system_seed.wrapping_add(k as u64)), &h)?;
                smallest_random = smallest_random.min(r.value.abs());
            }
        }
        let observed =
            if worst < cfg.tolerance("driven_residual") && worst_imag < 1e-12 { "vanishing" } else { "nonzero" };
        out.check(
            "driven_residual",
            observed,
            &[("max_abs", worst), ("max_imaginary", worst_imag), ("nodes", traj.len() as f64)],
        );
        let observed = if smallest_random > random_tol { "nonzero" } else { "vanishing" };
        out.check("random_residual", observed, &[("min_abs", smallest_random)]);
        out.result(
            "driven",
            &json!({
                "nodes": traj.len(),
                "max_norm_drift": traj.max_norm_drift,
                "warnings": traj.warnings,
                "max_residual": worst,
                "max_imaginary": worst_imag,
                "min_random_residual": smallest_random,
            }),
        )?;
        out.paths.push(trajectory_dump("driven_schrodinger", &traj));
        out.plots.push(Plot {
            title: "time-dependent residual along driven flow".into(),
            x_label: "t".into(),
            y_label: "|residual|".into(),
            log_x: false,
            log_y: true,
            series: vec![Series { label: "max over velocities".into(), points: series }],
        });
        return Ok(out);
    }

    let mut samples = Vec::with_capacity(cfg.path.samples);
    for s in 0..cfg.path.samples {
        let spec = if cfg.system.kind == SystemKind::RandomHermitian {
            cfg.system.clone().with_seed(system_seed.wrapping_add(s as u64))
        } else {
            cfg.system.clone()
        };
        let h = build_quantum(&spec)?;
        let psi = quantum_initial(cfg, h.dim(), s as u64)?;
        let mut rec = ResidualSample {
            index: s,
            dim: h.dim(),
            schrodinger: [0.0; 2],
            nonlinear: [0.0; 2],
            time_dependent: [0.0; 4],
            random: 0.0,
        };
        for (i, sign) in signs.iter().enumerate() {
            let lin = schrodinger_velocity(&psi, &h, *sign)?;
            let nl = nonlinear_velocity(&psi, &h, *sign)?;
            rec.schrodinger[i] = stationarity_residual(&psi, &lin, &h)?.norm();
            rec.nonlinear[i] = stationarity_residual(&psi, &nl, &h)?.norm();
            let (a, b) = (time_dependent_residual(&psi, &lin, &h)?, time_dependent_residual(&psi, &nl, &h)?);
            rec.time_dependent[2 * i] = a.value.abs().max(a.imaginary.abs());
            rec.time_dependent[2 * i + 1] = b.value.abs().max(b.imaginary.abs());
        }
        let v = random_velocity(h.dim(), system_seed.wrapping_add(7919 * (s as u64 + 1)));
        rec.random = stationarity_residual(&psi, &v, &h)?.norm();
        samples.push(rec);
    }
    let flow_max = samples.iter().flat_map(|r| r.schrodinger.iter().chain(&r.nonlinear)).fold(0.0f64, |a, b| a.max(*b));
    let td_max = samples.iter().flat_map(|r| r.time_dependent.iter()).fold(0.0f64, |a, b| a.max(*b));
    let random_min = samples.iter().map(|r| r.random).fold(f64::INFINITY, f64::min);
    out.check("flow_residual", residual_verdict(flow_max, tol), &[("max_abs", flow_max)]);
    out.check("time_dependent_residual", residual_verdict(td_max, tol), &[("max_abs", td_max)]);

    // along trajectories of both flows
    let h = build_quantum(&cfg.system)?;
    let psi0 = quantum_initial(cfg, h.dim(), 0)?;
    let lin = propagate_schrodinger(&psi0, &h, cfg.path.t_final, cfg.path.n_steps, cfg.path.sign)?;
    let nl = propagate_nonlinear(&psi0, &h, cfg.path.t_final, cfg.path.n_steps, cfg.path.sign)?;
    let mut traj_max: f64 = 0.0;
    let mut series = vec![];
    for (k, t) in lin.times.iter().enumerate() {
        let (a, b) = (&lin.states[k], &nl.states[k]);
        let ra = stationarity_residual(a, &schrodinger_velocity(a, &h, cfg.path.sign)?, &h)?.norm();
        let rb = stationarity_residual(b, &nonlinear_velocity(b, &h, cfg.path.sign)?, &h)?.norm();
        let ta = time_dependent_residual(a, &schrodinger_velocity(a, &h, cfg.path.sign)?, &h)?.value.abs();
        let tb = time_dependent_residual(b, &nonlinear_velocity(b, &h, cfg.path.sign)?, &h)?.value.abs();
        let node = ra.max(rb).max(ta).max(tb);
        traj_max = traj_max.max(node);
        series.push((*t, node));
    }
    out.check(
        "trajectory_residual",
        residual_verdict(traj_max, tol),
        &[("max_abs", traj_max), ("nodes", lin.len() as f64)],
    );
    let observed = if random_min > random_tol { "nonzero" } else { "vanishing" };
    out.check("random_residual", observed, &[("min_abs", random_min)]);
    out.result("samples", &samples)?;
    out.result(
        "trajectories",
        &json!({
            "nodes": lin.len(),
            "max_residual": traj_max,
            "nonlinear_max_norm_drift": nl.max_norm_drift,
        }),
    )?;
    out.paths.push(trajectory_dump("schrodinger", &lin));
    out.paths.push(trajectory_dump("nonlinear", &nl));
    out.plots.push(Plot {
        title: "stationarity residuals along both flows".into(),
        x_label: "t".into(),
        y_label: "|residual|".into(),
        log_x: false,
        log_y: true,
        series: vec![Series { label: "max over flows".into(), points: series }],
    });
    Ok(out)
}

fn aa_length(cfg: &ResolvedConfig) -> Result<Outcome> {
    let h = build_quantum(&cfg.system)?;
    let psi0 = quantum_initial(cfg, h.dim(), 0)?;
    let traj = propagate_schrodinger(&psi0, &h, cfg.path.t_final, cfg.path.n_steps, cfg.path.sign)?;
    let aa = aa_length_check(&traj, &h)?;
    let tol = cfg.tolerance("aa_relative");
    let both_zero = aa.fs_length < 1e-12 && aa.uncertainty_integral < 1e-12;
    let observed = if both_zero || aa.relative_gap() < tol { "equal" } else { "different" };
    let mut out = Outcome::default();
    out.check(
        "aa_length",
        observed,
        &[
            ("fs_length", aa.fs_length),
            ("uncertainty_integral", aa.uncertainty_integral),
            ("relative_gap", aa.relative_gap()),
        ],
    );
    let mut fs = vec![(0.0, 0.0)];
    let mut acc = 0.0;
    for k in 1..traj.len() {
        acc += fs_segment_length(&traj.states[k - 1], &traj.states[k])?;
        fs.push((traj.times[k], acc));
    }
    out.plots.push(Plot {
        title: "cumulative FS length".into(),
        x_label: "t".into(),
        y_label: "length".into(),
        log_x: false,
        log_y: false,
        series: vec![Series { label: "FS length".into(), points: fs }],
    });
    out.result("aa", &aa)?;
    out.paths.push(trajectory_dump("schrodinger", &traj));
    Ok(out)
}

fn nonlinear_flow(cfg: &ResolvedConfig) -> Result<Outcome> {
    let h = build_quantum(&cfg.system)?;
    let psi0 = quantum_initial(cfg, h.dim(), 0)?;
    let sign = cfg.path.sign;
    let traj = propagate_nonlinear(&psi0, &h, cfg.path.t_final, cfg.path.n_steps, sign)?;
    let reversed = propagate_schrodinger(&psi0, &h, cfg.path.t_final, cfg.path.n_steps, sign.flip())?;
    let tol = cfg.tolerance("residual");
    let (mut r7, mut r9, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut series = vec![];
    for (k, psi) in traj.states.iter().enumerate() {
        let v = nonlinear_velocity(psi, &h, sign)?;
        let a = stationarity_residual(psi, &v, &h)?.norm();
        let b = time_dependent_residual(psi, &v, &h)?;
        r7 = r7.max(a);
        r9 = r9.max(b.value.abs()).max(b.imaginary.abs());
        let d = fs_segment_length(psi, &reversed.states[k])?;
        gap = gap.max(d);
        series.push((traj.times[k], d.max(1e-17)));
    }
    let mut out = Outcome::default();
    let norm_tol = cfg.tolerance("norm");
    let observed = if traj.total_norm_drift < norm_tol { "conserved" } else { "drifting" };
    out.check(
        "norm",
        observed,
        &[("accumulated_drift", traj.total_norm_drift), ("max_step_drift", traj.max_norm_drift)],
    );
    out.check("stationarity_residual", residual_verdict(r7, tol), &[("max_abs", r7)]);
    out.check("time_dependent_residual", residual_verdict(r9, tol), &[("max_abs", r9)]);
    let observed = if gap < cfg.tolerance("projective_match") { "matches" } else { "differs" };
    out.check("reversed_match", observed, &[("max_fs_distance", gap)]);
    out.result(
        "nonlinear",
        &json!({
            "nodes": traj.len(),
            "total_norm_drift": traj.total_norm_drift,
            "max_norm_drift": traj.max_norm_drift,
            "warnings": traj.warnings,
            "max_stationarity_residual": r7,
            "max_time_dependent_residual": r9,
            "max_distance_to_reversed_schrodinger": gap,
        }),
    )?;
    out.plots.push(Plot {
        title: "FS distance between nonlinear flow and reversed Schrodinger flow".into(),
        x_label: "t".into(),
        y_label: "distance".into(),
        log_x: false,
        log_y: true,
        series: vec![Series { label: "distance".into(), points: series }],
    });
    out.paths.push(trajectory_dump("nonlinear", &traj));
    Ok(out)
}

fn dense_flow(cfg: &ResolvedConfig, sys: &ClassicalSystem) -> Result<Arc<DenseFlow>> {
    let x0 = classical_initial(cfg, sys)?;
    Ok(Arc::new(DenseFlow::integrate_steps(sys, &x0, cfg.path.t_final, cfg.path.sign, OVERSHOOT, cfg.path.n_steps)?))
}

fn energy_check(out: &mut Outcome, cfg: &ResolvedConfig, flow: &DenseFlow) {
    let drift = flow.trajectory.energy_drift;
    let scaled = drift / flow.energy.abs().max(1.0);
    let observed = if scaled < cfg.tolerance("energy_drift") { "conserved" } else { "drifting" };
    out.check("energy_drift", observed, &[("max_abs", drift), ("energy", flow.energy)]);
}

fn flow_dumps(
    cfg: &ResolvedConfig,
    sources: &[&dyn PathSource<fermatlab_core::functionals::ClassicalPath>],
    dof: usize,
) -> Result<Vec<PathDump>> {
    let finest = *cfg.path.grids.last().unwrap();
    sources
        .iter()
        .map(|s| {
            let p = s.at_grid(finest)?;
            Ok(PathDump {
                label: s.label(),
                columns: (0..dof).map(|i| format!("q{i}")).chain((0..dof).map(|i| format!("p{i}"))).collect(),
                taus: uniform_taus(finest),
                rows: p.points().iter().map(|x| x.coords().as_slice().to_vec()).collect(),
            })
        })
        .collect()
}

/// Shell-constrained stationarity of the time functional or of the bare length.
fn phase_run(
    cfg: &ResolvedConfig,
    sys: &ClassicalSystem,
    flow: &Arc<DenseFlow>,
    length: bool,
    out: &mut Outcome,
) -> Result<()> {
    let cand = FlowSource { flow: flow.clone() };
    let baselines: Vec<Box<dyn PathSource<_>>> = cfg
        .variation
        .baselines
        .iter()
        .map(|b| -> Box<dyn PathSource<_>> {
            match b {
                BaselineKind::ShellChord => Box::new(ShellChordSource {
                    start: flow.start().clone(),
                    end: flow.end().clone(),
                    system: sys.clone(),
                    energy: flow.energy,
                }),
                _ => Box::new(ShellDistortedSource {
                    flow: flow.clone(),
                    warp: DISTORTION_WARP,
                    amplitude: DISTORTION_AMPLITUDE,
                    seed: baseline_seed(cfg),
                }),
            }
        })
        .collect();
    let refs: Vec<&dyn PathSource<_>> = baselines.iter().map(|b| b.as_ref()).collect();
    let constraint = Constraint::Shell { system: sys.clone(), energy: flow.energy };
    let (dirs, th) = (directions(cfg)?, thresholds(cfg));
    let report = if length {
        stationarity_test(
            &cand,
            &refs,
            &ClassicalLength,
            &constraint,
            &dirs,
            &cfg.variation.epsilons,
            &cfg.path.grids,
            &th,
        )?
    } else {
        stationarity_test(
            &cand,
            &refs,
            &ClassicalTime(sys.clone()),
            &constraint,
            &dirs,
            &cfg.variation.epsilons,
            &cfg.path.grids,
            &th,
        )?
    };
    absorb_report(out, cfg, &report, None);
    if !length {
        time_identity_check(out, cfg, &report);
    }
    energy_check(out, cfg, flow);
    let all: Vec<&dyn PathSource<_>> =
        std::iter::once(&cand as &dyn PathSource<_>).chain(refs.iter().copied()).collect();
    out.paths.extend(flow_dumps(cfg, &all, sys.dof())?);
    out.report("stationarity", report)
}

fn phase_stationarity(cfg: &ResolvedConfig, length: bool) -> Result<Outcome> {
    let sys = build_classical(&cfg.system)?;
    let flow = dense_flow(cfg, &sys)?;
    let mut out = Outcome::default();
    phase_run(cfg, &sys, &flow, length, &mut out)?;
    Ok(out)
}

fn consistency_label(cfg: &ResolvedConfig, spread: f64) -> &'static str {
    if spread < cfg.tolerance("consistency") {
        "consistent"
    } else if spread > cfg.tolerance("inconsistency") {
        "inconsistent"
    } else {
        "inconclusive"
    }
}

fn spread_series(label: &str, trace: &MultiplierTrace) -> Series {
    Series {
        label: label.to_string(),
        points: trace.times.iter().zip(&trace.node_spreads).map(|(t, s)| (*t, s.max(1e-17))).collect(),
    }
}

fn multiplier_traces(
    cfg: &ResolvedConfig,
    sys: &ClassicalSystem,
    with_gradient: bool,
    out: &mut Outcome,
) -> Result<()> {
    let x0 = classical_initial(cfg, sys)?;
    let e = sys.energy(&x0);
    let (t, n, sign) = (cfg.path.t_final, cfg.path.n_steps, cfg.path.sign);
    let mut cases = vec![
        ("forward", hamilton_flow(&x0, sys, t, n, sign)?, Some(e)),
        ("reversed", hamilton_flow(&x0, sys, t, n, sign.flip())?, Some(e)),
    ];
    if with_gradient {
        cases.push(("gradient_flow", gradient_flow(&x0, sys, t, n)?, None));
    }
    let mut series = vec![];
    let mut traces = BTreeMap::new();
    for (name, traj, energy) in &cases {
        let trace = lambda_consistency(traj, sys, *energy)?;
        out.check(
            name,
            consistency_label(cfg, trace.spread),
            &[
                ("spread", trace.spread),
                ("worst_node", trace.worst_node.map_or(f64::NAN, |k| k as f64)),
                ("excluded", trace.excluded as f64),
                ("mean_abs_lambda", trace.mean_magnitude()),
                ("shell_deviation", trace.shell_deviation.unwrap_or(f64::NAN)),
            ],
        );
        series.push(spread_series(name, &trace));
        out.paths.push(classical_dump(name, traj));
        traces.insert(name.to_string(), to_json(&trace));
    }
    out.plots.push(Plot {
        title: format!("multiplier spread per node, {}", sys.name()),
        x_label: "t".into(),
        y_label: "relative spread".into(),
        log_x: false,
        log_y: true,
        series,
    });
    out.result("multipliers", &traces)
}

fn multiplier_consistency(cfg: &ResolvedConfig) -> Result<Outcome> {
    let sys = build_classical(&cfg.system)?;
    let mut out = Outcome::default();
    multiplier_traces(cfg, &sys, true, &mut out)?;
    Ok(out)
}

fn isoperimetric(cfg: &ResolvedConfig) -> Result<Outcome> {
    let sys = build_classical(&cfg.system)?;
    let x0 = classical_initial(cfg, &sys)?;
    let dense = hamilton_flow(&x0, &sys, cfg.path.t_final, cfg.path.n_steps, cfg.path.sign)?;
    let mut out = Outcome::default();
    out.paths.push(classical_dump("hamilton_flow", &dense));
    match isoperimetric_refinement(&dense, &sys, &cfg.path.grids) {
        Ok(traces) => {
            let spreads: Vec<f64> = traces.iter().map(|t| t.spread).collect();
            let finest = *spreads.last().unwrap();
            let observed = if finest > cfg.tolerance("isoperimetric") { "inconsistent" } else { "consistent" };
            out.check("constant_multiplier", observed, &[("finest_spread", finest)]);
            let non_decreasing = spreads.windows(2).all(|w| w[1] >= w[0]);
            out.check(
                "refinement",
                if non_decreasing { "non_decreasing" } else { "decreasing" },
                &[("coarsest_spread", spreads[0]), ("finest_spread", finest)],
            );
            out.plots.push(Plot {
                title: format!("constant-multiplier spread, {}", sys.name()),
                x_label: "grid segments".into(),
                y_label: "spread".into(),
                log_x: true,
                log_y: false,
                series: vec![Series {
                    label: "spread".into(),
                    points: cfg.path.grids.iter().map(|g| *g as f64).zip(spreads.iter().copied()).collect(),
                }],
            });
            out.result(
                "isoperimetric",
                &json!({
                    "grids": cfg.path.grids,
                    "spreads": spreads,
                    "traces": traces,
                }),
            )?;
        }
        Err(e @ Error::DegenerateGeometry { .. }) | Err(e @ Error::DegenerateSpeed { .. }) => {
            out.check("constant_multiplier", "degenerate", &[]);
            out.check("refinement", "degenerate", &[]);
            out.result("isoperimetric", &json!({ "degenerate": e.to_string() }))?;
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn config_space(cfg: &ResolvedConfig) -> Result<Outcome> {
    let sys = build_classical(&cfg.system)?;
    let flow = dense_flow(cfg, &sys)?;
    let e = flow.energy;
    let constraint = match cfg.variation.constraint {
        ConstraintPolicy::ProjectToEquipotential => {
            let q0 = flow.start().q();
            let level = sys
                .potential(&q0)
                .ok_or_else(|| Error::InvalidParameter(format!("{} has no potential", sys.name())))?;
            Constraint::Equipotential { system: sys.clone(), level }
        }
        _ => Constraint::None,
    };
    let cand = ConfigFlowSource { flow: flow.clone() };
    let finest = *cfg.path.grids.last().unwrap();
    let margins = cand.at_grid(finest)?.check_accessible(&sys, e)?;
    let baselines: Vec<Box<dyn PathSource<_>>> = cfg
        .variation
        .baselines
        .iter()
        .map(|b| -> Box<dyn PathSource<_>> {
            match b {
                BaselineKind::ConfigChord => Box::new(ConfigChordSource {
                    start: flow.start().q(),
                    end: flow.end().q(),
                    constraint: constraint.clone(),
                }),
                _ => Box::new(ConfigDistortedSource {
                    flow: flow.clone(),
                    amplitude: DISTORTION_AMPLITUDE,
                    seed: baseline_seed(cfg),
                    constraint: constraint.clone(),
                }),
            }
        })
        .collect();
    let refs: Vec<&dyn PathSource<_>> = baselines.iter().map(|b| b.as_ref()).collect();
    let (dirs, th) = (directions(cfg)?, thresholds(cfg));
    let (eps, grids) = (&cfg.variation.epsilons, &cfg.path.grids);
    let jac = stationarity_test(
        &cand,
        &refs,
        &JacobiAction { system: sys.clone(), energy: e },
        &constraint,
        &dirs,
        eps,
        grids,
        &th,
    )?;
    let inv = stationarity_test(
        &cand,
        &refs,
        &InverseJacobiAction { system: sys.clone(), energy: e },
        &constraint,
        &dirs,
        eps,
        grids,
        &th,
    )?;
    let mut out = Outcome::default();
    absorb_report(&mut out, cfg, &jac, Some("jacobi"));
    absorb_report(&mut out, cfg, &inv, Some("inverse_jacobi"));
    for s in std::iter::once(&cand as &dyn PathSource<_>).chain(refs.iter().copied()) {
        let p = s.at_grid(finest)?;
        out.paths.push(PathDump {
            label: s.label(),
            columns: (0..sys.dof()).map(|i| format!("q{i}")).collect(),
            taus: uniform_taus(finest),
            rows: p.positions().iter().map(|q| q.as_slice().to_vec()).collect(),
        });
    }
    out.result("energy", &e)?;
    out.result("min_kinetic_margin", &margins.iter().copied().fold(f64::INFINITY, f64::min))?;
    out.report("jacobi", jac)?;
    out.report("inverse_jacobi", inv)?;
    Ok(out)
}

fn spin_hypothesis(cfg: &ResolvedConfig) -> Result<Outcome> {
    let sys = build_classical(&cfg.system)?;
    let mut out = Outcome::default();

    let probes = cfg.system.probe_points(PROBES, cfg.variation.seed)?;
    let d = cross_validate(&sys, &probes)?;
    let ok = d.gradient_error < 1e-6 && d.hessian_error < cfg.tolerance("derivative") && d.hessian_asymmetry < 1e-10;
    out.check(
        "derivatives",
        if ok { "validated" } else { "mismatch" },
        &[
            ("gradient_error", d.gradient_error),
            ("hessian_error", d.hessian_error),
            ("hessian_asymmetry", d.hessian_asymmetry),
        ],
    );

    let flow = dense_flow(cfg, &sys)?;
    let z = |x: &PhasePoint| x.q().iter().sum::<f64>();
    let z0 = z(flow.start());
    let drift = flow.trajectory.points.iter().map(|x| (z(x) - z0).abs()).fold(0.0, f64::max);
    let observed = if drift < cfg.tolerance("energy_drift") { "conserved" } else { "drifting" };
    out.check("total_z", observed, &[("max_abs_drift", drift)]);

    multiplier_traces(cfg, &sys, false, &mut out)?;
    out.result("derivatives", &d)?;
    phase_run(cfg, &sys, &flow, false, &mut out)?;
    Ok(out)
}

/// Fitted refinement orders of `|slope|` per direction over the grid ladder.
pub fn fitted_orders(grids: &[usize], slopes: &[Vec<f64>], floor: f64) -> Vec<Option<f64>> {
    slopes.iter().map(|s| fit_order(grids, s, floor).map(|f| f.order)).collect()
}
