use std::sync::Arc;

use fermatlab_core::functionals::{ClassicalLength, ClassicalTime, InverseJacobiAction, JacobiAction, QuantumTime};
use fermatlab_core::hilbert::{propagate_schrodinger, Sign};
use fermatlab_core::phase::{ClassicalSystem, PhasePoint};
use fermatlab_core::systems::{build_classical, build_quantum, random_state, SystemKind, SystemSpec};
use fermatlab_core::variation::{
    stationarity_test, ConfigChordSource, ConfigDistortedSource, ConfigFlowSource, Constraint, DenseFlow,
    DirectionSpec, FlowSource, GeodesicSource, PathSource, SchrodingerSource, ShellChordSource, ShellDistortedSource,
    SmoothRandomSource, StationarityReport, Thresholds, Verdict, DEFAULT_EPSILONS, DEFAULT_GRIDS,
};

fn summarize(report: &StationarityReport) -> String {
    let mut s = format!("verdict {} ({})\n", report.verdict, report.candidate.label);
    for d in &report.candidate.directions {
        s += &format!(
            "  dir {} mode {} {:?} order {:?} final {:.3e}\n",
            d.index,
            d.mode,
            d.status,
            d.order,
            d.final_slope()
        );
    }
    for b in &report.baselines {
        s += &format!("  baseline {} usable {} scale {:?} error {:?}\n", b.label, b.usable, b.scale, b.error);
        if let Some(r) = &b.report {
            for d in &r.directions {
                s += &format!("    dir {} {:?} final {:.3e}\n", d.index, d.status, d.final_slope());
            }
        }
    }
    s
}

fn flow(sys: &ClassicalSystem, x0: &PhasePoint, t_final: f64) -> Arc<DenseFlow> {
    Arc::new(DenseFlow::integrate(sys, x0, t_final, Sign::Forward, 0.125).unwrap())
}

#[test]
fn quantum_schrodinger_path_is_stationary() {
    let h = build_quantum(&SystemSpec::new(SystemKind::RandomHermitian).with_seed(42)).unwrap();
    let psi0 = random_state(8, 7).unwrap();
    let end = propagate_schrodinger(&psi0, &h, 1.0, 1, Sign::Forward).unwrap().last().clone();
    let cand = SchrodingerSource { hamiltonian: h.clone(), initial: psi0.clone(), t_final: 1.0, sign: Sign::Forward };
    let geo = GeodesicSource { start: psi0.clone(), end: end.clone() };
    let smooth = SmoothRandomSource { start: psi0, end, seed: 11, amplitude: 0.2 };
    let dirs = DirectionSpec::family(8, &[1, 2, 3], 2024).unwrap();
    let report = stationarity_test(
        &cand,
        &[&geo as &dyn PathSource<_>, &smooth],
        &QuantumTime(h),
        &Constraint::Renormalize,
        &dirs,
        &DEFAULT_EPSILONS,
        &DEFAULT_GRIDS,
        &Thresholds::default(),
    )
    .unwrap();
    eprintln!("{}", summarize(&report));
    assert_eq!(report.verdict, Verdict::Stationary);
    assert!(report.baselines.iter().all(|b| b.usable));
}

fn classical_case(sys: &ClassicalSystem, x0: &PhasePoint, t_final: f64, length: bool) -> StationarityReport {
    let f = flow(sys, x0, t_final);
    let cand = FlowSource { flow: f.clone() };
    let chord =
        ShellChordSource { start: f.start().clone(), end: f.end().clone(), system: sys.clone(), energy: f.energy };
    let distorted = ShellDistortedSource { flow: f.clone(), warp: 0.5, amplitude: 0.05, seed: 5 };
    let constraint = Constraint::Shell { system: sys.clone(), energy: f.energy };
    let dirs = DirectionSpec::family(6, &[1, 2, 3], 77).unwrap();
    let baselines = [&chord as &dyn PathSource<_>, &distorted];
    let report = if length {
        stationarity_test(
            &cand,
            &baselines,
            &ClassicalLength,
            &constraint,
            &dirs,
            &DEFAULT_EPSILONS,
            &DEFAULT_GRIDS,
            &Thresholds::default(),
        )
    } else {
        stationarity_test(
            &cand,
            &baselines,
            &ClassicalTime(sys.clone()),
            &constraint,
            &dirs,
            &DEFAULT_EPSILONS,
            &DEFAULT_GRIDS,
            &Thresholds::default(),
        )
    }
    .unwrap();
    eprintln!("{} {}", sys.name(), summarize(&report));
    report
}

#[test]
fn classical_oscillator_2dof_is_stationary() {
    let spec = SystemSpec::new(SystemKind::OscillatorNd).with("dof", 2.0);
    let sys = build_classical(&spec).unwrap();
    let r = classical_case(&sys, &spec.default_initial_point().unwrap(), 1.0, false);
    assert_eq!(r.verdict, Verdict::Stationary);
}

#[test]
fn classical_pendulum_is_stationary() {
    let spec = SystemSpec::new(SystemKind::Pendulum);
    let sys = build_classical(&spec).unwrap();
    let r = classical_case(&sys, &spec.default_initial_point().unwrap(), 1.0, false);
    assert_eq!(r.verdict, Verdict::Stationary);
    assert!(r.baselines.iter().any(|b| b.usable));
}

/// With two coupled degrees of freedom the shell-constrained time functional
/// has a first variation of the same size as the baselines: the constrained
/// Euler-Lagrange equation has no consistent multiplier on this flow.
#[test]
fn coupled_pendulum_time_functional_is_not_stationary() {
    let spec = SystemSpec::new(SystemKind::Pendulum).with("dof", 2.0).with("coupling", 0.3);
    let sys = build_classical(&spec).unwrap();
    let r = classical_case(&sys, &spec.default_initial_point().unwrap(), 1.0, false);
    assert_eq!(r.verdict, Verdict::NonStationary);
}

#[test]
fn spin_pair_time_functional_is_not_stationary() {
    let spec = SystemSpec::new(SystemKind::ClassicalSpinPair);
    let sys = build_classical(&spec).unwrap();
    let r = classical_case(&sys, &spec.default_initial_point().unwrap(), 1.0, false);
    assert_eq!(r.verdict, Verdict::NonStationary);
}

#[test]
fn shell_length_oscillator_2dof_is_stationary() {
    let spec = SystemSpec::new(SystemKind::OscillatorNd).with("dof", 2.0);
    let sys = build_classical(&spec).unwrap();
    let r = classical_case(&sys, &spec.default_initial_point().unwrap(), 1.0, true);
    assert_eq!(r.verdict, Verdict::Stationary);
}

fn config_case(
    sys: &ClassicalSystem,
    x0: &PhasePoint,
    constraint: Constraint,
) -> (StationarityReport, StationarityReport) {
    let f = flow(sys, x0, 1.0);
    let cand = ConfigFlowSource { flow: f.clone() };
    let chord = ConfigChordSource { start: f.start().q(), end: f.end().q(), constraint: constraint.clone() };
    let distorted = ConfigDistortedSource { flow: f.clone(), amplitude: 0.05, seed: 9, constraint: constraint.clone() };
    let dirs = DirectionSpec::family(6, &[1, 2, 3], 31).unwrap();
    let baselines = [&chord as &dyn PathSource<_>, &distorted];
    let th = Thresholds::default();
    let jac = JacobiAction { system: sys.clone(), energy: f.energy };
    let inv = InverseJacobiAction { system: sys.clone(), energy: f.energy };
    let a =
        stationarity_test(&cand, &baselines, &jac, &constraint, &dirs, &DEFAULT_EPSILONS, &DEFAULT_GRIDS, &th).unwrap();
    let b =
        stationarity_test(&cand, &baselines, &inv, &constraint, &dirs, &DEFAULT_EPSILONS, &DEFAULT_GRIDS, &th).unwrap();
    eprintln!("{} jacobi {}\ninverse {}", sys.name(), summarize(&a), summarize(&b));
    (a, b)
}

#[test]
fn config_pendulum_jacobi_only() {
    let spec = SystemSpec::new(SystemKind::Pendulum).with("dof", 2.0).with("coupling", 0.3);
    let sys = build_classical(&spec).unwrap();
    let (a, b) = config_case(&sys, &spec.default_initial_point().unwrap(), Constraint::None);
    assert_eq!(a.verdict, Verdict::Stationary);
    assert_eq!(b.verdict, Verdict::NonStationary);
}

#[test]
fn config_free_particle_both() {
    let spec = SystemSpec::new(SystemKind::FreeParticle).with("dof", 2.0);
    let sys = build_classical(&spec).unwrap();
    let (a, b) = config_case(&sys, &spec.default_initial_point().unwrap(), Constraint::None);
    assert_eq!(a.verdict, Verdict::Stationary);
    assert_eq!(b.verdict, Verdict::Stationary);
}

#[test]
fn config_equipotential_orbit_both() {
    let spec = SystemSpec::new(SystemKind::OscillatorNd).with("dof", 3.0);
    let sys = build_classical(&spec).unwrap();
    let x0 = PhasePoint::from_qp(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
    let level = sys.potential(&x0.q()).unwrap();
    let (a, b) = config_case(&sys, &x0, Constraint::Equipotential { system: sys.clone(), level });
    assert_eq!(a.verdict, Verdict::Stationary);
    assert_eq!(b.verdict, Verdict::Stationary);
}
