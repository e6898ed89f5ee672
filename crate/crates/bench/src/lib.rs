//! Shared fixtures for the engine benchmarks.

use fermatlab_core::functionals::{ClassicalPath, QuantumPath};
use fermatlab_core::hilbert::{propagate_schrodinger, HermitianOperator, Sign};
use fermatlab_core::phase::{hamilton_flow, ClassicalSystem};
use fermatlab_core::systems::{build_classical, build_quantum, random_state, SystemKind, SystemSpec};

pub fn random_hamiltonian(dim: usize) -> HermitianOperator {
    build_quantum(&SystemSpec::new(SystemKind::RandomHermitian).with("dim", dim as f64).with_seed(42))
        .expect("valid spec")
}

/// Schrodinger path over unit time with `segments` segments.
pub fn quantum_path(dim: usize, segments: usize) -> (HermitianOperator, QuantumPath) {
    let h = random_hamiltonian(dim);
    let psi0 = random_state(dim, 7).expect("valid dim");
    let traj = propagate_schrodinger(&psi0, &h, 1.0, segments, Sign::Forward).expect("propagates");
    (h, QuantumPath::from_trajectory(&traj).expect("valid path"))
}

pub fn pendulum() -> (SystemSpec, ClassicalSystem) {
    let spec = SystemSpec::new(SystemKind::Pendulum);
    let sys = build_classical(&spec).expect("valid spec");
    (spec, sys)
}

/// Pendulum flow over unit time with `segments` segments.
pub fn pendulum_path(segments: usize) -> (ClassicalSystem, ClassicalPath) {
    let (spec, sys) = pendulum();
    let x0 = spec.default_initial_point().expect("default point");
    let traj = hamilton_flow(&x0, &sys, 1.0, segments, Sign::Forward).expect("integrates");
    (sys, ClassicalPath::from_trajectory(&traj).expect("valid path"))
}
