//! Property tests of invariances the functionals and flows must respect.

use fermatlab_core::functionals::{
    classical_time_functional, path_length, quantum_time_functional, ClassicalPath, QuantumPath,
};
use fermatlab_core::hilbert::{
    fs_segment_length, nonlinear_velocity, propagate_schrodinger, schrodinger_velocity, stationarity_residual,
    HermitianOperator, Sign, C64,
};
use fermatlab_core::phase::{hamilton_flow, PhasePoint};
use fermatlab_core::systems::{build_classical, build_quantum, random_state, SystemKind, SystemSpec};
use proptest::prelude::*;

fn hamiltonian(dim: usize, seed: u64) -> HermitianOperator {
    build_quantum(&SystemSpec::new(SystemKind::RandomHermitian).with("dim", dim as f64).with_seed(seed)).unwrap()
}

fn schrodinger_path(dim: usize, seed: u64, t: f64, n: usize) -> (HermitianOperator, QuantumPath) {
    let h = hamiltonian(dim, seed);
    let psi0 = random_state(dim, seed + 1).unwrap();
    let traj = propagate_schrodinger(&psi0, &h, t, n, Sign::Forward).unwrap();
    (h, QuantumPath::from_trajectory(&traj).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn path_length_ignores_nodewise_phases(dim in 2usize..9, seed in 0u64..500, phase_seed in 0u64..500) {
        let (_, path) = schrodinger_path(dim, seed, 1.0, 64);
        let rephased: Vec<_> = path
            .states()
            .iter()
            .enumerate()
            .map(|(k, s)| s.with_phase(((k as u64 * 7919 + phase_seed) % 628) as f64 / 100.0))
            .collect();
        let a = path_length(&path).unwrap().value;
        let b = path_length(&QuantumPath::new(rephased).unwrap()).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn functionals_add_over_split_paths(dim in 2usize..9, seed in 0u64..500, k in 1usize..200) {
        let (h, path) = schrodinger_path(dim, seed, 1.5, 200);
        let (left, right) = path.split_at(k).unwrap();
        let whole = quantum_time_functional(&path, &h).unwrap().value;
        let parts = quantum_time_functional(&left, &h).unwrap().value + quantum_time_functional(&right, &h).unwrap().value;
        prop_assert!((whole - parts).abs() < 1e-12);
        let whole = path_length(&path).unwrap().value;
        let parts = path_length(&left).unwrap().value + path_length(&right).unwrap().value;
        prop_assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn time_functional_recovers_elapsed_time(dim in 2usize..9, seed in 0u64..500, t in 0.2f64..3.0) {
        let (h, path) = schrodinger_path(dim, seed, t, 2000);
        let value = quantum_time_functional(&path, &h).unwrap().value;
        prop_assert!((value - t).abs() < 1e-5 * t, "T = {value}, t = {t}");
    }

    #[test]
    fn length_is_independent_of_node_density(dim in 2usize..9, seed in 0u64..500) {
        // A reparametrized sampling of the same curve: every other node dropped.
        let (_, fine) = schrodinger_path(dim, seed, 1.0, 2000);
        let coarse: Vec<_> = fine.states().iter().step_by(2).cloned().collect();
        let a = path_length(&fine).unwrap().value;
        let b = path_length(&QuantumPath::new(coarse).unwrap()).unwrap().value;
        prop_assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn residual_is_phase_covariant(dim in 2usize..9, seed in 0u64..500, phase in 0.0f64..std::f64::consts::TAU) {
        let h = hamiltonian(dim, seed);
        let psi = random_state(dim, seed + 3).unwrap();
        let rot = C64::from_polar(1.0, phase);
        for v in [schrodinger_velocity(&psi, &h, Sign::Forward).unwrap(), nonlinear_velocity(&psi, &h, Sign::Reversed).unwrap()] {
            let a = stationarity_residual(&psi, &v, &h).unwrap();
            let b = stationarity_residual(&psi.with_phase(phase), &(v * rot), &h).unwrap();
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn schrodinger_flow_is_reversible(dim in 2usize..9, seed in 0u64..500, t in 0.1f64..5.0) {
        let h = hamiltonian(dim, seed);
        let psi0 = random_state(dim, seed + 5).unwrap();
        let fwd = propagate_schrodinger(&psi0, &h, t, 10, Sign::Forward).unwrap();
        let back = propagate_schrodinger(fwd.last(), &h, t, 10, Sign::Reversed).unwrap();
        prop_assert!(fs_segment_length(back.last(), &psi0).unwrap() < 1e-10);
        prop_assert!(back.last().norm_deviation() < 1e-12);
    }

    #[test]
    fn hamilton_flow_conserves_energy_and_reverses(q in -1.0f64..1.0, p in -1.0f64..1.0) {
        let sys = build_classical(&SystemSpec::new(SystemKind::Pendulum)).unwrap();
        let x0 = PhasePoint::from_qp(&[q], &[p]).unwrap();
        let fwd = hamilton_flow(&x0, &sys, 2.0, 2000, Sign::Forward).unwrap();
        prop_assert!(fwd.energy_drift < 1e-9);
        let back = hamilton_flow(fwd.points.last().unwrap(), &sys, 2.0, 2000, Sign::Reversed).unwrap();
        prop_assert!((back.points.last().unwrap().coords() - x0.coords()).norm() < 1e-9);
    }

    #[test]
    fn classical_time_functional_recovers_elapsed_time(q in 0.1f64..1.0, p in 0.1f64..1.0, t in 0.2f64..2.0) {
        let sys = build_classical(&SystemSpec::new(SystemKind::OscillatorNd).with("dof", 2.0)).unwrap();
        let x0 = PhasePoint::from_qp(&[q, 0.0], &[0.0, p]).unwrap();
        let traj = hamilton_flow(&x0, &sys, t, 2000, Sign::Forward).unwrap();
        let value = classical_time_functional(&ClassicalPath::from_trajectory(&traj).unwrap(), &sys).unwrap().value;
        prop_assert!((value - t).abs() < 1e-5 * t, "T = {value}, t = {t}");
    }
}
