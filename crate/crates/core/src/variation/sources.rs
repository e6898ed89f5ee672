//! Path families that can be sampled on any grid of the refinement ladder.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;

use super::{Constraint, Direction};
use crate::error::{Error, Result};
use crate::functionals::{ClassicalPath, ConfigPath, QuantumPath};
use crate::hilbert::{fs_segment_length, propagate_schrodinger, HermitianOperator, QuantumState, Sign, C64};
use crate::phase::{
    hamilton_flow, project_to_equipotential, project_to_shell, ClassicalSystem, ClassicalTrajectory, PhasePoint,
};

/// Default RK4 step count of a dense classical source over its final time.
pub const DENSE_STEPS: usize = 16_000;

/// A continuous path that can be discretized on `n` segments.
pub trait PathSource<P>: Send + Sync {
    fn label(&self) -> String;
    fn at_grid(&self, n: usize) -> Result<P>;
}

fn check_grid(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("grid must have at least one segment".into()));
    }
    Ok(())
}

/// Point at fraction `s` along the Fubini-Study geodesic from the ray of `a`
/// to the ray of `b`; `s = 0` returns `a` itself.
pub fn fs_geodesic_state(a: &QuantumState, b: &QuantumState, s: f64) -> Result<QuantumState> {
    let theta = fs_segment_length(a, b)?;
    if s == 0.0 || theta == 0.0 {
        return Ok(a.clone());
    }
    let ov = a.inner(b)?;
    let phase = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { C64::new(1.0, 0.0) };
    let perp = b.amplitudes().map(|z| z * phase) - a.amplitudes().scale(ov.norm());
    let u = perp.unscale(perp.norm());
    QuantumState::new(a.amplitudes().scale((theta * s).cos()) + u.scale((theta * s).sin()))
}

/// Exact unitary evolution sampled at `t_final k / n`.
#[derive(Clone, Debug)]
pub struct SchrodingerSource {
    pub hamiltonian: HermitianOperator,
    pub initial: QuantumState,
    pub t_final: f64,
    pub sign: Sign,
}

impl PathSource<QuantumPath> for SchrodingerSource {
    fn label(&self) -> String {
        "schrodinger".into()
    }

    fn at_grid(&self, n: usize) -> Result<QuantumPath> {
        check_grid(n)?;
        let traj = propagate_schrodinger(&self.initial, &self.hamiltonian, self.t_final, n, self.sign)?;
        QuantumPath::from_trajectory(&traj)
    }
}

/// Fubini-Study geodesic between two rays at uniform arc fraction.
#[derive(Clone, Debug)]
pub struct GeodesicSource {
    pub start: QuantumState,
    pub end: QuantumState,
}

impl PathSource<QuantumPath> for GeodesicSource {
    fn label(&self) -> String {
        "fs_geodesic".into()
    }

    fn at_grid(&self, n: usize) -> Result<QuantumPath> {
        check_grid(n)?;
        let states = (0..=n)
            .map(|k| fs_geodesic_state(&self.start, &self.end, k as f64 / n as f64))
            .collect::<Result<Vec<_>>>()?;
        QuantumPath::new(states)
    }
}

/// The geodesic bent by two seeded smooth bumps that vanish at the endpoints.
#[derive(Clone, Debug)]
pub struct SmoothRandomSource {
    pub start: QuantumState,
    pub end: QuantumState,
    pub seed: u64,
    pub amplitude: f64,
}

impl PathSource<QuantumPath> for SmoothRandomSource {
    fn label(&self) -> String {
        "smooth_random".into()
    }

    fn at_grid(&self, n: usize) -> Result<QuantumPath> {
        check_grid(n)?;
        let dim = self.start.dim();
        let (Direction::Complex(w1), Direction::Complex(w2)) =
            (Direction::random_complex(dim, self.seed), Direction::random_complex(dim, self.seed.wrapping_add(1)))
        else {
            unreachable!("random_complex returns a complex direction")
        };
        let states = (0..=n)
            .map(|k| {
                let tau = k as f64 / n as f64;
                let geo = fs_geodesic_state(&self.start, &self.end, tau)?;
                if k == 0 || k == n {
                    return Ok(geo);
                }
                let bump = w1.scale((PI * tau).sin()) + w2.scale(0.5 * (2.0 * PI * tau).sin());
                QuantumState::new(geo.amplitudes() + bump.scale(self.amplitude))
            })
            .collect::<Result<Vec<_>>>()?;
        QuantumPath::new(states)
    }
}

/// Finely integrated Hamiltonian flow that coarser grids are sampled from.
#[derive(Clone, Debug)]
pub struct DenseFlow {
    pub system: ClassicalSystem,
    pub trajectory: ClassicalTrajectory,
    pub t_final: f64,
    pub energy: f64,
    /// Segments covering `[0, t_final]`.
    pub steps: usize,
}

impl DenseFlow {
    /// [`DenseFlow::integrate_steps`] with `DENSE_STEPS` segments.
    pub fn integrate(
        system: &ClassicalSystem,
        x0: &PhasePoint,
        t_final: f64,
        sign: Sign,
        overshoot: f64,
    ) -> Result<Self> {
        Self::integrate_steps(system, x0, t_final, sign, overshoot, DENSE_STEPS)
    }

    /// Integrates to `t_final (1 + overshoot)` with step `t_final / steps`;
    /// the extra stretch feeds distorted baselines that run past the endpoint.
    pub fn integrate_steps(
        system: &ClassicalSystem,
        x0: &PhasePoint,
        t_final: f64,
        sign: Sign,
        overshoot: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(overshoot >= 0.0) {
            return Err(Error::InvalidParameter(format!("overshoot must be nonnegative, got {overshoot}")));
        }
        check_grid(steps)?;
        let extra = (overshoot * steps as f64).ceil() as usize;
        let total = steps + extra;
        let t_end = t_final * total as f64 / steps as f64;
        let trajectory = hamilton_flow(x0, system, t_end, total, sign)?;
        Ok(Self { system: system.clone(), energy: system.energy(x0), trajectory, t_final, steps })
    }

    /// State at time `t`, taken from a node when it falls on one.
    pub fn state_at(&self, t: f64) -> Result<DVector<f64>> {
        let h = self.t_final / self.steps as f64;
        let idx = t / h;
        let k = idx.round();
        if (idx - k).abs() < 1e-9 && k >= 0.0 && (k as usize) < self.trajectory.len() {
            return Ok(self.trajectory.points[k as usize].coords().clone());
        }
        self.trajectory.interpolate(t)
    }

    /// Nodes `t_final k / n`, `k = 0..=n`.
    pub fn sample(&self, n: usize) -> Result<Vec<PhasePoint>> {
        check_grid(n)?;
        (0..=n)
            .map(|k| {
                if self.steps.is_multiple_of(n) {
                    Ok(self.trajectory.points[k * (self.steps / n)].clone())
                } else {
                    PhasePoint::new(self.state_at(self.t_final * k as f64 / n as f64)?)
                }
            })
            .collect()
    }

    /// The physical trajectory restricted to `[0, t_final]` on `n` segments;
    /// requires `n` to divide the dense step count.
    pub fn trajectory_at_grid(&self, n: usize) -> Result<ClassicalTrajectory> {
        check_grid(n)?;
        if !self.steps.is_multiple_of(n) {
            return Err(Error::InvalidParameter(format!("grid {n} does not divide {}", self.steps)));
        }
        let stride = self.steps / n;
        let mut t = self.trajectory.clone();
        t.times.truncate(self.steps + 1);
        t.points.truncate(self.steps + 1);
        t.velocities.truncate(self.steps + 1);
        t.accelerations.truncate(self.steps + 1);
        t.subsample(stride)
    }

    pub fn start(&self) -> &PhasePoint {
        &self.trajectory.points[0]
    }

    pub fn end(&self) -> &PhasePoint {
        &self.trajectory.points[self.steps]
    }
}

/// The physical phase-space path, declared on its energy shell.
#[derive(Clone, Debug)]
pub struct FlowSource {
    pub flow: Arc<DenseFlow>,
}

impl PathSource<ClassicalPath> for FlowSource {
    fn label(&self) -> String {
        "hamilton_flow".into()
    }

    fn at_grid(&self, n: usize) -> Result<ClassicalPath> {
        ClassicalPath::on_shell(self.flow.sample(n)?, &self.flow.system, self.flow.energy)
    }
}

/// Straight chord between the endpoints, projected onto the shell node by node.
#[derive(Clone, Debug)]
pub struct ShellChordSource {
    pub start: PhasePoint,
    pub end: PhasePoint,
    pub system: ClassicalSystem,
    pub energy: f64,
}

impl PathSource<ClassicalPath> for ShellChordSource {
    fn label(&self) -> String {
        "shell_chord".into()
    }

    fn at_grid(&self, n: usize) -> Result<ClassicalPath> {
        check_grid(n)?;
        let points = (0..=n)
            .map(|k| {
                let tau = k as f64 / n as f64;
                let x = self.start.coords().scale(1.0 - tau) + self.end.coords().scale(tau);
                project_to_shell(&PhasePoint::new(x)?, &self.system, self.energy)
            })
            .collect::<Result<Vec<_>>>()?;
        ClassicalPath::on_shell(points, &self.system, self.energy)
    }
}

/// Time warp `sigma(tau) = tau + w sin(pi tau)`; for `w > 1/pi` it runs past
/// the endpoint and folds back.
fn warp(tau: f64, w: f64) -> f64 {
    tau + w * (PI * tau).sin()
}

fn max_warp(w: f64) -> f64 {
    (0..=1000).map(|k| warp(k as f64 / 1000.0, w)).fold(f64::MIN, f64::max)
}

/// The physical path re-timed by a non-uniform warp and displaced by a seeded
/// bump, then projected back onto the shell.
#[derive(Clone, Debug)]
pub struct ShellDistortedSource {
    pub flow: Arc<DenseFlow>,
    pub warp: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl PathSource<ClassicalPath> for ShellDistortedSource {
    fn label(&self) -> String {
        "shell_distorted".into()
    }

    fn at_grid(&self, n: usize) -> Result<ClassicalPath> {
        check_grid(n)?;
        let reach = max_warp(self.warp) * self.flow.t_final;
        let t_end = *self.flow.trajectory.times.last().unwrap();
        if reach > t_end {
            return Err(Error::InvalidParameter(format!(
                "warp {} reaches t = {reach} beyond the dense flow (t = {t_end})",
                self.warp
            )));
        }
        let Direction::Real(w) = Direction::random_real(self.flow.system.phase_dim(), self.seed) else {
            unreachable!("random_real returns a real direction")
        };
        let (sys, e) = (&self.flow.system, self.flow.energy);
        let points = (0..=n)
            .map(|k| {
                if k == 0 {
                    return Ok(self.flow.start().clone());
                }
                if k == n {
                    return Ok(self.flow.end().clone());
                }
                let tau = k as f64 / n as f64;
                let x = self.flow.state_at(self.flow.t_final * warp(tau, self.warp))?
                    + w.scale(self.amplitude * (PI * tau).sin());
                project_to_shell(&PhasePoint::new(x)?, sys, e)
            })
            .collect::<Result<Vec<_>>>()?;
        ClassicalPath::on_shell(points, sys, e)
    }
}

/// Configuration-space projection of the physical flow.
#[derive(Clone, Debug)]
pub struct ConfigFlowSource {
    pub flow: Arc<DenseFlow>,
}

impl PathSource<ConfigPath> for ConfigFlowSource {
    fn label(&self) -> String {
        "config_flow".into()
    }

    fn at_grid(&self, n: usize) -> Result<ConfigPath> {
        ConfigPath::new(self.flow.sample(n)?.iter().map(|x| x.q()).collect())
    }
}

fn apply_config_constraint(q: DVector<f64>, constraint: &Constraint) -> Result<DVector<f64>> {
    match constraint {
        Constraint::None => Ok(q),
        Constraint::Equipotential { system, level } => project_to_equipotential(&q, system, *level),
        other => Err(Error::InvalidParameter(format!(
            "configuration paths accept project_to_equipotential or none, got {:?}",
            other.policy()
        ))),
    }
}

/// Straight segment between two configurations, optionally projected onto an equipotential.
#[derive(Clone, Debug)]
pub struct ConfigChordSource {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub constraint: Constraint,
}

impl PathSource<ConfigPath> for ConfigChordSource {
    fn label(&self) -> String {
        "config_chord".into()
    }

    fn at_grid(&self, n: usize) -> Result<ConfigPath> {
        check_grid(n)?;
        let positions = (0..=n)
            .map(|k| {
                if k == 0 {
                    return Ok(self.start.clone());
                }
                if k == n {
                    return Ok(self.end.clone());
                }
                let tau = k as f64 / n as f64;
                apply_config_constraint(self.start.scale(1.0 - tau) + self.end.scale(tau), &self.constraint)
            })
            .collect::<Result<Vec<_>>>()?;
        ConfigPath::new(positions)
    }
}

/// Physical configuration path displaced by a seeded bump.
#[derive(Clone, Debug)]
pub struct ConfigDistortedSource {
    pub flow: Arc<DenseFlow>,
    pub amplitude: f64,
    pub seed: u64,
    pub constraint: Constraint,
}

impl PathSource<ConfigPath> for ConfigDistortedSource {
    fn label(&self) -> String {
        "config_distorted".into()
    }

    fn at_grid(&self, n: usize) -> Result<ConfigPath> {
        let nodes = self.flow.sample(n)?;
        let Direction::Real(w) = Direction::random_real(self.flow.system.dof(), self.seed) else {
            unreachable!("random_real returns a real direction")
        };
        let positions = nodes
            .iter()
            .enumerate()
            .map(|(k, x)| {
                if k == 0 || k == n {
                    return Ok(x.q());
                }
                let tau = k as f64 / n as f64;
                apply_config_constraint(x.q() + w.scale(self.amplitude * (PI * tau).sin()), &self.constraint)
            })
            .collect::<Result<Vec<_>>>()?;
        ConfigPath::new(positions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{build_classical, random_state, SystemKind, SystemSpec};

    #[test]
    fn geodesic_hits_end_ray() {
        let a = random_state(5, 1).unwrap();
        let b = random_state(5, 2).unwrap();
        let g = GeodesicSource { start: a.clone(), end: b.clone() }.at_grid(7).unwrap();
        assert_eq!(g.states()[0], a);
        assert!(fs_segment_length(&g.states()[7], &b).unwrap() < 1e-14);
        // uniform arc fraction
        let d = fs_segment_length(&a, &b).unwrap();
        for w in g.states().windows(2) {
            assert!((fs_segment_length(&w[0], &w[1]).unwrap() - d / 7.0).abs() < 1e-13);
        }
    }

    #[test]
    fn dense_samples_nest() {
        let sys = build_classical(&SystemSpec::new(SystemKind::Pendulum)).unwrap();
        let x0 = PhasePoint::from_slice(&[0.3, 0.6]).unwrap();
        let flow = DenseFlow::integrate(&sys, &x0, 1.0, Sign::Forward, 0.25).unwrap();
        let coarse = flow.sample(250).unwrap();
        let fine = flow.sample(500).unwrap();
        for k in 0..=250 {
            assert_eq!(coarse[k], fine[2 * k]);
        }
        // grids that do not divide the dense count interpolate
        let odd = flow.sample(300).unwrap();
        assert!((odd[300].coords() - flow.end().coords()).norm() < 1e-12);
        assert_eq!(flow.trajectory_at_grid(250).unwrap().points, coarse);
    }

    #[test]
    fn distorted_path_folds_back() {
        let sys = build_classical(&SystemSpec::new(SystemKind::Pendulum)).unwrap();
        let x0 = PhasePoint::from_slice(&[0.3, 0.6]).unwrap();
        let flow = Arc::new(DenseFlow::integrate(&sys, &x0, 1.0, Sign::Forward, 0.125).unwrap());
        let src = ShellDistortedSource { flow: flow.clone(), warp: 0.5, amplitude: 0.05, seed: 3 };
        let p = src.at_grid(100).unwrap();
        assert_eq!(p.points()[0], *flow.start());
        assert_eq!(p.points()[100], *flow.end());
        assert!(max_warp(0.5) > 1.1 && max_warp(0.5) < 1.125);
        let too_far = ShellDistortedSource { flow, warp: 1.0, amplitude: 0.0, seed: 0 };
        assert!(too_far.at_grid(10).is_err());
    }
}
