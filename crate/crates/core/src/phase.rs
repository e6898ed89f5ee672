//! Classical phase space: Hamiltonian systems with analytic derivatives,
//! Hamiltonian flows in both time directions, and energy-shell projection.
//!
//! Phase points are ordered `(q_1..q_N, p_1..p_N)` and phase space carries the
//! Euclidean metric, so the flow speed is `|grad H|`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::Sign;

/// Speeds at or below this are treated as a fixed point.
pub const SPEED_FLOOR: f64 = 1e-12;
/// Shell projection stops once `|H - E| < SHELL_TOLERANCE * max(1, |E|)`.
pub const SHELL_TOLERANCE: f64 = 1e-12;
pub const SHELL_MAX_ITERATIONS: usize = 50;

/// A point `x = (q, p)` of a `2N`-dimensional phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint(DVector<f64>);

impl PhasePoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.is_empty() || !coords.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "phase point needs an even, non-zero dimension, got {}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coordinate at index {bad}")));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn from_qp(q: &[f64], p: &[f64]) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), found: p.len() });
        }
        Self::new(DVector::from_iterator(q.len() * 2, q.iter().chain(p).copied()))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.0
    }

    pub fn dof(&self) -> usize {
        self.0.len() / 2
    }

    pub fn q(&self) -> DVector<f64> {
        self.0.rows(0, self.dof()).into_owned()
    }

    pub fn p(&self) -> DVector<f64> {
        self.0.rows(self.dof(), self.dof()).into_owned()
    }
}

/// Energy function with analytic first and second derivatives.
pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn dof(&self) -> usize;
    fn energy(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `V(q)` for systems of the form `p M^-1 p / 2 + V(q)`.
    fn potential(&self, _q: &DVector<f64>) -> Option<f64> {
        None
    }

    fn potential_gradient(&self, _q: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn mass_matrix(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// A named Hamiltonian plus the bookkeeping needed by experiments.
#[derive(Clone, Debug)]
pub struct ClassicalSystem {
    name: String,
    hamiltonian: Arc<dyn Hamiltonian>,
    /// Kinetic-energy normalization used by this system, for reports.
    pub convention: String,
    pub energy_reference: Option<f64>,
}

impl ClassicalSystem {
    pub fn new(name: impl Into<String>, hamiltonian: Arc<dyn Hamiltonian>, convention: impl Into<String>) -> Self {
        Self { name: name.into(), hamiltonian, convention: convention.into(), energy_reference: None }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.hamiltonian.dof()
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.dof()
    }

    pub fn energy(&self, x: &PhasePoint) -> f64 {
        self.hamiltonian.energy(x.coords())
    }

    pub fn gradient(&self, x: &PhasePoint) -> DVector<f64> {
        self.hamiltonian.gradient(x.coords())
    }

    pub fn hessian(&self, x: &PhasePoint) -> DMatrix<f64> {
        self.hamiltonian.hessian(x.coords())
    }

    pub fn hamiltonian(&self) -> &dyn Hamiltonian {
        self.hamiltonian.as_ref()
    }

    pub fn potential(&self, q: &DVector<f64>) -> Option<f64> {
        self.hamiltonian.potential(q)
    }

    pub fn potential_gradient(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        self.hamiltonian.potential_gradient(q)
    }

    pub fn mass_matrix(&self) -> Option<DMatrix<f64>> {
        self.hamiltonian.mass_matrix()
    }

    pub(crate) fn check_point(&self, x: &PhasePoint) -> Result<()> {
        if x.coords().len() == self.phase_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.phase_dim(), found: x.coords().len() })
        }
    }

    pub(crate) fn require_potential(&self, q: &DVector<f64>) -> Result<f64> {
        self.potential(q)
            .ok_or_else(|| Error::InvalidParameter(format!("system '{}' has no separable potential", self.name)))
    }
}

/// `J v`, with `J` the symplectic block map `(a, b) -> (b, -a)`.
pub fn symplectic(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() / 2;
    DVector::from_fn(v.len(), |i, _| if i < n { v[i + n] } else { -v[i - n] })
}

/// `|grad H(x)|`, the speed of the Hamiltonian flow through `x`.
pub fn phase_speed(x: &PhasePoint, sys: &ClassicalSystem) -> Result<f64> {
    sys.check_point(x)?;
    let speed = sys.gradient(x).norm();
    if speed <= SPEED_FLOOR {
        return Err(Error::DegenerateSpeed { speed, floor: SPEED_FLOOR, node: None });
    }
    Ok(speed)
}

/// Sampled trajectory with velocities and accelerations taken from the
/// generating vector field at each node.
#[derive(Clone, Debug)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub velocities: Vec<DVector<f64>>,
    pub accelerations: Vec<DVector<f64>>,
    /// `max |H(x(t)) - H(x(0))|` over the nodes.
    pub energy_drift: f64,
}

impl ClassicalTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("trajectory has at least one node")
    }

    /// Every `stride`-th node, keeping the final node when it falls on the stride.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.len() - 1).is_multiple_of(stride) {
            return Err(Error::InvalidParameter(format!(
                "stride {stride} does not divide {} segments",
                self.len() - 1
            )));
        }
        let pick = |k: usize| k * stride;
        let count = (self.len() - 1) / stride + 1;
        Ok(Self {
            times: (0..count).map(|k| self.times[pick(k)]).collect(),
            points: (0..count).map(|k| self.points[pick(k)].clone()).collect(),
            velocities: (0..count).map(|k| self.velocities[pick(k)].clone()).collect(),
            accelerations: (0..count).map(|k| self.accelerations[pick(k)].clone()).collect(),
            energy_drift: self.energy_drift,
        })
    }

    /// Cubic Hermite interpolation between nodes using the stored velocities.
    pub fn interpolate(&self, t: f64) -> Result<DVector<f64>> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        if !(t >= t0 - 1e-12 * t1.abs().max(1.0) && t <= t1 + 1e-12 * t1.abs().max(1.0)) {
            return Err(Error::InvalidParameter(format!("t = {t} outside [{t0}, {t1}]")));
        }
        let h = self.times[1] - self.times[0];
        let k = (((t - t0) / h).floor() as usize).min(self.len() - 2);
        let s = ((t - self.times[k]) / h).clamp(0.0, 1.0);
        if s == 0.0 {
            return Ok(self.points[k].coords().clone());
        }
        if s == 1.0 {
            return Ok(self.points[k + 1].coords().clone());
        }
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(self.points[k].coords().scale(h00)
            + self.velocities[k].scale(h10 * h)
            + self.points[k + 1].coords().scale(h01)
            + self.velocities[k + 1].scale(h11 * h))
    }
}

fn rk4_path<F>(x0: &DVector<f64>, t_final: f64, n_steps: usize, field: &F) -> Result<(Vec<f64>, Vec<DVector<f64>>)>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("t_final must be positive, got {t_final}")));
    }
    let dt = t_final / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|k| t_final * k as f64 / n_steps as f64).collect();
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut y = x0.clone();
    points.push(y.clone());
    for k in 0..n_steps {
        let k1 = field(&y);
        let k2 = field(&(&y + k1.scale(0.5 * dt)));
        let k3 = field(&(&y + k2.scale(0.5 * dt)));
        let k4 = field(&(&y + k3.scale(dt)));
        y += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: times[k + 1] });
        }
        points.push(y.clone());
    }
    Ok((times, points))
}

fn assemble<V, A>(
    sys: &ClassicalSystem,
    times: Vec<f64>,
    raw: Vec<DVector<f64>>,
    velocity: V,
    acceleration: A,
) -> Result<ClassicalTrajectory>
where
    V: Fn(&DVector<f64>) -> DVector<f64>,
    A: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let e0 = sys.hamiltonian().energy(&raw[0]);
    let mut energy_drift: f64 = 0.0;
    let mut points = Vec::with_capacity(raw.len());
    let mut velocities = Vec::with_capacity(raw.len());
    let mut accelerations = Vec::with_capacity(raw.len());
    for x in raw {
        energy_drift = energy_drift.max((sys.hamiltonian().energy(&x) - e0).abs());
        let v = velocity(&x);
        accelerations.push(acceleration(&x, &v));
        velocities.push(v);
        points.push(PhasePoint::new(x)?);
    }
    Ok(ClassicalTrajectory { times, points, velocities, accelerations, energy_drift })
}

/// Fourth-order Runge-Kutta integration of `dx/dt = sign J grad H`.
pub fn hamilton_flow(
    x0: &PhasePoint,
    sys: &ClassicalSystem,
    t_final: f64,
    n_steps: usize,
    sign: Sign,
) -> Result<ClassicalTrajectory> {
    sys.check_point(x0)?;
    let s = sign.value();
    let h = sys.hamiltonian();
    let field = |x: &DVector<f64>| symplectic(&h.gradient(x)).scale(s);
    let (times, raw) = rk4_path(x0.coords(), t_final, n_steps, &field)?;
    assemble(sys, times, raw, field, |x, v| symplectic(&(h.hessian(x) * v)).scale(s))
}

/// Steepest-descent flow `dx/dt = -grad H`; not Hamiltonian, used as a
/// counterexample path through the same system.
pub fn gradient_flow(
    x0: &PhasePoint,
    sys: &ClassicalSystem,
    t_final: f64,
    n_steps: usize,
) -> Result<ClassicalTrajectory> {
    sys.check_point(x0)?;
    let h = sys.hamiltonian();
    let field = |x: &DVector<f64>| -h.gradient(x);
    let (times, raw) = rk4_path(x0.coords(), t_final, n_steps, &field)?;
    assemble(sys, times, raw, field, |x, v| -(h.hessian(x) * v))
}

/// Newton projection onto `H = energy` along the local gradient.
#[derive(Clone, Debug)]
pub struct ShellProjection {
    pub point: PhasePoint,
    /// `|H - E|` before each iteration and after the last one.
    pub residuals: Vec<f64>,
}

pub fn project_to_shell_traced(x: &PhasePoint, sys: &ClassicalSystem, energy: f64) -> Result<ShellProjection> {
    sys.check_point(x)?;
    let tol = SHELL_TOLERANCE * energy.abs().max(1.0);
    let h = sys.hamiltonian();
    let mut y = x.coords().clone();
    let mut residuals = Vec::new();
    for _ in 0..=SHELL_MAX_ITERATIONS {
        let delta = h.energy(&y) - energy;
        residuals.push(delta.abs());
        if delta.abs() < tol {
            let point = if residuals.len() == 1 { x.clone() } else { PhasePoint::new(y)? };
            return Ok(ShellProjection { point, residuals });
        }
        let g = h.gradient(&y);
        let g2 = g.norm_squared();
        if g2.sqrt() <= SPEED_FLOOR {
            return Err(Error::DegenerateSpeed { speed: g2.sqrt(), floor: SPEED_FLOOR, node: None });
        }
        y -= g.scale(delta / g2);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::ProjectionFailed { iterations: residuals.len(), residual: f64::INFINITY });
        }
    }
    Err(Error::ProjectionFailed { iterations: SHELL_MAX_ITERATIONS, residual: *residuals.last().unwrap() })
}

pub fn project_to_shell(x: &PhasePoint, sys: &ClassicalSystem, energy: f64) -> Result<PhasePoint> {
    project_to_shell_traced(x, sys, energy).map(|p| p.point)
}

/// Newton projection of a configuration onto the level set `V(q) = level`.
pub fn project_to_equipotential(q: &DVector<f64>, sys: &ClassicalSystem, level: f64) -> Result<DVector<f64>> {
    let tol = SHELL_TOLERANCE * level.abs().max(1.0);
    let mut y = q.clone();
    for it in 0..=SHELL_MAX_ITERATIONS {
        let delta = sys.require_potential(&y)? - level;
        if delta.abs() < tol {
            return Ok(if it == 0 { q.clone() } else { y });
        }
        let g = sys
            .potential_gradient(&y)
            .ok_or_else(|| Error::InvalidParameter(format!("system '{}' has no potential gradient", sys.name())))?;
        let g2 = g.norm_squared();
        if g2.sqrt() <= SPEED_FLOOR {
            return Err(Error::DegenerateSpeed { speed: g2.sqrt(), floor: SPEED_FLOOR, node: None });
        }
        y -= g.scale(delta / g2);
    }
    Err(Error::ProjectionFailed {
        iterations: SHELL_MAX_ITERATIONS,
        residual: (sys.require_potential(&y)? - level).abs(),
    })
}

fn mass_matrix(sys: &ClassicalSystem) -> Result<DMatrix<f64>> {
    sys.mass_matrix().ok_or_else(|| Error::InvalidParameter(format!("system '{}' has no mass matrix", sys.name())))
}

/// `T = qdot M qdot / 2`.
pub fn config_kinetic_energy(qdot: &DVector<f64>, sys: &ClassicalSystem) -> Result<f64> {
    let m = mass_matrix(sys)?;
    if m.nrows() != qdot.len() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: qdot.len() });
    }
    Ok(0.5 * qdot.dot(&(&m * qdot)))
}

/// `sqrt(2T)`: speed of the configuration point in the mass-weighted metric.
pub fn config_kinetic_speed(qdot: &DVector<f64>, sys: &ClassicalSystem) -> Result<f64> {
    Ok((2.0 * config_kinetic_energy(qdot, sys)?).max(0.0).sqrt())
}

/// Mass-weighted arc element `sqrt(dq M dq)`.
pub fn mass_weighted_arc(dq: &DVector<f64>, sys: &ClassicalSystem) -> Result<f64> {
    config_kinetic_speed(dq, sys)
}

/// Finite-difference cross-check of the analytic derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct DerivativeCheck {
    /// `max |g_fd - g| / max(1, |g|)` over probes.
    pub gradient_error: f64,
    pub hessian_asymmetry: f64,
    /// `max |H_fd - H| / max(1, |H|)` with the Hessian differenced from the gradient.
    pub hessian_error: f64,
}

pub fn cross_validate(sys: &ClassicalSystem, probes: &[PhasePoint]) -> Result<DerivativeCheck> {
    let h = sys.hamiltonian();
    let mut check = DerivativeCheck::default();
    for x in probes {
        sys.check_point(x)?;
        let x = x.coords();
        let g = h.gradient(x);
        let hess = h.hessian(x);
        let n = x.len();
        let mut g_fd = DVector::zeros(n);
        let mut hess_fd = DMatrix::zeros(n, n);
        for i in 0..n {
            let step = 1e-5 * x[i].abs().max(1.0);
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] += step;
            minus[i] -= step;
            g_fd[i] = (h.energy(&plus) - h.energy(&minus)) / (2.0 * step);
            let column = (h.gradient(&plus) - h.gradient(&minus)) / (2.0 * step);
            hess_fd.set_column(i, &column);
        }
        check.gradient_error = check.gradient_error.max((&g_fd - &g).norm() / g.norm().max(1.0));
        check.hessian_asymmetry = check.hessian_asymmetry.max((&hess - hess.transpose()).abs().max());
        check.hessian_error = check.hessian_error.max((&hess_fd - &hess).abs().max() / hess.abs().max().max(1.0));
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[derive(Debug)]
    struct Oscillator;

    impl Hamiltonian for Oscillator {
        fn dof(&self) -> usize {
            1
        }
        fn energy(&self, x: &DVector<f64>) -> f64 {
            0.5 * x.norm_squared()
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(2, 2)
        }
        fn mass_matrix(&self) -> Option<DMatrix<f64>> {
            Some(DMatrix::identity(1, 1))
        }
    }

    #[derive(Debug)]
    struct Pendulum;

    impl Hamiltonian for Pendulum {
        fn dof(&self) -> usize {
            1
        }
        fn energy(&self, x: &DVector<f64>) -> f64 {
            0.5 * x[1] * x[1] - x[0].cos()
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_column_slice(&[x[0].sin(), x[1]])
        }
        fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal(&DVector::from_column_slice(&[x[0].cos(), 1.0]))
        }
    }

    fn oscillator() -> ClassicalSystem {
        ClassicalSystem::new("oscillator", Arc::new(Oscillator), "p^2/2")
    }

    fn pendulum() -> ClassicalSystem {
        ClassicalSystem::new("pendulum", Arc::new(Pendulum), "p^2/2")
    }

    fn pt(v: &[f64]) -> PhasePoint {
        PhasePoint::from_slice(v).unwrap()
    }

    #[test]
    fn speed_examples() {
        assert!((phase_speed(&pt(&[3.0, 4.0]), &oscillator()).unwrap() - 5.0).abs() < 1e-15);
        assert!(matches!(phase_speed(&pt(&[0.0, 0.0]), &pendulum()), Err(Error::DegenerateSpeed { .. })));
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(PhasePoint::from_slice(&[1.0, 2.0, 3.0]).is_err());
        assert!(PhasePoint::from_slice(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn oscillator_returns_after_one_period() {
        let traj = hamilton_flow(&pt(&[1.0, 0.0]), &oscillator(), 2.0 * PI, 4000, Sign::Forward).unwrap();
        assert!((traj.last().coords() - pt(&[1.0, 0.0]).coords()).norm() < 1e-8);
    }

    #[test]
    fn reversed_flow_retraces() {
        let sys = pendulum();
        let fwd = hamilton_flow(&pt(&[0.4, 0.3]), &sys, 3.0, 3000, Sign::Forward).unwrap();
        let back = hamilton_flow(fwd.last(), &sys, 3.0, 3000, Sign::Reversed).unwrap();
        assert!((back.last().coords() - pt(&[0.4, 0.3]).coords()).norm() < 1e-10);
    }

    #[test]
    fn pendulum_energy_drift() {
        let traj = hamilton_flow(&pt(&[1.0, 0.2]), &pendulum(), 20.0, 20_000, Sign::Forward).unwrap();
        assert!(traj.energy_drift < 1e-8, "{}", traj.energy_drift);
    }

    #[test]
    fn energy_rate_vanishes_along_flow() {
        let sys = pendulum();
        let traj = hamilton_flow(&pt(&[1.0, 0.2]), &sys, 5.0, 500, Sign::Forward).unwrap();
        for (x, v) in traj.points.iter().zip(&traj.velocities) {
            let g = sys.gradient(x);
            assert!(g.dot(v).abs() < 1e-10);
            assert!((v.norm() - g.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn small_amplitude_pendulum_period() {
        let q0 = 0.1;
        let traj = hamilton_flow(&pt(&[q0, 0.0]), &pendulum(), 8.0, 80_000, Sign::Forward).unwrap();
        // p is negative on the first half swing and returns to zero from above after one period
        let mut period = None;
        for k in 1..traj.len() {
            let (a, b) = (traj.points[k - 1].coords()[1], traj.points[k].coords()[1]);
            if traj.times[k] > 1.0 && a > 0.0 && b <= 0.0 {
                let s = a / (a - b);
                period = Some(traj.times[k - 1] + s * (traj.times[k] - traj.times[k - 1]));
                break;
            }
        }
        let expected = 2.0 * PI * (1.0 + q0 * q0 / 16.0);
        assert!((period.unwrap() - expected).abs() < 1e-4);
    }

    #[test]
    fn projection_examples() {
        let sys = oscillator();
        let on = pt(&[0.6, 0.8]);
        let traced = project_to_shell_traced(&on, &sys, 0.5).unwrap();
        assert_eq!(traced.residuals.len(), 1);
        assert_eq!(traced.point, on);

        let p = project_to_shell(&pt(&[2.0, 0.0]), &sys, 0.5).unwrap();
        assert!((p.coords()[0] - 1.0).abs() < 1e-12 && p.coords()[1] == 0.0);
    }

    #[test]
    fn projection_converges_quadratically() {
        let sys = pendulum();
        let e = -0.5;
        for x in [[0.9, 0.55], [-0.7, 0.72], [1.2, -0.3]] {
            let traced = project_to_shell_traced(&pt(&x), &sys, e).unwrap();
            let r = &traced.residuals;
            assert!(r[0] < 0.5 && r.len() >= 3, "{r:?}");
            // quadratic: r_{k+1} <= C r_k^2 while above round-off
            for w in r.windows(2) {
                if w[1] > 1e-13 {
                    assert!(w[1] <= 10.0 * w[0] * w[0], "{r:?}");
                }
            }
            let again = project_to_shell(&traced.point, &sys, e).unwrap();
            assert_eq!(again, traced.point);
        }
    }

    #[test]
    fn kinetic_speed_examples() {
        let sys = oscillator();
        let qdot = DVector::from_column_slice(&[3.0]);
        assert!((config_kinetic_speed(&qdot, &sys).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(config_kinetic_speed(&DVector::zeros(1), &sys).unwrap(), 0.0);
        assert!(config_kinetic_speed(&qdot, &pendulum()).is_err());
    }

    #[test]
    fn hermite_interpolation_is_exact_at_nodes() {
        let traj = hamilton_flow(&pt(&[1.0, 0.0]), &oscillator(), 1.0, 100, Sign::Forward).unwrap();
        assert_eq!(&traj.interpolate(0.5).unwrap(), traj.points[50].coords());
        let mid = traj.interpolate(0.505).unwrap();
        let exact = DVector::from_column_slice(&[0.505f64.cos(), -0.505f64.sin()]);
        assert!((mid - exact).norm() < 1e-10);
    }

    #[test]
    fn derivative_cross_validation() {
        let probes: Vec<_> = (0..20).map(|k| pt(&[0.3 * k as f64 - 2.0, 0.1 * k as f64])).collect();
        let check = cross_validate(&pendulum(), &probes).unwrap();
        assert!(check.gradient_error < 1e-6 && check.hessian_error < 1e-5 && check.hessian_asymmetry < 1e-10);
    }
}
