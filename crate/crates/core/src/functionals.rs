//! Endpoint-fixed discretized paths and the functionals evaluated on them.
//!
//! Every path lives on a uniform grid `tau_k = k / n`, `k = 0..=n`. Arc
//! elements are chords (Euclidean, mass-weighted or Fubini-Study) and local
//! speeds at segment midpoints are averages of the two node values.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    energy_uncertainty, fs_segment_length, HermitianOperator, QuantumState, QuantumTrajectory, C64, DEGENERACY_FLOOR,
};
use crate::phase::{mass_weighted_arc, ClassicalSystem, ClassicalTrajectory, PhasePoint, SPEED_FLOOR};

/// Tolerance on `|H(x_k) - E|` for a path declared on-shell.
pub const SHELL_INVARIANT_TOLERANCE: f64 = 1e-10;
/// Floor on `E - V` below which `ds / sqrt(E - V)` is treated as a turning point.
pub const TURNING_POINT_FLOOR: f64 = 1e-12;

fn check_nodes(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::InvalidPath(format!("a path needs at least two nodes, got {len}")));
    }
    Ok(())
}

/// `tau_k = k / n` for a path with `n` segments.
pub fn uniform_taus(segments: usize) -> Vec<f64> {
    (0..=segments).map(|k| k as f64 / segments as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumPath {
    states: Vec<QuantumState>,
}

impl QuantumPath {
    pub fn new(states: Vec<QuantumState>) -> Result<Self> {
        check_nodes(states.len())?;
        let dim = states[0].dim();
        if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { states })
    }

    pub fn from_trajectory(traj: &QuantumTrajectory) -> Result<Self> {
        Self::new(traj.states.clone())
    }

    pub fn states(&self) -> &[QuantumState] {
        &self.states
    }

    pub fn into_states(self) -> Vec<QuantumState> {
        self.states
    }

    pub fn segments(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn taus(&self) -> Vec<f64> {
        uniform_taus(self.segments())
    }

    /// The two halves sharing node `k`; useful for additivity checks.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.segments() {
            return Err(Error::InvalidPath(format!("split node {k} is not interior")));
        }
        Ok((Self::new(self.states[..=k].to_vec())?, Self::new(self.states[k..].to_vec())?))
    }

    /// Layout: `tau,re0,im0,re1,im1,...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["tau".to_string()];
        for i in 0..self.dim() {
            header.push(format!("re{i}"));
            header.push(format!("im{i}"));
        }
        w.write_record(&header)?;
        for (tau, psi) in self.taus().iter().zip(&self.states) {
            let mut row = vec![*tau];
            row.extend(psi.amplitudes().iter().flat_map(|z| [z.re, z.im]));
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_rows(reader)?;
        let states = rows
            .into_iter()
            .map(|row| {
                let amps = &row[1..];
                if amps.len() % 2 != 0 {
                    return Err(Error::InvalidPath("odd number of amplitude columns".into()));
                }
                QuantumState::from_slice(&amps.chunks(2).map(|c| C64::new(c[0], c[1])).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalPath {
    points: Vec<PhasePoint>,
    shell_energy: Option<f64>,
}

impl ClassicalPath {
    /// Unconstrained phase-space path.
    pub fn new(points: Vec<PhasePoint>) -> Result<Self> {
        check_nodes(points.len())?;
        let dim = points[0].coords().len();
        if let Some(bad) = points.iter().find(|p| p.coords().len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.coords().len() });
        }
        Ok(Self { points, shell_energy: None })
    }

    /// Path declared on the shell `H = energy`; every node is checked.
    pub fn on_shell(points: Vec<PhasePoint>, sys: &ClassicalSystem, energy: f64) -> Result<Self> {
        let mut path = Self::new(points)?;
        let tol = SHELL_INVARIANT_TOLERANCE * energy.abs().max(1.0);
        for (k, x) in path.points.iter().enumerate() {
            let dev = (sys.energy(x) - energy).abs();
            if dev.is_nan() || dev > tol {
                return Err(Error::InvalidPath(format!("node {k} is off the shell E = {energy}: |H - E| = {dev:e}")));
            }
        }
        path.shell_energy = Some(energy);
        Ok(path)
    }

    pub fn from_trajectory(traj: &ClassicalTrajectory) -> Result<Self> {
        Self::new(traj.points.clone())
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<PhasePoint> {
        self.points
    }

    pub fn shell_energy(&self) -> Option<f64> {
        self.shell_energy
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn taus(&self) -> Vec<f64> {
        uniform_taus(self.segments())
    }

    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.segments() {
            return Err(Error::InvalidPath(format!("split node {k} is not interior")));
        }
        let mut a = Self::new(self.points[..=k].to_vec())?;
        let mut b = Self::new(self.points[k..].to_vec())?;
        a.shell_energy = self.shell_energy;
        b.shell_energy = self.shell_energy;
        Ok((a, b))
    }

    /// Layout: `tau,x0,x1,...` with `x = (q, p)`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_real_rows(writer, "x", &self.taus(), self.points.iter().map(|p| p.coords().as_slice()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let points =
            read_rows(reader)?.into_iter().map(|row| PhasePoint::from_slice(&row[1..])).collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigPath {
    positions: Vec<DVector<f64>>,
}

impl ConfigPath {
    pub fn new(positions: Vec<DVector<f64>>) -> Result<Self> {
        check_nodes(positions.len())?;
        let dim = positions[0].len();
        if let Some(bad) = positions.iter().find(|q| q.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        Ok(Self { positions })
    }

    /// Positions of a phase-space trajectory.
    pub fn from_trajectory(traj: &ClassicalTrajectory) -> Result<Self> {
        Self::new(traj.points.iter().map(|x| x.q()).collect())
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<DVector<f64>> {
        self.positions
    }

    pub fn segments(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn taus(&self) -> Vec<f64> {
        uniform_taus(self.segments())
    }

    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.segments() {
            return Err(Error::InvalidPath(format!("split node {k} is not interior")));
        }
        Ok((Self::new(self.positions[..=k].to_vec())?, Self::new(self.positions[k..].to_vec())?))
    }

    /// Checks the accessibility constraint `V(q_k) < E` at every node.
    pub fn check_accessible(&self, sys: &ClassicalSystem, energy: f64) -> Result<Vec<f64>> {
        self.positions
            .iter()
            .enumerate()
            .map(|(node, q)| {
                let v = potential(sys, q)?;
                if v.is_nan() || v >= energy {
                    return Err(Error::ForbiddenRegion { node, potential: v, energy });
                }
                Ok(energy - v)
            })
            .collect()
    }

    /// Layout: `tau,q0,q1,...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_real_rows(writer, "q", &self.taus(), self.positions.iter().map(|q| q.as_slice()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let positions = read_rows(reader)?.into_iter().map(|row| DVector::from_column_slice(&row[1..])).collect();
        Self::new(positions)
    }
}

fn potential(sys: &ClassicalSystem, q: &DVector<f64>) -> Result<f64> {
    sys.potential(q).ok_or_else(|| Error::InvalidParameter(format!("system '{}' has no potential", sys.name())))
}

fn write_real_rows<'a, W: Write>(
    writer: W,
    prefix: &str,
    taus: &[f64],
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut rows = rows.peekable();
    let width = rows.peek().map_or(0, |r| r.len());
    let header: Vec<String> =
        std::iter::once("tau".to_string()).chain((0..width).map(|i| format!("{prefix}{i}"))).collect();
    w.write_record(&header)?;
    for (tau, row) in taus.iter().zip(rows) {
        w.write_record(std::iter::once(tau).chain(row).map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidPath(format!("row {}: cannot parse '{f}': {e}", line + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() < 2 {
            return Err(Error::InvalidPath(format!("row {} has no coordinates", line + 2)));
        }
        out.push(row);
    }
    Ok(out)
}

/// One segment of a discretized functional: chord length, midpoint speed and
/// the resulting contribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub ds: f64,
    pub speed: f64,
    pub contribution: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    QuantumTime,
    ClassicalTime,
    QuantumLength,
    ClassicalLength,
    JacobiAction,
    InverseJacobiAction,
}

impl FunctionalKind {
    pub fn id(self) -> &'static str {
        match self {
            FunctionalKind::QuantumTime => "quantum_time",
            FunctionalKind::ClassicalTime => "classical_time",
            FunctionalKind::QuantumLength => "quantum_length",
            FunctionalKind::ClassicalLength => "classical_length",
            FunctionalKind::JacobiAction => "jacobi_action",
            FunctionalKind::InverseJacobiAction => "inverse_jacobi_action",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub kind: FunctionalKind,
    pub value: f64,
    pub segments: Vec<Segment>,
    pub grid_size: usize,
    /// Ratio of `value` to elapsed physical time along physical flows, when
    /// the functional measures time at all.
    pub time_factor: Option<f64>,
}

impl FunctionalValue {
    fn from_segments(kind: FunctionalKind, segments: Vec<Segment>, time_factor: Option<f64>) -> Self {
        let value = segments.iter().map(|s| s.contribution).sum();
        Self { kind, value, grid_size: segments.len(), segments, time_factor }
    }
}

fn degenerate(speed: f64, node: usize) -> Error {
    Error::DegenerateSpeed { speed, floor: DEGENERACY_FLOOR, node: Some(node) }
}

/// `sum_k d_FS(psi_k, psi_k+1) / dE_mid,k`.
pub fn quantum_time_functional(path: &QuantumPath, h: &HermitianOperator) -> Result<FunctionalValue> {
    let speeds = path
        .states
        .iter()
        .enumerate()
        .map(|(k, psi)| {
            let de = energy_uncertainty(psi, h)?;
            if de <= DEGENERACY_FLOOR {
                return Err(degenerate(de, k));
            }
            Ok(de)
        })
        .collect::<Result<Vec<_>>>()?;
    let segments = path
        .states
        .windows(2)
        .zip(speeds.windows(2))
        .map(|(s, v)| {
            let ds = fs_segment_length(&s[0], &s[1])?;
            let speed = 0.5 * (v[0] + v[1]);
            Ok(Segment { ds, speed, contribution: ds / speed })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionalValue::from_segments(FunctionalKind::QuantumTime, segments, Some(1.0)))
}

/// `sum_k |x_k+1 - x_k| / |grad H|_mid,k`.
pub fn classical_time_functional(path: &ClassicalPath, sys: &ClassicalSystem) -> Result<FunctionalValue> {
    let speeds = path
        .points
        .iter()
        .enumerate()
        .map(|(k, x)| {
            if x.coords().len() != sys.phase_dim() {
                return Err(Error::DimensionMismatch { expected: sys.phase_dim(), found: x.coords().len() });
            }
            let v = sys.gradient(x).norm();
            if v.is_nan() || v <= SPEED_FLOOR {
                return Err(Error::DegenerateSpeed { speed: v, floor: SPEED_FLOOR, node: Some(k) });
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let segments = path
        .points
        .windows(2)
        .zip(speeds.windows(2))
        .map(|(x, v)| {
            let ds = (x[1].coords() - x[0].coords()).norm();
            let speed = 0.5 * (v[0] + v[1]);
            Segment { ds, speed, contribution: ds / speed }
        })
        .collect();
    Ok(FunctionalValue::from_segments(FunctionalKind::ClassicalTime, segments, Some(1.0)))
}

/// Paths with a bare arc-length functional.
pub trait PathLength {
    fn path_length(&self) -> Result<FunctionalValue>;
}

impl PathLength for QuantumPath {
    /// Sum of Fubini-Study chord lengths.
    fn path_length(&self) -> Result<FunctionalValue> {
        let segments = self
            .states
            .windows(2)
            .map(|s| {
                let ds = fs_segment_length(&s[0], &s[1])?;
                Ok(Segment { ds, speed: 1.0, contribution: ds })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FunctionalValue::from_segments(FunctionalKind::QuantumLength, segments, None))
    }
}

impl PathLength for ClassicalPath {
    /// Sum of Euclidean chord lengths in phase space.
    fn path_length(&self) -> Result<FunctionalValue> {
        let segments = self
            .points
            .windows(2)
            .map(|x| {
                let ds = (x[1].coords() - x[0].coords()).norm();
                Segment { ds, speed: 1.0, contribution: ds }
            })
            .collect();
        Ok(FunctionalValue::from_segments(FunctionalKind::ClassicalLength, segments, None))
    }
}

pub fn path_length<P: PathLength>(path: &P) -> Result<FunctionalValue> {
    path.path_length()
}

fn config_segments(path: &ConfigPath, sys: &ClassicalSystem, energy: f64, inverse: bool) -> Result<Vec<Segment>> {
    let kinetic = path.check_accessible(sys, energy)?;
    let roots: Vec<f64> = kinetic.iter().map(|t| t.sqrt()).collect();
    if inverse {
        if let Some((k, t)) = kinetic.iter().enumerate().find(|(_, t)| **t <= TURNING_POINT_FLOOR) {
            return Err(Error::DegenerateSpeed { speed: t.sqrt(), floor: TURNING_POINT_FLOOR.sqrt(), node: Some(k) });
        }
    }
    path.positions
        .windows(2)
        .zip(roots.windows(2))
        .map(|(q, r)| {
            let ds = mass_weighted_arc(&(&q[1] - &q[0]), sys)?;
            let speed = 0.5 * (r[0] + r[1]);
            let contribution = if inverse { ds / speed } else { ds * speed };
            Ok(Segment { ds, speed, contribution })
        })
        .collect()
}

/// `sum_k sqrt(E - V)_mid,k ds_k` with the mass-weighted arc element.
pub fn jacobi_action(path: &ConfigPath, sys: &ClassicalSystem, energy: f64) -> Result<FunctionalValue> {
    let segments = config_segments(path, sys, energy, false)?;
    Ok(FunctionalValue::from_segments(FunctionalKind::JacobiAction, segments, None))
}

/// `sum_k ds_k / sqrt(E - V)_mid,k`. Along physical flows `ds / sqrt(2T) = dt`,
/// so the value is `sqrt(2)` times the elapsed time.
pub fn inverse_jacobi_action(path: &ConfigPath, sys: &ClassicalSystem, energy: f64) -> Result<FunctionalValue> {
    let segments = config_segments(path, sys, energy, true)?;
    Ok(FunctionalValue::from_segments(FunctionalKind::InverseJacobiAction, segments, Some(std::f64::consts::SQRT_2)))
}

/// A functional on paths of type `P`, as consumed by the variation engine.
pub trait Functional<P>: Send + Sync {
    fn kind(&self) -> FunctionalKind;
    fn evaluate(&self, path: &P) -> Result<FunctionalValue>;
}

/// Quantum time functional for a fixed Hamiltonian.
#[derive(Clone, Debug)]
pub struct QuantumTime(pub HermitianOperator);

impl Functional<QuantumPath> for QuantumTime {
    fn kind(&self) -> FunctionalKind {
        FunctionalKind::QuantumTime
    }
    fn evaluate(&self, path: &QuantumPath) -> Result<FunctionalValue> {
        quantum_time_functional(path, &self.0)
    }
}

/// Fubini-Study length.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuantumLength;

impl Functional<QuantumPath> for QuantumLength {
    fn kind(&self) -> FunctionalKind {
        FunctionalKind::QuantumLength
    }
    fn evaluate(&self, path: &QuantumPath) -> Result<FunctionalValue> {
        path.path_length()
    }
}

/// Classical phase-space time functional.
#[derive(Clone, Debug)]
pub struct ClassicalTime(pub ClassicalSystem);

impl Functional<ClassicalPath> for ClassicalTime {
    fn kind(&self) -> FunctionalKind {
        FunctionalKind::ClassicalTime
    }
    fn evaluate(&self, path: &ClassicalPath) -> Result<FunctionalValue> {
        classical_time_functional(path, &self.0)
    }
}

/// Euclidean phase-space length.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClassicalLength;

impl Functional<ClassicalPath> for ClassicalLength {
    fn kind(&self) -> FunctionalKind {
        FunctionalKind::ClassicalLength
    }
    fn evaluate(&self, path: &ClassicalPath) -> Result<FunctionalValue> {
        path.path_length()
    }
}

#[derive(Clone, Debug)]
pub struct JacobiAction {
    pub system: ClassicalSystem,
    pub energy: f64,
}

impl Functional<ConfigPath> for JacobiAction {
    fn kind(&self) -> FunctionalKind {
        FunctionalKind::JacobiAction
    }
    fn evaluate(&self, path: &ConfigPath) -> Result<FunctionalValue> {
        jacobi_action(path, &self.system, self.energy)
    }
}

#[derive(Clone, Debug)]
pub struct InverseJacobiAction {
    pub system: ClassicalSystem,
    pub energy: f64,
}

impl Functional<ConfigPath> for InverseJacobiAction {
    fn kind(&self) -> FunctionalKind {
        FunctionalKind::InverseJacobiAction
    }
    fn evaluate(&self, path: &ConfigPath) -> Result<FunctionalValue> {
        inverse_jacobi_action(path, &self.system, self.energy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{propagate_schrodinger, Sign};
    use crate::phase::hamilton_flow;
    use crate::systems::{build_classical, build_quantum, SystemKind, SystemSpec};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn exchange() -> HermitianOperator {
        build_quantum(&SystemSpec::new(SystemKind::QubitField)).unwrap()
    }

    fn oscillator(dof: usize) -> ClassicalSystem {
        build_classical(&SystemSpec::new(SystemKind::OscillatorNd).with("dof", dof as f64)).unwrap()
    }

    fn circle(r: f64, n: usize) -> ClassicalPath {
        ClassicalPath::new(
            (0..=n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    PhasePoint::from_slice(&[r * t.cos(), -r * t.sin()]).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn quantum_time_equals_elapsed_time() {
        let psi = QuantumState::basis(2, 0).unwrap();
        let traj = propagate_schrodinger(&psi, &exchange(), FRAC_PI_2, 1000, Sign::Forward).unwrap();
        let t = quantum_time_functional(&QuantumPath::from_trajectory(&traj).unwrap(), &exchange()).unwrap();
        assert!((t.value - FRAC_PI_2).abs() < 1e-6);
        assert_eq!(t.grid_size, 1000);
    }

    #[test]
    fn eigenstate_node_is_degenerate() {
        let h = HermitianOperator::diagonal(&[1.0, -1.0]).unwrap();
        let a = QuantumState::basis(2, 0).unwrap();
        let b = QuantumState::from_slice(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let err = quantum_time_functional(&QuantumPath::new(vec![b, a]).unwrap(), &h).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpeed { node: Some(1), .. }));
    }

    #[test]
    fn quantum_time_converges_at_second_order() {
        // a fixed non-physical path: a geodesic traversed at non-uniform rate
        let h = build_quantum(&SystemSpec::new(SystemKind::RandomHermitian).with("dim", 4.0).with_seed(1)).unwrap();
        let a = crate::systems::random_state(4, 2).unwrap();
        let b = crate::systems::random_state(4, 3).unwrap();
        let path = |n: usize| {
            let theta = fs_segment_length(&a, &b).unwrap();
            let ov = a.inner(&b).unwrap();
            let phase = ov / ov.norm();
            let perp = (b.amplitudes().map(|z| z * phase.conj()) - a.amplitudes().scale(ov.norm())).normalize();
            let states = (0..=n)
                .map(|k| {
                    let s = k as f64 / n as f64;
                    let angle = theta * s * s;
                    QuantumState::new(a.amplitudes().scale(angle.cos()) + perp.scale(angle.sin())).unwrap()
                })
                .collect();
            quantum_time_functional(&QuantumPath::new(states).unwrap(), &h).unwrap().value
        };
        let (t1, t2, t4) = (path(100), path(200), path(400));
        let ratio = (t1 - t2) / (t2 - t4);
        assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn classical_time_on_circle_is_two_pi() {
        let sys = oscillator(1);
        for r in [0.5, 1.0, 3.0] {
            let t = classical_time_functional(&circle(r, 1000), &sys).unwrap();
            assert!((t.value / (2.0 * PI) - 1.0).abs() < 1e-5, "{r}: {}", t.value);
        }
    }

    #[test]
    fn classical_time_converges_at_second_order() {
        let sys = oscillator(1);
        let e1 = (classical_time_functional(&circle(1.0, 500), &sys).unwrap().value - 2.0 * PI).abs();
        let e2 = (classical_time_functional(&circle(1.0, 1000), &sys).unwrap().value - 2.0 * PI).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.05);
    }

    #[test]
    fn free_particle_time_telescopes() {
        let sys = build_classical(&SystemSpec::new(SystemKind::FreeParticle)).unwrap();
        let traj = hamilton_flow(&PhasePoint::from_slice(&[0.0, 2.0]).unwrap(), &sys, 1.5, 10, Sign::Forward).unwrap();
        let t = classical_time_functional(&ClassicalPath::from_trajectory(&traj).unwrap(), &sys).unwrap();
        assert!((t.value - 1.5).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_node_is_degenerate() {
        let sys = oscillator(1);
        let path = ClassicalPath::new(vec![
            PhasePoint::from_slice(&[1.0, 0.0]).unwrap(),
            PhasePoint::from_slice(&[0.0, 0.0]).unwrap(),
        ])
        .unwrap();
        assert!(matches!(classical_time_functional(&path, &sys), Err(Error::DegenerateSpeed { .. })));
    }

    #[test]
    fn lengths() {
        let seg = ClassicalPath::new(vec![
            PhasePoint::from_slice(&[0.0, 0.0]).unwrap(),
            PhasePoint::from_slice(&[3.0, 4.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(path_length(&seg).unwrap().value, 5.0);
        assert!((path_length(&circle(1.0, 1000)).unwrap().value / (2.0 * PI) - 1.0).abs() < 1e-5);

        let psi = QuantumState::basis(2, 0).unwrap();
        let traj = propagate_schrodinger(&psi, &exchange(), FRAC_PI_2, 1000, Sign::Forward).unwrap();
        let len = path_length(&QuantumPath::from_trajectory(&traj).unwrap()).unwrap();
        assert!((len.value - FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn value_is_sum_of_contributions_and_additive() {
        let sys = oscillator(1);
        let path = circle(1.3, 301);
        let whole = classical_time_functional(&path, &sys).unwrap();
        let sum: f64 = whole.segments.iter().map(|s| s.contribution).sum();
        assert_eq!(whole.value, sum);
        let (a, b) = path.split_at(117).unwrap();
        let parts =
            classical_time_functional(&a, &sys).unwrap().value + classical_time_functional(&b, &sys).unwrap().value;
        assert!((parts - whole.value).abs() <= 1e-14 * whole.value);
    }

    fn free(dof: usize) -> ClassicalSystem {
        build_classical(&SystemSpec::new(SystemKind::FreeParticle).with("dof", dof as f64)).unwrap()
    }

    fn line(length: f64, n: usize) -> ConfigPath {
        ConfigPath::new((0..=n).map(|k| DVector::from_column_slice(&[length * k as f64 / n as f64, 0.0])).collect())
            .unwrap()
    }

    #[test]
    fn free_particle_actions() {
        let sys = free(2);
        let (l, e) = (2.5, 0.7);
        assert!((jacobi_action(&line(l, 10), &sys, e).unwrap().value - e.sqrt() * l).abs() < 1e-14);
        assert!((inverse_jacobi_action(&line(l, 10), &sys, e).unwrap().value - l / e.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn forbidden_region_and_turning_points() {
        let sys = oscillator(2);
        let err = jacobi_action(&line(2.0, 4), &sys, 1.0).unwrap_err();
        assert!(matches!(err, Error::ForbiddenRegion { node: 3, .. }), "{err:?}");
        // grazing V = E at the last node
        let grazing =
            ConfigPath::new(vec![DVector::from_column_slice(&[0.0, 0.0]), DVector::from_column_slice(&[1.0, 0.0])])
                .unwrap();
        let err = inverse_jacobi_action(&grazing, &sys, 0.5 + 1e-15).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpeed { node: Some(1), .. }), "{err:?}");
    }

    #[test]
    fn config_actions_along_oscillator_flow() {
        let sys = oscillator(1);
        // starts at q = 0.3 moving up, stops short of the turning point
        let x0 = PhasePoint::from_slice(&[0.3, 0.9]).unwrap();
        let e = sys.energy(&x0);
        let t_final = 0.8;
        let traj = hamilton_flow(&x0, &sys, t_final, 2000, Sign::Forward).unwrap();
        let path = ConfigPath::from_trajectory(&traj).unwrap();
        let inv = inverse_jacobi_action(&path, &sys, e).unwrap();
        assert!((inv.value / inv.time_factor.unwrap() - t_final).abs() < 1e-5);
        // int sqrt(E - V) ds = int sqrt(T) |qdot| dt = int sqrt(2) T dt
        let kinetic: Vec<f64> = traj.points.iter().map(|x| 0.5 * x.p()[0].powi(2)).collect();
        let oracle = std::f64::consts::SQRT_2 * crate::numeric::trapezoid(&traj.times, &kinetic);
        assert!((jacobi_action(&path, &sys, e).unwrap().value - oracle).abs() < 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let psi = crate::systems::random_state(3, 9).unwrap();
        let h = build_quantum(&SystemSpec::new(SystemKind::RandomHermitian).with("dim", 3.0)).unwrap();
        let traj = propagate_schrodinger(&psi, &h, 1.0, 5, Sign::Forward).unwrap();
        let qp = QuantumPath::from_trajectory(&traj).unwrap();
        let mut buf = Vec::new();
        qp.write_csv(&mut buf).unwrap();
        let back = QuantumPath::read_csv(buf.as_slice()).unwrap();
        for (a, b) in qp.states().iter().zip(back.states()) {
            assert!(fs_segment_length(a, b).unwrap() < 1e-15);
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,re0,im0,re1,im1,re2,im2\n"));

        let cp = circle(1.0, 7);
        let mut buf = Vec::new();
        cp.write_csv(&mut buf).unwrap();
        assert_eq!(ClassicalPath::read_csv(buf.as_slice()).unwrap(), cp);

        let lp = line(1.0, 3);
        let mut buf = Vec::new();
        lp.write_csv(&mut buf).unwrap();
        assert_eq!(ConfigPath::read_csv(buf.as_slice()).unwrap(), lp);
    }

    #[test]
    fn on_shell_invariant_checked() {
        let sys = oscillator(1);
        let pts = vec![PhasePoint::from_slice(&[1.0, 0.0]).unwrap(), PhasePoint::from_slice(&[0.0, 1.1]).unwrap()];
        assert!(ClassicalPath::on_shell(pts, &sys, 0.5).is_err());
        assert_eq!(circle(1.0, 10).shell_energy(), None);
    }
}
