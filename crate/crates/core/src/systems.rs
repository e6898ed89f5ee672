//! Catalog of quantum and classical test systems.
//!
//! Every classical system carries analytic gradients and Hessians. Separable
//! systems use the kinetic normalization `|p|^2 / 2m`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HermitianOperator, QuantumState, TimeDependentHamiltonian, C64};
use crate::phase::{ClassicalSystem, Hamiltonian, PhasePoint};

/// Largest Hilbert-space dimension the catalog will build.
pub const MAX_QUANTUM_DIM: usize = 64;
/// Largest number of classical degrees of freedom the catalog will build.
pub const MAX_CLASSICAL_DOF: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    QubitField,
    DrivenQubit,
    HeisenbergChain,
    RandomHermitian,
    OscillatorNd,
    Pendulum,
    DoubleWell,
    HenonHeilesLike,
    ClassicalSpinPair,
    FreeParticle,
}

impl SystemKind {
    pub const ALL: [SystemKind; 10] = [
        SystemKind::QubitField,
        SystemKind::DrivenQubit,
        SystemKind::HeisenbergChain,
        SystemKind::RandomHermitian,
        SystemKind::OscillatorNd,
        SystemKind::Pendulum,
        SystemKind::DoubleWell,
        SystemKind::HenonHeilesLike,
        SystemKind::ClassicalSpinPair,
        SystemKind::FreeParticle,
    ];

    pub fn is_quantum(self) -> bool {
        matches!(
            self,
            SystemKind::QubitField
                | SystemKind::DrivenQubit
                | SystemKind::HeisenbergChain
                | SystemKind::RandomHermitian
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::QubitField => "qubit_field",
            SystemKind::DrivenQubit => "driven_qubit",
            SystemKind::HeisenbergChain => "heisenberg_chain",
            SystemKind::RandomHermitian => "random_hermitian",
            SystemKind::OscillatorNd => "oscillator_nd",
            SystemKind::Pendulum => "pendulum",
            SystemKind::DoubleWell => "double_well",
            SystemKind::HenonHeilesLike => "henon_heiles_like",
            SystemKind::ClassicalSpinPair => "classical_spin_pair",
            SystemKind::FreeParticle => "free_particle",
        }
    }

    /// Accepted parameter names and their defaults.
    pub fn parameter_defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            SystemKind::QubitField => &[("hx", 1.0), ("hy", 0.0), ("hz", 0.0)],
            SystemKind::DrivenQubit => &[("omega0", 1.0), ("amplitude", 0.5), ("drive_frequency", 1.0)],
            SystemKind::HeisenbergChain => &[("sites", 3.0), ("coupling", 1.0), ("field", 0.0)],
            SystemKind::RandomHermitian => &[("dim", 8.0)],
            SystemKind::OscillatorNd => &[("dof", 1.0), ("omega", 1.0), ("mass", 1.0)],
            SystemKind::Pendulum => &[("dof", 1.0), ("coupling", 0.0)],
            SystemKind::DoubleWell => &[("depth", 1.0)],
            SystemKind::HenonHeilesLike => &[("lambda", 1.0)],
            SystemKind::ClassicalSpinPair => &[("coupling", 1.0), ("coupling_z", 1.0), ("field", 0.5)],
            SystemKind::FreeParticle => &[("dof", 1.0), ("mass", 1.0)],
        }
    }
}

/// Declarative description of a system; building it twice gives identical results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SystemSpec {
    pub fn new(kind: SystemKind) -> Self {
        Self { kind, parameters: BTreeMap::new(), seed: None }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Parameters merged over defaults; unknown names are an error.
    pub fn resolved_parameters(&self) -> Result<BTreeMap<String, f64>> {
        let defaults = self.kind.parameter_defaults();
        for name in self.parameters.keys() {
            if !defaults.iter().any(|(d, _)| d == name) {
                let known: Vec<_> = defaults.iter().map(|(d, _)| *d).collect();
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter '{name}' for {:?}; expected one of {known:?}",
                    self.kind
                )));
            }
        }
        let mut out: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in &self.parameters {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("parameter '{k}' is not finite")));
            }
            out.insert(k.clone(), *v);
        }
        Ok(out)
    }

    fn param(&self, name: &str) -> Result<f64> {
        Ok(self.resolved_parameters()?[name])
    }

    fn count(&self, name: &str, min: usize, max: usize) -> Result<usize> {
        let v = self.param(name)?;
        if v.fract() != 0.0 || v < min as f64 || v > max as f64 {
            return Err(Error::InvalidParameter(format!("'{name}' must be an integer in [{min}, {max}], got {v}")));
        }
        Ok(v as usize)
    }

    fn positive(&self, name: &str) -> Result<f64> {
        let v = self.param(name)?;
        if v <= 0.0 {
            return Err(Error::InvalidParameter(format!("'{name}' must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Hilbert-space dimension of a quantum spec.
    pub fn quantum_dim(&self) -> Result<usize> {
        match self.kind {
            SystemKind::QubitField | SystemKind::DrivenQubit => Ok(2),
            SystemKind::HeisenbergChain => Ok(1 << self.count("sites", 2, 6)?),
            SystemKind::RandomHermitian => self.count("dim", 2, MAX_QUANTUM_DIM),
            other => Err(Error::InvalidParameter(format!("{other:?} is not a quantum system"))),
        }
    }

    /// Classical degrees of freedom of a classical spec.
    pub fn classical_dof(&self) -> Result<usize> {
        match self.kind {
            SystemKind::OscillatorNd | SystemKind::Pendulum | SystemKind::FreeParticle => {
                self.count("dof", 1, MAX_CLASSICAL_DOF)
            }
            SystemKind::DoubleWell => Ok(1),
            SystemKind::HenonHeilesLike | SystemKind::ClassicalSpinPair => Ok(2),
            other => Err(Error::InvalidParameter(format!("{other:?} is not a classical system"))),
        }
    }

    /// Deterministic starting point used when an experiment gives none.
    pub fn default_initial_point(&self) -> Result<PhasePoint> {
        let n = self.classical_dof()?;
        let (q, p): (Vec<f64>, Vec<f64>) = match self.kind {
            SystemKind::OscillatorNd => (
                (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
                (0..n).map(|i| [0.0, 0.8][i.min(1)] - 0.5 * (i.saturating_sub(1)) as f64 * 0.1).collect(),
            ),
            SystemKind::Pendulum => (
                (0..n).map(|i| if i % 2 == 0 { 0.3 + 0.1 * i as f64 } else { -0.4 - 0.1 * i as f64 }).collect(),
                (0..n).map(|i| 0.6 - 0.1 * i as f64).collect(),
            ),
            SystemKind::FreeParticle => (vec![0.0; n], (0..n).map(|i| 1.0 / (i + 1) as f64).collect()),
            SystemKind::DoubleWell => (vec![0.5], vec![0.3]),
            SystemKind::HenonHeilesLike => (vec![0.1, -0.1], vec![0.3, 0.25]),
            SystemKind::ClassicalSpinPair => (vec![0.3, -0.2], vec![0.1, 1.3]),
            _ => unreachable!("classical_dof rejected quantum kinds"),
        };
        PhasePoint::from_qp(&q, &p)
    }

    /// Seeded probe points inside the domain of the system.
    pub fn probe_points(&self, count: usize, seed: u64) -> Result<Vec<PhasePoint>> {
        let n = self.classical_dof()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let coords: Vec<f64> = match self.kind {
                    SystemKind::ClassicalSpinPair => {
                        let z: Vec<f64> = (0..2).map(|_| rng.random_range(-0.9..0.9)).collect();
                        let phi: Vec<f64> = (0..2).map(|_| rng.random_range(-PI..PI)).collect();
                        z.into_iter().chain(phi).collect()
                    }
                    _ => (0..2 * n).map(|_| rng.random_range(-1.5..1.5)).collect(),
                };
                PhasePoint::from_slice(&coords)
            })
            .collect()
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli() -> [DMatrix<C64>; 3] {
    let i = C64::new(0.0, 1.0);
    [
        DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]),
    ]
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// `op` acting on `site` of an `n`-site chain.
pub fn site_operator(op: &DMatrix<C64>, site: usize, n: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let mut out = DMatrix::<C64>::identity(1, 1);
    for k in 0..n {
        out = kron(&out, if k == site { op } else { &id });
    }
    out
}

/// `sum_i Z_i` for an `n`-site chain.
pub fn total_z(n: usize) -> DMatrix<C64> {
    let z = &pauli()[2];
    (0..n).fold(DMatrix::zeros(1 << n, 1 << n), |acc, s| acc + site_operator(z, s, n))
}

/// Builds the (static) Hamiltonian of a quantum spec. For `driven_qubit`
/// this is `H(0)`; use [`build_time_dependent`] for the full drive.
pub fn build_quantum(spec: &SystemSpec) -> Result<HermitianOperator> {
    let [x, y, z] = pauli();
    match spec.kind {
        SystemKind::QubitField => {
            let m = x.scale(spec.param("hx")?) + y.scale(spec.param("hy")?) + z.scale(spec.param("hz")?);
            HermitianOperator::new(m)
        }
        SystemKind::DrivenQubit => build_time_dependent(spec)?.at(0.0),
        SystemKind::HeisenbergChain => {
            let n = spec.count("sites", 2, 6)?;
            let coupling = spec.param("coupling")?;
            let field = spec.param("field")?;
            let dim = 1 << n;
            let mut m = DMatrix::<C64>::zeros(dim, dim);
            for s in 0..n - 1 {
                for p in [&x, &y, &z] {
                    m += (site_operator(p, s, n) * site_operator(p, s + 1, n)).scale(coupling);
                }
            }
            m += total_z(n).scale(field);
            HermitianOperator::new(m)
        }
        SystemKind::RandomHermitian => {
            let dim = spec.count("dim", 2, MAX_QUANTUM_DIM)?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed_or_default());
            let a = DMatrix::from_fn(dim, dim, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im)
            });
            let scale = 0.5 / (dim as f64).sqrt();
            HermitianOperator::new((&a + a.adjoint()).scale(scale))
        }
        other => Err(Error::InvalidParameter(format!("{other:?} is not a quantum system"))),
    }
}

/// `H(t) = omega0/2 Z + A cos(w t) X` for `driven_qubit`; a constant family otherwise.
pub fn build_time_dependent(spec: &SystemSpec) -> Result<TimeDependentHamiltonian> {
    match spec.kind {
        SystemKind::DrivenQubit => {
            let omega0 = spec.param("omega0")?;
            let amplitude = spec.param("amplitude")?;
            let w = spec.param("drive_frequency")?;
            let [x, _, z] = pauli();
            let max_frequency = omega0.abs() / 2.0 + amplitude.abs() + w.abs();
            Ok(TimeDependentHamiltonian::new(2, max_frequency, move |t| {
                z.scale(0.5 * omega0) + x.scale(amplitude * (w * t).cos())
            }))
        }
        _ => Ok(TimeDependentHamiltonian::constant(build_quantum(spec)?)),
    }
}

/// Seeded random initial state for quantum experiments.
pub fn random_state(dim: usize, seed: u64) -> Result<QuantumState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QuantumState::random(dim, &mut rng)
}

/// `V(q)` with analytic derivatives.
trait Potential: Send + Sync + std::fmt::Debug {
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64>;
}

/// `|p|^2 / 2m + V(q)`.
#[derive(Debug)]
struct Separable<P> {
    dof: usize,
    mass: f64,
    potential: P,
}

impl<P: Potential> Hamiltonian for Separable<P> {
    fn dof(&self) -> usize {
        self.dof
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        let (q, p) = split(x, self.dof);
        p.norm_squared() / (2.0 * self.mass) + self.potential.value(&q)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (q, p) = split(x, self.dof);
        let gq = self.potential.gradient(&q);
        DVector::from_iterator(2 * self.dof, gq.iter().copied().chain(p.iter().map(|v| v / self.mass)))
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (q, _) = split(x, self.dof);
        let n = self.dof;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.potential.hessian(&q));
        for i in 0..n {
            h[(n + i, n + i)] = 1.0 / self.mass;
        }
        h
    }

    fn potential(&self, q: &DVector<f64>) -> Option<f64> {
        Some(self.potential.value(q))
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.potential.gradient(q))
    }

    fn mass_matrix(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dof, self.dof).scale(self.mass))
    }
}

fn split(x: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
}

/// `m w^2 |q|^2 / 2`.
#[derive(Debug)]
struct Harmonic {
    stiffness: f64,
}

impl Potential for Harmonic {
    fn value(&self, q: &DVector<f64>) -> f64 {
        0.5 * self.stiffness * q.norm_squared()
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        q.scale(self.stiffness)
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(q.len(), q.len()).scale(self.stiffness)
    }
}

#[derive(Debug)]
struct Flat;

impl Potential for Flat {
    fn value(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(q.len())
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(q.len(), q.len())
    }
}

/// `-sum cos q_i + k/2 sum (q_{i+1} - q_i)^2`.
#[derive(Debug)]
struct PendulumChain {
    coupling: f64,
}

impl Potential for PendulumChain {
    fn value(&self, q: &DVector<f64>) -> f64 {
        let gravity: f64 = q.iter().map(|x| -x.cos()).sum();
        let springs: f64 = q.as_slice().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        gravity + 0.5 * self.coupling * springs
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let n = q.len();
        DVector::from_fn(n, |i, _| {
            let mut g = q[i].sin();
            if i > 0 {
                g += self.coupling * (q[i] - q[i - 1]);
            }
            if i + 1 < n {
                g -= self.coupling * (q[i + 1] - q[i]);
            }
            g
        })
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = q.len();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = q[i].cos();
            if i > 0 {
                h[(i, i)] += self.coupling;
                h[(i, i - 1)] -= self.coupling;
            }
            if i + 1 < n {
                h[(i, i)] += self.coupling;
                h[(i, i + 1)] -= self.coupling;
            }
        }
        h
    }
}

/// `depth (q^2 - 1)^2`.
#[derive(Debug)]
struct DoubleWell {
    depth: f64,
}

impl Potential for DoubleWell {
    fn value(&self, q: &DVector<f64>) -> f64 {
        self.depth * (q[0] * q[0] - 1.0).powi(2)
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 4.0 * self.depth * q[0] * (q[0] * q[0] - 1.0))
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.depth * (12.0 * q[0] * q[0] - 4.0))
    }
}

/// `(q1^2 + q2^2)/2 + lambda (q1^2 q2 - q2^3/3)`.
#[derive(Debug)]
struct HenonHeiles {
    lambda: f64,
}

impl Potential for HenonHeiles {
    fn value(&self, q: &DVector<f64>) -> f64 {
        let (x, y) = (q[0], q[1]);
        0.5 * (x * x + y * y) + self.lambda * (x * x * y - y * y * y / 3.0)
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let (x, y) = (q[0], q[1]);
        DVector::from_column_slice(&[x + 2.0 * self.lambda * x * y, y + self.lambda * (x * x - y * y)])
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (x, y) = (q[0], q[1]);
        let l = self.lambda;
        DMatrix::from_row_slice(2, 2, &[1.0 + 2.0 * l * y, 2.0 * l * x, 2.0 * l * x, 1.0 - 2.0 * l * y])
    }
}

/// Two classical unit spins in canonical coordinates `(z1, z2, phi1, phi2)`
/// with `z = cos(theta)`:
/// `H = Jz z1 z2 + J r1 r2 cos(phi1 - phi2) + B (z1 + z2)`, `r = sqrt(1 - z^2)`.
///
/// This is the XXZ exchange `J (Sx Sx + Sy Sy) + Jz Sz Sz` plus a Zeeman
/// term written in the chart; it is axially symmetric, so `z1 + z2` is conserved.
#[derive(Debug)]
struct SpinPair {
    coupling: f64,
    coupling_z: f64,
    field: f64,
}

impl Hamiltonian for SpinPair {
    fn dof(&self) -> usize {
        2
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        let (z1, z2, dphi) = (x[0], x[1], x[2] - x[3]);
        let (r1, r2) = ((1.0 - z1 * z1).sqrt(), (1.0 - z2 * z2).sqrt());
        self.coupling_z * z1 * z2 + self.coupling * r1 * r2 * dphi.cos() + self.field * (z1 + z2)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (z1, z2, dphi) = (x[0], x[1], x[2] - x[3]);
        let (r1, r2) = ((1.0 - z1 * z1).sqrt(), (1.0 - z2 * z2).sqrt());
        let (d1, d2) = (-z1 / r1, -z2 / r2);
        let (cs, sn) = (dphi.cos(), dphi.sin());
        let j = self.coupling;
        DVector::from_column_slice(&[
            self.coupling_z * z2 + j * d1 * r2 * cs + self.field,
            self.coupling_z * z1 + j * r1 * d2 * cs + self.field,
            -j * r1 * r2 * sn,
            j * r1 * r2 * sn,
        ])
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (z1, z2, dphi) = (x[0], x[1], x[2] - x[3]);
        let (r1, r2) = ((1.0 - z1 * z1).sqrt(), (1.0 - z2 * z2).sqrt());
        let (d1, d2) = (-z1 / r1, -z2 / r2);
        let (dd1, dd2) = (-1.0 / (r1 * r1 * r1), -1.0 / (r2 * r2 * r2));
        let (cs, sn) = (dphi.cos(), dphi.sin());
        let j = self.coupling;
        let mut h = DMatrix::zeros(4, 4);
        h[(0, 0)] = j * dd1 * r2 * cs;
        h[(1, 1)] = j * r1 * dd2 * cs;
        h[(0, 1)] = self.coupling_z + j * d1 * d2 * cs;
        h[(0, 2)] = -j * d1 * r2 * sn;
        h[(0, 3)] = j * d1 * r2 * sn;
        h[(1, 2)] = -j * r1 * d2 * sn;
        h[(1, 3)] = j * r1 * d2 * sn;
        h[(2, 2)] = -j * r1 * r2 * cs;
        h[(3, 3)] = -j * r1 * r2 * cs;
        h[(2, 3)] = j * r1 * r2 * cs;
        for a in 0..4 {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }
}

const SEPARABLE_CONVENTION: &str = "H = |p|^2/(2m) + V(q)";

pub fn build_classical(spec: &SystemSpec) -> Result<ClassicalSystem> {
    let name = spec.kind.name().to_string();
    let separable = |h: Arc<dyn Hamiltonian>| ClassicalSystem::new(name.clone(), h, SEPARABLE_CONVENTION);
    let sys = match spec.kind {
        SystemKind::OscillatorNd => {
            let dof = spec.count("dof", 1, MAX_CLASSICAL_DOF)?;
            let mass = spec.positive("mass")?;
            let omega = spec.positive("omega")?;
            separable(Arc::new(Separable { dof, mass, potential: Harmonic { stiffness: mass * omega * omega } }))
        }
        SystemKind::Pendulum => {
            let dof = spec.count("dof", 1, MAX_CLASSICAL_DOF)?;
            separable(Arc::new(Separable {
                dof,
                mass: 1.0,
                potential: PendulumChain { coupling: spec.param("coupling")? },
            }))
        }
        SystemKind::DoubleWell => separable(Arc::new(Separable {
            dof: 1,
            mass: 1.0,
            potential: DoubleWell { depth: spec.positive("depth")? },
        })),
        SystemKind::HenonHeilesLike => separable(Arc::new(Separable {
            dof: 2,
            mass: 1.0,
            potential: HenonHeiles { lambda: spec.param("lambda")? },
        })),
        SystemKind::FreeParticle => {
            let dof = spec.count("dof", 1, MAX_CLASSICAL_DOF)?;
            separable(Arc::new(Separable { dof, mass: spec.positive("mass")?, potential: Flat }))
        }
        SystemKind::ClassicalSpinPair => {
            let coupling = spec.param("coupling")?;
            let coupling_z = spec.param("coupling_z")?;
            if coupling == 0.0 && coupling_z == 0.0 {
                return Err(Error::InvalidParameter("classical_spin_pair needs a non-zero exchange coupling".into()));
            }
            ClassicalSystem::new(
                name,
                Arc::new(SpinPair { coupling, coupling_z, field: spec.param("field")? }),
                "canonical pairs (cos theta_i, phi_i); XXZ exchange plus Zeeman field",
            )
        }
        other => return Err(Error::InvalidParameter(format!("{other:?} is not a classical system"))),
    };
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fs_segment_length, Sign};
    use crate::phase::{cross_validate, hamilton_flow};

    #[test]
    fn unit_x_field_is_exchange() {
        let h = build_quantum(&SystemSpec::new(SystemKind::QubitField)).unwrap();
        assert_eq!(h.matrix()[(0, 1)], c(1.0));
        let spec = h.spectrum().unwrap();
        let mut ev: Vec<f64> = spec.values.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn heisenberg_commutes_with_total_z() {
        let h = build_quantum(&SystemSpec::new(SystemKind::HeisenbergChain).with("field", 0.3)).unwrap();
        assert_eq!(h.dim(), 8);
        let sz = total_z(3);
        let comm = h.matrix() * &sz - &sz * h.matrix();
        assert!(comm.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dimension_cap_enforced() {
        assert!(build_quantum(&SystemSpec::new(SystemKind::HeisenbergChain).with("sites", 7.0)).is_err());
        assert!(build_quantum(&SystemSpec::new(SystemKind::RandomHermitian).with("dim", 65.0)).is_err());
        assert!(build_classical(&SystemSpec::new(SystemKind::OscillatorNd).with("dof", 7.0)).is_err());
    }

    #[test]
    fn unknown_parameter_rejected() {
        let err = build_classical(&SystemSpec::new(SystemKind::Pendulum).with("length", 2.0)).unwrap_err();
        assert!(err.to_string().contains("length"));
    }

    #[test]
    fn random_hermitian_is_deterministic() {
        let spec = SystemSpec::new(SystemKind::RandomHermitian).with("dim", 8.0).with_seed(42);
        assert_eq!(build_quantum(&spec).unwrap(), build_quantum(&spec).unwrap());
        let other = build_quantum(&spec.clone().with_seed(43)).unwrap();
        assert_ne!(build_quantum(&spec).unwrap(), other);
    }

    #[test]
    fn quantum_catalog_reconstructs_from_spectrum() {
        let specs = [
            SystemSpec::new(SystemKind::QubitField).with("hz", 0.4),
            SystemSpec::new(SystemKind::DrivenQubit),
            SystemSpec::new(SystemKind::HeisenbergChain).with("sites", 4.0),
            SystemSpec::new(SystemKind::RandomHermitian).with("dim", 16.0).with_seed(5),
        ];
        for spec in specs {
            let h = build_quantum(&spec).unwrap();
            let rec = h.spectrum().unwrap().reconstruct();
            assert!((rec - h.matrix()).iter().all(|z| z.norm() < 1e-10), "{spec:?}");
        }
    }

    #[test]
    fn oscillator_values() {
        let sys = build_classical(&SystemSpec::new(SystemKind::OscillatorNd)).unwrap();
        let x = PhasePoint::from_slice(&[1.0, 0.0]).unwrap();
        assert_eq!(sys.energy(&x), 0.5);
        assert_eq!(sys.gradient(&x).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn pendulum_hessian_at_rest() {
        let sys = build_classical(&SystemSpec::new(SystemKind::Pendulum)).unwrap();
        let h = sys.hessian(&PhasePoint::from_slice(&[0.0, 0.0]).unwrap());
        assert_eq!(h, DMatrix::identity(2, 2));
    }

    #[test]
    fn classical_catalog_cross_validates() {
        let specs = [
            SystemSpec::new(SystemKind::OscillatorNd).with("dof", 3.0).with("omega", 1.7).with("mass", 0.6),
            SystemSpec::new(SystemKind::Pendulum).with("dof", 3.0).with("coupling", 0.4),
            SystemSpec::new(SystemKind::DoubleWell),
            SystemSpec::new(SystemKind::HenonHeilesLike),
            SystemSpec::new(SystemKind::ClassicalSpinPair).with("coupling_z", 0.7),
            SystemSpec::new(SystemKind::FreeParticle).with("dof", 2.0),
        ];
        for spec in specs {
            let sys = build_classical(&spec).unwrap();
            let probes = spec.probe_points(100, 7).unwrap();
            let check = cross_validate(&sys, &probes).unwrap();
            assert!(check.gradient_error < 1e-6, "{spec:?} {check:?}");
            assert!(check.hessian_asymmetry < 1e-10, "{spec:?} {check:?}");
            assert!(check.hessian_error < 1e-5, "{spec:?} {check:?}");
        }
    }

    #[test]
    fn spin_pair_requires_coupling() {
        let spec = SystemSpec::new(SystemKind::ClassicalSpinPair).with("coupling", 0.0).with("coupling_z", 0.0);
        assert!(build_classical(&spec).is_err());
    }

    #[test]
    fn decoupled_spin_precesses_uniformly() {
        // transverse exchange off: each spin sees a static z field
        let spec = SystemSpec::new(SystemKind::ClassicalSpinPair)
            .with("coupling", 0.0)
            .with("coupling_z", 0.8)
            .with("field", 0.5);
        let sys = build_classical(&spec).unwrap();
        let x0 = PhasePoint::from_slice(&[0.3, -0.2, 0.1, 1.3]).unwrap();
        let traj = hamilton_flow(&x0, &sys, 4.0, 400, Sign::Forward).unwrap();
        let rate = -(0.8 * -0.2 + 0.5);
        for (t, x) in traj.times.iter().zip(&traj.points) {
            assert!((x.coords()[0] - 0.3).abs() < 1e-12);
            assert!((x.coords()[2] - (0.1 + rate * t)).abs() < 1e-10);
        }
    }

    #[test]
    fn spin_pair_conserves_total_z() {
        let spec = SystemSpec::new(SystemKind::ClassicalSpinPair);
        let sys = build_classical(&spec).unwrap();
        let x0 = spec.default_initial_point().unwrap();
        let traj = hamilton_flow(&x0, &sys, 10.0, 10_000, Sign::Forward).unwrap();
        let m0 = x0.coords()[0] + x0.coords()[1];
        for x in &traj.points {
            assert!((x.coords()[0] + x.coords()[1] - m0).abs() < 1e-8);
        }
    }

    #[test]
    fn driven_qubit_reduces_to_static_field_without_drive() {
        let spec = SystemSpec::new(SystemKind::DrivenQubit).with("amplitude", 0.0);
        let td = build_time_dependent(&spec).unwrap();
        let psi = random_state(2, 3).unwrap();
        let a = crate::hilbert::propagate_schrodinger_td(&psi, &td, 2.0, 2000).unwrap();
        let b = crate::hilbert::propagate_schrodinger(&psi, &td.at(0.0).unwrap(), 2.0, 1, Sign::Forward).unwrap();
        assert!(fs_segment_length(a.last(), b.last()).unwrap() < 1e-10);
    }
}
