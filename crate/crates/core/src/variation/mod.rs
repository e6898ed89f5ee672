//! Endpoint-fixed perturbation families, first-variation estimates and
//! stationarity verdicts.

mod multiplier;
mod sources;
mod stationarity;
mod stencil;

pub use multiplier::{
    isoperimetric_refinement, isoperimetric_time_test, lambda_consistency, MultiplierForm, MultiplierTrace,
    EXCLUSION_THRESHOLD, MULTIPLIER_FLOOR,
};
pub use sources::{
    fs_geodesic_state, ConfigChordSource, ConfigDistortedSource, ConfigFlowSource, DenseFlow, FlowSource,
    GeodesicSource, PathSource, SchrodingerSource, ShellChordSource, ShellDistortedSource, SmoothRandomSource,
    DENSE_STEPS,
};
pub use stationarity::{
    analyze_path, stationarity_test, BaseValue, BaselineRecord, Cell, DirectionRecord, DirectionStatus, GridLevel,
    PathReport, RatioRecord, StationarityReport, Thresholds, Verdict,
};
pub use stencil::{first_variation, StencilEstimate};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::functionals::{ClassicalPath, ConfigPath, QuantumPath};
use crate::hilbert::{QuantumState, C64};
use crate::phase::{project_to_equipotential, project_to_shell, ClassicalSystem, PhasePoint};

/// Default step sweep for the four-point stencil.
pub const DEFAULT_EPSILONS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
/// Default grid ladder, in segments.
pub const DEFAULT_GRIDS: [usize; 4] = [250, 500, 1000, 2000];

/// How perturbed nodes are returned to the admissible set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintPolicy {
    Renormalize,
    ProjectToShell,
    ProjectToEquipotential,
    None,
}

/// A constraint policy together with the data it needs.
#[derive(Clone, Debug)]
pub enum Constraint {
    Renormalize,
    Shell { system: ClassicalSystem, energy: f64 },
    Equipotential { system: ClassicalSystem, level: f64 },
    None,
}

impl Constraint {
    pub fn policy(&self) -> ConstraintPolicy {
        match self {
            Constraint::Renormalize => ConstraintPolicy::Renormalize,
            Constraint::Shell { .. } => ConstraintPolicy::ProjectToShell,
            Constraint::Equipotential { .. } => ConstraintPolicy::ProjectToEquipotential,
            Constraint::None => ConstraintPolicy::None,
        }
    }
}

/// Identity of one perturbation direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionSpec {
    pub index: usize,
    pub mode: u32,
    pub seed: u64,
}

impl DirectionSpec {
    /// `count` directions cycling through `modes`, seeded `seed, seed + 1, ...`.
    pub fn family(count: usize, modes: &[u32], seed: u64) -> Result<Vec<Self>> {
        if modes.is_empty() || modes.contains(&0) {
            return Err(Error::InvalidParameter("modes must be a non-empty list of positive integers".into()));
        }
        Ok((0..count)
            .map(|index| Self { index, mode: modes[index % modes.len()], seed: seed.wrapping_add(index as u64) })
            .collect())
    }
}

/// Node-independent direction vector.
#[derive(Clone, Debug, PartialEq)]
pub enum Direction {
    Complex(DVector<C64>),
    Real(DVector<f64>),
}

impl Direction {
    /// Unit-norm Gaussian direction in `C^dim`.
    pub fn random_complex(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v =
            DVector::from_fn(dim, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
        Direction::Complex(v.unscale(v.norm()))
    }

    /// Unit-norm Gaussian direction in `R^dim`.
    pub fn random_real(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        Direction::Real(v.unscale(v.norm()))
    }
}

/// `delta x_k = sin(m pi tau_k) v`, followed by the constraint.
#[derive(Clone, Debug)]
pub struct PerturbationField {
    pub spec: DirectionSpec,
    pub direction: Direction,
    pub constraint: Constraint,
}

impl PerturbationField {
    pub fn new(spec: DirectionSpec, direction: Direction, constraint: Constraint) -> Self {
        Self { spec, direction, constraint }
    }

    /// Envelope at node `k` of `n` segments; exactly zero at both endpoints.
    pub fn shape(&self, k: usize, n: usize) -> f64 {
        if k == 0 || k == n {
            0.0
        } else {
            (self.spec.mode as f64 * PI * k as f64 / n as f64).sin()
        }
    }

    fn real(&self, dim: usize) -> Result<&DVector<f64>> {
        match &self.direction {
            Direction::Real(v) if v.len() == dim => Ok(v),
            Direction::Real(v) => Err(Error::DimensionMismatch { expected: dim, found: v.len() }),
            Direction::Complex(_) => Err(Error::InvalidParameter("complex direction on a real path".into())),
        }
    }
}

/// Paths that can be deformed by a perturbation field.
pub trait Perturbable: Clone + Send + Sync + Sized {
    /// Random direction of the right shape for this path.
    fn random_direction(&self, seed: u64) -> Direction;
    fn perturb(&self, field: &PerturbationField, eps: f64) -> Result<Self>;
}

/// Applies `field` with amplitude `eps`; endpoints are left bit-identical.
pub fn perturb<P: Perturbable>(path: &P, field: &PerturbationField, eps: f64) -> Result<P> {
    path.perturb(field, eps)
}

impl Perturbable for QuantumPath {
    fn random_direction(&self, seed: u64) -> Direction {
        Direction::random_complex(self.dim(), seed)
    }

    fn perturb(&self, field: &PerturbationField, eps: f64) -> Result<Self> {
        if eps == 0.0 {
            return Ok(self.clone());
        }
        if !matches!(field.constraint, Constraint::Renormalize) {
            return Err(Error::InvalidParameter(format!(
                "quantum paths need the renormalize policy, got {:?}",
                field.constraint.policy()
            )));
        }
        let v = match &field.direction {
            Direction::Complex(v) if v.len() == self.dim() => v,
            Direction::Complex(v) => return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() }),
            Direction::Real(_) => return Err(Error::InvalidParameter("real direction on a quantum path".into())),
        };
        let n = self.segments();
        let states = self
            .states()
            .iter()
            .enumerate()
            .map(|(k, psi)| {
                let s = field.shape(k, n);
                if s == 0.0 {
                    Ok(psi.clone())
                } else {
                    QuantumState::new(psi.amplitudes() + v.map(|z| z * (eps * s)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        QuantumPath::new(states)
    }
}

impl Perturbable for ClassicalPath {
    fn random_direction(&self, seed: u64) -> Direction {
        Direction::random_real(self.points()[0].coords().len(), seed)
    }

    fn perturb(&self, field: &PerturbationField, eps: f64) -> Result<Self> {
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let v = field.real(self.points()[0].coords().len())?;
        let n = self.segments();
        let moved = |k: usize, x: &PhasePoint| -> Result<Option<PhasePoint>> {
            let s = field.shape(k, n);
            if s == 0.0 {
                return Ok(None);
            }
            Ok(Some(PhasePoint::new(x.coords() + v.scale(eps * s))?))
        };
        match &field.constraint {
            Constraint::Shell { system, energy } => {
                let points = self
                    .points()
                    .iter()
                    .enumerate()
                    .map(|(k, x)| match moved(k, x)? {
                        None => Ok(x.clone()),
                        Some(y) => project_to_shell(&y, system, *energy).map_err(|e| at_node(e, k)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ClassicalPath::on_shell(points, system, *energy)
            }
            Constraint::None => {
                let points = self
                    .points()
                    .iter()
                    .enumerate()
                    .map(|(k, x)| Ok(moved(k, x)?.unwrap_or_else(|| x.clone())))
                    .collect::<Result<Vec<_>>>()?;
                ClassicalPath::new(points)
            }
            other => Err(Error::InvalidParameter(format!(
                "phase-space paths accept project_to_shell or none, got {:?}",
                other.policy()
            ))),
        }
    }
}

impl Perturbable for ConfigPath {
    fn random_direction(&self, seed: u64) -> Direction {
        Direction::random_real(self.dim(), seed)
    }

    fn perturb(&self, field: &PerturbationField, eps: f64) -> Result<Self> {
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let v = field.real(self.dim())?;
        let n = self.segments();
        let positions = self
            .positions()
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let s = field.shape(k, n);
                if s == 0.0 {
                    return Ok(q.clone());
                }
                let y = q + v.scale(eps * s);
                match &field.constraint {
                    Constraint::None => Ok(y),
                    Constraint::Equipotential { system, level } => {
                        project_to_equipotential(&y, system, *level).map_err(|e| at_node(e, k))
                    }
                    other => Err(Error::InvalidParameter(format!(
                        "configuration paths accept project_to_equipotential or none, got {:?}",
                        other.policy()
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ConfigPath::new(positions)
    }
}

fn at_node(err: Error, k: usize) -> Error {
    match err {
        Error::DegenerateSpeed { speed, floor, .. } => Error::DegenerateSpeed { speed, floor, node: Some(k) },
        other => other,
    }
}
