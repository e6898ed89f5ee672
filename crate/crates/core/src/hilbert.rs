//! Quantum states, Hermitian operators and the Fubini-Study geometry of rays.
//!
//! Units are dimensionless with ħ = 1. States are always kept normalized; the
//! projective (ray) quantities below are invariant under a global phase.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Maximum tolerated deviation of `<psi|psi>` from one.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Maximum entrywise `|A - A^H|` accepted for a Hermitian operator.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
/// Energy uncertainties at or below this are treated as a vanishing speed.
pub const DEGENERACY_FLOOR: f64 = 1e-12;
/// Negative variances down to `-VARIANCE_CLAMP` are round-off and clamp to 0.
pub const VARIANCE_CLAMP: f64 = 1e-14;

/// A normalized state vector of dimension at least two.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<C64>,
}

impl QuantumState {
    /// Normalizes `amplitudes` into a state.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState(format!("dimension {} < 2", amplitudes.len())));
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::InvalidState(format!("norm {norm}")));
        }
        Ok(Self { amplitudes: amplitudes.unscale(norm) })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amplitudes))
    }

    /// Computational basis state `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidState(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    /// Haar-random state from independent complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        Self::new(random_complex_vector(dim, rng))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Same ray, multiplied by `exp(i phase)`.
    pub fn with_phase(&self, phase: f64) -> Self {
        Self { amplitudes: self.amplitudes.map(|a| a * C64::from_polar(1.0, phase)) }
    }

    pub fn norm_deviation(&self) -> f64 {
        (self.amplitudes.norm() - 1.0).abs()
    }
}

pub(crate) fn random_complex_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<C64> {
    DVector::from_fn(dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Dense Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let deviation = hermitian_deviation(&matrix);
        if !(deviation < HERMITIAN_TOLERANCE) {
            return Err(Error::NotHermitian(deviation));
        }
        Ok(Self { matrix })
    }

    /// Real symmetric input promoted to a complex Hermitian operator.
    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|x| C64::new(x, 0.0)))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let v = DVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)));
        Self::new(DMatrix::from_diagonal(&v))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `H |psi>` as a raw vector.
    pub fn apply(&self, psi: &QuantumState) -> Result<DVector<C64>> {
        check_dim(self.dim(), psi.dim())?;
        Ok(&self.matrix * psi.amplitudes())
    }

    /// `(<H>, <H^2>)` in the state `psi`.
    pub fn moments(&self, psi: &QuantumState) -> Result<(f64, f64)> {
        let h_psi = self.apply(psi)?;
        let mean = psi.amplitudes().dotc(&h_psi).re;
        Ok((mean, h_psi.norm_squared()))
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let eig = self.matrix.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|x| !x.is_finite())
            || eig.eigenvectors.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Eigendecomposition("non-finite eigenpairs".into()));
        }
        Ok(Spectrum { values: eig.eigenvalues, vectors: eig.eigenvectors })
    }

    /// Largest absolute eigenvalue bound (Frobenius norm), used to size steps.
    pub fn norm_bound(&self) -> f64 {
        self.matrix.norm()
    }
}

pub fn hermitian_deviation(matrix: &DMatrix<C64>) -> f64 {
    let adjoint = matrix.adjoint();
    matrix.iter().zip(adjoint.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Eigendecomposition `H = V diag(values) V^H`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    /// Amplitudes of `psi` in the eigenbasis.
    pub fn coefficients(&self, psi: &QuantumState) -> Result<DVector<C64>> {
        check_dim(self.values.len(), psi.dim())?;
        Ok(self.vectors.ad_mul(psi.amplitudes()))
    }

    /// Applies `exp(-i sign H t)` to a state given its eigenbasis coefficients.
    pub fn evolve_coefficients(&self, coefficients: &DVector<C64>, t: f64, sign: Sign) -> QuantumState {
        let s = sign.value();
        let phased = DVector::from_iterator(
            coefficients.len(),
            coefficients.iter().zip(self.values.iter()).map(|(c, &e)| c * C64::from_polar(1.0, -s * e * t)),
        );
        QuantumState { amplitudes: renormalized(&self.vectors * phased) }
    }

    pub fn reconstruct(&self) -> DMatrix<C64> {
        let diag = DMatrix::from_diagonal(&self.values.map(|x| C64::new(x, 0.0)));
        &self.vectors * diag * self.vectors.adjoint()
    }
}

fn renormalized(v: DVector<C64>) -> DVector<C64> {
    let n = v.norm();
    v.unscale(n)
}

/// Branch of a flow: `Forward` is the conventional `d/dt psi = -i H psi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Forward,
    Reversed,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Forward => 1.0,
            Sign::Reversed => -1.0,
        }
    }

    pub fn from_value(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Sign::Forward),
            -1 => Ok(Sign::Reversed),
            other => Err(Error::InvalidParameter(format!("sign must be +1 or -1, got {other}"))),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Forward => Sign::Reversed,
            Sign::Reversed => Sign::Forward,
        }
    }
}

type OperatorFn = dyn Fn(f64) -> DMatrix<C64> + Send + Sync;

/// `t -> H(t)`, with a declared upper bound on the fastest frequency so that
/// integrators can flag under-resolved step sizes.
#[derive(Clone)]
pub struct TimeDependentHamiltonian {
    dim: usize,
    max_frequency: f64,
    evaluator: Arc<OperatorFn>,
}

impl fmt::Debug for TimeDependentHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeDependentHamiltonian")
            .field("dim", &self.dim)
            .field("max_frequency", &self.max_frequency)
            .finish_non_exhaustive()
    }
}

impl TimeDependentHamiltonian {
    pub fn new<F>(dim: usize, max_frequency: f64, evaluator: F) -> Self
    where
        F: Fn(f64) -> DMatrix<C64> + Send + Sync + 'static,
    {
        Self { dim, max_frequency, evaluator: Arc::new(evaluator) }
    }

    pub fn constant(h: HermitianOperator) -> Self {
        let max_frequency = h.norm_bound();
        let dim = h.dim();
        Self::new(dim, max_frequency, move |_| h.matrix().clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_frequency(&self) -> f64 {
        self.max_frequency
    }

    pub fn at(&self, t: f64) -> Result<HermitianOperator> {
        let m = (self.evaluator)(t);
        check_dim(self.dim, m.nrows())?;
        HermitianOperator::new(m)
    }
}

/// States sampled on a strictly increasing time grid.
#[derive(Clone, Debug)]
pub struct QuantumTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    /// Largest `| |psi| - 1 |` observed before per-step renormalization.
    pub max_norm_drift: f64,
    /// Sum of the per-step pre-renormalization drifts.
    pub total_norm_drift: f64,
    pub warnings: Vec<String>,
}

impl QuantumTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &QuantumState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// `(<H^2> - <H>^2)^{1/2}`.
pub fn energy_uncertainty(psi: &QuantumState, h: &HermitianOperator) -> Result<f64> {
    let (mean, second) = h.moments(psi)?;
    clamped_sqrt(second - mean * mean)
}

fn clamped_sqrt(variance: f64) -> Result<f64> {
    if variance >= 0.0 {
        Ok(variance.sqrt())
    } else if variance >= -VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(variance))
    }
}

/// Fubini-Study distance between the rays of two states,
/// `arccos |<psi1|psi2>|`.
///
/// Evaluated as `atan2(|psi2 - <psi1|psi2> psi1|, |<psi1|psi2>|)`, which is
/// the same angle but stays well conditioned for nearby rays.
pub fn fs_segment_length(psi1: &QuantumState, psi2: &QuantumState) -> Result<f64> {
    let overlap = psi1.inner(psi2)?;
    let a = psi1.amplitudes();
    let b = psi2.amplitudes();
    let perp = b.iter().zip(a.iter()).map(|(bi, ai)| (bi - overlap * ai).norm_sqr()).sum::<f64>().sqrt();
    Ok(perp.atan2(overlap.norm()))
}

/// `(<psidot|psidot> - |<psi|psidot>|^2)^{1/2}`: speed of the ray.
pub fn fs_velocity_norm(psi: &QuantumState, psidot: &DVector<C64>) -> Result<f64> {
    check_dim(psi.dim(), psidot.len())?;
    let parallel = psi.amplitudes().dotc(psidot);
    clamped_sqrt(psidot.norm_squared() - parallel.norm_sqr())
}

/// Velocity of the linear flow, `-i sign H psi`.
pub fn schrodinger_velocity(psi: &QuantumState, h: &HermitianOperator, sign: Sign) -> Result<DVector<C64>> {
    let factor = C64::new(0.0, -sign.value());
    Ok(h.apply(psi)?.map(|z| z * factor))
}

/// Velocity of the norm-preserving nonlinear flow
/// `d/dt psi = +-i H psi -+ 2i <H> psi`; `Forward` takes the upper signs.
pub fn nonlinear_velocity(psi: &QuantumState, h: &HermitianOperator, sign: Sign) -> Result<DVector<C64>> {
    nonlinear_rhs(psi.amplitudes(), h, sign)
}

fn nonlinear_rhs(v: &DVector<C64>, h: &HermitianOperator, sign: Sign) -> Result<DVector<C64>> {
    check_dim(h.dim(), v.len())?;
    let hv = h.matrix() * v;
    let mean = v.dotc(&hv).re;
    let factor = C64::new(0.0, sign.value());
    Ok((hv - v.scale(2.0 * mean)).map(|z| z * factor))
}

/// Pointwise residual of the stationarity condition obtained by projecting the
/// Euler-Lagrange equation of the quantum time functional onto `psi`:
/// `<psidot|psi>^2 + [(<psidot|psidot> - |<psi|psidot>|^2) / dE^2] <H>^2`.
pub fn stationarity_residual(psi: &QuantumState, psidot: &DVector<C64>, h: &HermitianOperator) -> Result<C64> {
    check_dim(psi.dim(), psidot.len())?;
    let (mean, second) = h.moments(psi)?;
    let variance = second - mean * mean;
    let speed = clamped_sqrt(variance)?;
    if speed <= DEGENERACY_FLOOR {
        return Err(Error::DegenerateSpeed { speed, floor: DEGENERACY_FLOOR, node: None });
    }
    let overlap = psidot.dotc(psi.amplitudes());
    let numerator = psidot.norm_squared() - overlap.norm_sqr();
    Ok(overlap * overlap + C64::new(numerator / variance * mean * mean, 0.0))
}

/// Residual of the time-dependent condition with the extended metric,
/// `<psidot|psidot> - <psidot|psi>^2 - |<psidot|psi>|^2 - <H(t)^2>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeDependentResidual {
    pub value: f64,
    /// Imaginary part of the complex expression; zero for admissible flows.
    pub imaginary: f64,
}

pub fn time_dependent_residual(
    psi: &QuantumState,
    psidot: &DVector<C64>,
    h_t: &HermitianOperator,
) -> Result<TimeDependentResidual> {
    check_dim(psi.dim(), psidot.len())?;
    let (_, second) = h_t.moments(psi)?;
    let overlap = psidot.dotc(psi.amplitudes());
    let r = C64::new(psidot.norm_squared(), 0.0) - overlap * overlap - C64::new(overlap.norm_sqr() + second, 0.0);
    Ok(TimeDependentResidual { value: r.re, imaginary: r.im })
}

fn time_grid(t_final: f64, n_steps: usize) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("t_final must be positive, got {t_final}")));
    }
    Ok((0..=n_steps).map(|k| t_final * k as f64 / n_steps as f64).collect())
}

/// Exact propagation through the eigendecomposition of `h`.
pub fn propagate_schrodinger(
    psi0: &QuantumState,
    h: &HermitianOperator,
    t_final: f64,
    n_steps: usize,
    sign: Sign,
) -> Result<QuantumTrajectory> {
    let times = time_grid(t_final, n_steps)?;
    let spectrum = h.spectrum()?;
    let coefficients = spectrum.coefficients(psi0)?;
    let states: Vec<QuantumState> =
        times.iter().map(|&t| spectrum.evolve_coefficients(&coefficients, t, sign)).collect();
    let max_norm_drift = states.iter().map(|s| s.norm_deviation()).fold(0.0, f64::max);
    Ok(QuantumTrajectory { times, states, max_norm_drift, total_norm_drift: max_norm_drift, warnings: Vec::new() })
}

/// Ratio `dt * max_frequency` above which a step is flagged as under-resolved.
pub const RESOLUTION_LIMIT: f64 = 0.5;

fn rk4_renormalized<F>(
    psi0: &QuantumState,
    t_final: f64,
    n_steps: usize,
    max_frequency: f64,
    mut rhs: F,
) -> Result<QuantumTrajectory>
where
    F: FnMut(f64, &DVector<C64>) -> Result<DVector<C64>>,
{
    let times = time_grid(t_final, n_steps)?;
    let dt = t_final / n_steps as f64;
    let mut warnings = Vec::new();
    if dt * max_frequency > RESOLUTION_LIMIT {
        warnings.push(format!(
            "step {dt:e} does not resolve declared frequency {max_frequency:e} (dt*w = {:.3} > {RESOLUTION_LIMIT})",
            dt * max_frequency
        ));
    }
    let mut states = Vec::with_capacity(times.len());
    states.push(psi0.clone());
    let mut y = psi0.amplitudes().clone();
    let mut max_drift: f64 = 0.0;
    let mut total_drift = 0.0;
    for k in 0..n_steps {
        let t = times[k];
        let k1 = rhs(t, &y)?;
        let k2 = rhs(t + 0.5 * dt, &(&y + k1.scale(0.5 * dt)))?;
        let k3 = rhs(t + 0.5 * dt, &(&y + k2.scale(0.5 * dt)))?;
        let k4 = rhs(t + dt, &(&y + k3.scale(dt)))?;
        y += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
        let norm = y.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite { t: times[k + 1] });
        }
        let drift = (norm - 1.0).abs();
        max_drift = max_drift.max(drift);
        total_drift += drift;
        y.unscale_mut(norm);
        states.push(QuantumState { amplitudes: y.clone() });
    }
    Ok(QuantumTrajectory { times, states, max_norm_drift: max_drift, total_norm_drift: total_drift, warnings })
}

/// Fourth-order Runge-Kutta for `d/dt psi = -i H(t) psi` with per-step
/// renormalization.
pub fn propagate_schrodinger_td(
    psi0: &QuantumState,
    h: &TimeDependentHamiltonian,
    t_final: f64,
    n_steps: usize,
) -> Result<QuantumTrajectory> {
    check_dim(h.dim(), psi0.dim())?;
    let minus_i = C64::new(0.0, -1.0);
    rk4_renormalized(psi0, t_final, n_steps, h.max_frequency(), |t, y| {
        let m = h.at(t)?;
        Ok((m.matrix() * y).map(|z| z * minus_i))
    })
}

/// Fourth-order Runge-Kutta for the nonlinear flow of [`nonlinear_velocity`].
pub fn propagate_nonlinear(
    psi0: &QuantumState,
    h: &HermitianOperator,
    t_final: f64,
    n_steps: usize,
    sign: Sign,
) -> Result<QuantumTrajectory> {
    check_dim(h.dim(), psi0.dim())?;
    // The generator H - 2<H> has spectral radius at most 3 |H|.
    let max_frequency = 3.0 * h.norm_bound();
    rk4_renormalized(psi0, t_final, n_steps, max_frequency, |_, y| nonlinear_rhs(y, h, sign))
}

/// Fubini-Study length of a trajectory next to the time integral of its
/// energy uncertainty (trapezoid rule on the trajectory grid).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct AaLength {
    pub fs_length: f64,
    pub uncertainty_integral: f64,
}

impl AaLength {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.fs_length.abs().max(self.uncertainty_integral.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.fs_length - self.uncertainty_integral).abs() / scale
        }
    }
}

pub fn aa_length_check(traj: &QuantumTrajectory, h: &HermitianOperator) -> Result<AaLength> {
    let mut fs_length = 0.0;
    for pair in traj.states.windows(2) {
        fs_length += fs_segment_length(&pair[0], &pair[1])?;
    }
    let speeds = traj.states.iter().map(|s| energy_uncertainty(s, h)).collect::<Result<Vec<_>>>()?;
    let uncertainty_integral =
        traj.times.windows(2).zip(speeds.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    Ok(AaLength { fs_length, uncertainty_integral })
}
