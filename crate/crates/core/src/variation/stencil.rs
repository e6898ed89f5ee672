use serde::{Deserialize, Serialize};

use super::{perturb, Perturbable, PerturbationField};
use crate::error::{Error, Result};
use crate::functionals::Functional;

/// Functional values around a path and the derivative estimates built from them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilEstimate {
    pub epsilon: f64,
    /// `T(-2e), T(-e), T(e), T(2e)`.
    pub samples: [f64; 4],
    /// `(T(e) - T(-e)) / 2e`.
    pub central: f64,
    /// `(-T(2e) + 8T(e) - 8T(-e) + T(-2e)) / 12e`.
    pub four_point: f64,
}

/// Estimates `dT/de` at `e = 0` along `field` with both stencils.
pub fn first_variation<P, F>(functional: &F, path: &P, field: &PerturbationField, eps: f64) -> Result<StencilEstimate>
where
    P: Perturbable,
    F: Functional<P> + ?Sized,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("stencil step must be positive, got {eps}")));
    }
    let mut samples = [0.0; 4];
    for (slot, step) in samples.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
        *slot = functional.evaluate(&perturb(path, field, step * eps)?)?.value;
    }
    let [m2, m1, p1, p2] = samples;
    Ok(StencilEstimate {
        epsilon: eps,
        samples,
        central: (p1 - m1) / (2.0 * eps),
        four_point: (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps),
    })
}
