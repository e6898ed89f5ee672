//! Small least-squares utilities used by the stationarity analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solves `min |A x - b|` through an SVD after scaling each column to unit norm.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
    }
    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let svd = scaled.svd(true, true);
    let x = svd.solve(b, 1e-12).map_err(|e| Error::InvalidParameter(format!("least squares failed: {e}")))?;
    Ok(DVector::from_iterator(x.len(), x.iter().zip(&scales).map(|(v, s)| v / s)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// Limit as the step goes to zero.
    pub value: f64,
    /// RMS misfit of the model over the samples.
    pub residual_rms: f64,
    pub points: usize,
}

/// Extrapolates a fourth-order stencil estimate `D(eps) = a + b eps^4 + c eps^6`
/// to `eps -> 0`. Fewer samples drop the higher terms.
pub fn extrapolate_stencil(eps: &[f64], values: &[f64]) -> Result<Extrapolation> {
    if eps.len() != values.len() || eps.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need matching non-empty samples, got {} steps and {} values",
            eps.len(),
            values.len()
        )));
    }
    let n = eps.len();
    let powers: &[i32] = match n {
        1 => &[0],
        2 => &[0, 4],
        _ => &[0, 4, 6],
    };
    let a = DMatrix::from_fn(n, powers.len(), |i, j| eps[i].powi(powers[j]));
    let b = DVector::from_column_slice(values);
    let x = least_squares(&a, &b)?;
    let r = &a * &x - &b;
    Ok(Extrapolation { value: x[0], residual_rms: (r.norm_squared() / n as f64).sqrt(), points: n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    /// `p` in `|D| ~ C n^-p`.
    pub order: f64,
    pub log_prefactor: f64,
    /// Grid levels that were above the floor and entered the fit.
    pub levels: usize,
}

/// Fits `ln|D| = ln C - p ln n` over the levels whose magnitude exceeds `floor`.
/// Returns `None` when fewer than two levels survive.
pub fn fit_order(grids: &[usize], values: &[f64], floor: f64) -> Option<OrderFit> {
    let pts: Vec<(f64, f64)> = grids
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite() && v.abs() > floor)
        .map(|(n, v)| ((*n as f64).ln(), v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(OrderFit { order: -slope, log_prefactor: my - slope * mx, levels: pts.len() })
}

/// Composite trapezoid rule on a possibly non-uniform grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stencil_extrapolation_recovers_limit() {
        let eps: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let vals: Vec<f64> = eps.iter().map(|e| 0.7 + 3.0 * e.powi(4) - 50.0 * e.powi(6)).collect();
        let ex = extrapolate_stencil(&eps, &vals).unwrap();
        assert!((ex.value - 0.7).abs() < 1e-14);
        assert!(ex.residual_rms < 1e-15);
    }

    #[test]
    fn order_fit_ignores_floor_levels() {
        let grids = [250, 500, 1000, 2000];
        let vals = [4.0 / 250f64.powi(2), 4.0 / 500f64.powi(2), 1e-15, 1e-16];
        let fit = fit_order(&grids, &vals, 1e-10).unwrap();
        assert_eq!(fit.levels, 2);
        assert!((fit.order - 2.0).abs() < 1e-12);
        assert!(fit_order(&grids, &[1e-15; 4], 1e-10).is_none());
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let x = [0.0, 0.3, 1.0, 2.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((trapezoid(&x, &y) - (2.5f64 * 2.5 + 2.5)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn order_fit_exact_on_power_laws(p in 0.5f64..4.0, c in 0.1f64..100.0) {
            let grids = [250, 500, 1000, 2000];
            let vals: Vec<f64> = grids.iter().map(|n| c * (*n as f64).powf(-p)).collect();
            let fit = fit_order(&grids, &vals, 0.0).unwrap();
            prop_assert!((fit.order - p).abs() < 1e-9);
        }

        #[test]
        fn least_squares_solves_square_systems(v in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 3.0, 0.2, 0.0, 0.2, 1e-4]);
            let x = DVector::from_column_slice(&v);
            let sol = least_squares(&a, &(&a * &x)).unwrap();
            prop_assert!((sol - x).norm() < 1e-8);
        }
    }
}
