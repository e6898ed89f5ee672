//! Per-coordinate Lagrange-multiplier solves along sampled trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{ClassicalSystem, ClassicalTrajectory, SPEED_FLOOR};

/// Coordinates with `|component| < EXCLUSION_THRESHOLD * |vector|` are left out
/// of the per-coordinate solve.
pub const EXCLUSION_THRESHOLD: f64 = 1e-8;
/// Fraction of the natural multiplier scale below which the mean multiplier
/// is treated as zero when normalizing the node spread.
pub const MULTIPLIER_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierForm {
    /// `lambda(tau)` solved independently at every node.
    Pointwise,
    /// One constant multiplier for the whole path.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierTrace {
    pub form: MultiplierForm,
    pub times: Vec<f64>,
    /// `lambdas[k][i]`; `None` where coordinate `i` was excluded at node `k`.
    pub lambdas: Vec<Vec<Option<f64>>>,
    pub excluded: usize,
    /// Pointwise form: normalized spread at each node. Constant form: empty.
    pub node_spreads: Vec<f64>,
    pub spread: f64,
    /// Node where the pointwise spread peaks.
    pub worst_node: Option<usize>,
    /// `max |H - E|` along the trajectory, when an energy was supplied.
    pub shell_deviation: Option<f64>,
}

impl MultiplierTrace {
    fn included(&self) -> impl Iterator<Item = f64> + '_ {
        self.lambdas.iter().flatten().flatten().copied()
    }

    /// Mean of `|lambda|` over included entries.
    pub fn mean_magnitude(&self) -> f64 {
        let (sum, count) = self.included().fold((0.0, 0usize), |(s, c), l| (s + l.abs(), c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

fn check_trajectory(traj: &ClassicalTrajectory, sys: &ClassicalSystem) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::InvalidPath("empty trajectory".into()));
    }
    if traj.velocities.len() != traj.len() || traj.accelerations.len() != traj.len() {
        return Err(Error::InvalidPath("trajectory lacks analytic velocities or accelerations".into()));
    }
    let dim = traj.points[0].coords().len();
    if dim != sys.phase_dim() {
        return Err(Error::DimensionMismatch { expected: sys.phase_dim(), found: dim });
    }
    Ok(())
}

struct NodeGeometry {
    g: DVector<f64>,
    g_norm: f64,
    f: f64,
    grad_f: DVector<f64>,
    xdot: DVector<f64>,
    xddot: DVector<f64>,
    speed: f64,
}

fn node_geometry(traj: &ClassicalTrajectory, sys: &ClassicalSystem, k: usize) -> Result<NodeGeometry> {
    let x = &traj.points[k];
    let g = sys.gradient(x);
    let g_norm = g.norm();
    let xdot = traj.velocities[k].clone();
    let speed = xdot.norm();
    for s in [g_norm, speed] {
        if s.is_nan() || s <= SPEED_FLOOR {
            return Err(Error::DegenerateSpeed { speed: s, floor: SPEED_FLOOR, node: Some(k) });
        }
    }
    let grad_f = -(sys.hessian(x) * &g) / g_norm.powi(3);
    Ok(NodeGeometry { f: 1.0 / g_norm, g, g_norm, grad_f, xdot, xddot: traj.accelerations[k].clone(), speed })
}

/// Solves the constrained Euler-Lagrange equation for `F G` with the shell
/// constraint `H = E` one coordinate at a time:
///
/// `lambda_i = { [G^2 (xdd_i F + xd_i (grad F . xd)) - xd_i F (xd . xdd)] / G^2 - G^2 dF/dx_i } / (G dH/dx_i)`
///
/// with `G = |xd|`, `F = 1 / |grad H|`. A genuine constrained extremal gives
/// the same `lambda` from every coordinate. The node spread is the relative
/// deviation `(max - min) / |mean|`; when the mean multiplier is below
/// `MULTIPLIER_FLOOR` times its natural scale
/// `max_i (|accel term_i| + G^2 |dF/dx_i|) / (G |grad H|)` that floor is used
/// instead, so flows with `lambda = 0` are not divided by round-off.
pub fn lambda_consistency(
    traj: &ClassicalTrajectory,
    sys: &ClassicalSystem,
    energy: Option<f64>,
) -> Result<MultiplierTrace> {
    check_trajectory(traj, sys)?;
    let mut lambdas = Vec::with_capacity(traj.len());
    let mut node_spreads = Vec::with_capacity(traj.len());
    let mut excluded = 0;
    for k in 0..traj.len() {
        let geo = node_geometry(traj, sys, k)?;
        let g2 = geo.speed * geo.speed;
        let fx = geo.grad_f.dot(&geo.xdot);
        let xa = geo.xdot.dot(&geo.xddot);
        let mut row = Vec::with_capacity(geo.g.len());
        let mut scale: f64 = 0.0;
        for i in 0..geo.g.len() {
            if geo.g[i].abs() < EXCLUSION_THRESHOLD * geo.g_norm {
                row.push(None);
                excluded += 1;
                continue;
            }
            let accel = (g2 * (geo.xddot[i] * geo.f + geo.xdot[i] * fx) - geo.xdot[i] * geo.f * xa) / g2;
            let grad = g2 * geo.grad_f[i];
            row.push(Some((accel - grad) / (geo.speed * geo.g[i])));
            scale = scale.max((accel.abs() + grad.abs()) / (geo.speed * geo.g_norm));
        }
        let vals: Vec<f64> = row.iter().flatten().copied().collect();
        if vals.is_empty() {
            return Err(Error::DegenerateGeometry { node: k });
        }
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let denom = mean.abs().max(MULTIPLIER_FLOOR * scale);
        node_spreads.push(if denom > 0.0 { (hi - lo) / denom } else { 0.0 });
        lambdas.push(row);
    }
    let (worst_node, spread) = node_spreads.iter().copied().enumerate().fold((None, 0.0), |(w, s), (k, v)| {
        if v > s || w.is_none() {
            (Some(k), v.max(s))
        } else {
            (w, s)
        }
    });
    Ok(MultiplierTrace {
        form: MultiplierForm::Pointwise,
        times: traj.times.clone(),
        lambdas,
        excluded,
        node_spreads,
        spread,
        worst_node,
        shell_deviation: energy.map(|e| traj.points.iter().map(|x| (sys.energy(x) - e).abs()).fold(0.0, f64::max)),
    })
}

fn isoperimetric_lambdas(traj: &ClassicalTrajectory, sys: &ClassicalSystem) -> Result<(Vec<Vec<Option<f64>>>, usize)> {
    check_trajectory(traj, sys)?;
    let mut excluded = 0;
    let rows = (0..traj.len())
        .map(|k| {
            let geo = node_geometry(traj, sys, k)?;
            let g = geo.speed;
            let xa = geo.xdot.dot(&geo.xddot);
            let a = geo.xddot.unscale(g) - geo.xdot.scale(xa / g.powi(3));
            let b = geo.xdot.scale(geo.grad_f.dot(&geo.xdot) / g) + a.scale(geo.f) - geo.grad_f.scale(g);
            let b_norm = b.norm();
            let row: Vec<Option<f64>> = (0..b.len())
                .map(|i| {
                    if b[i].abs() < EXCLUSION_THRESHOLD * b_norm || b_norm <= SPEED_FLOOR {
                        excluded += 1;
                        None
                    } else {
                        Some(-a[i] / b[i])
                    }
                })
                .collect();
            if row.iter().all(|l| l.is_none()) {
                return Err(Error::DegenerateGeometry { node: k });
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, excluded))
}

fn constant_spread(lambdas: &[Vec<Option<f64>>], normalizer: f64) -> f64 {
    let (lo, hi) = lambdas.iter().flatten().flatten().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    if normalizer > 0.0 && hi >= lo {
        (hi - lo) / normalizer
    } else {
        0.0
    }
}

/// Length extremization under a fixed-time constraint: Euler-Lagrange for
/// `G + lambda G F` with a constant `lambda`, solved per coordinate as
/// `lambda_i = -a_i / b_i`, where
/// `a = xdd / G - xd (xd . xdd) / G^3` and
/// `b = (grad F . xd) xd / G + F a - G grad F`.
/// The spread is `(max - min) / mean |lambda|` over all nodes and coordinates;
/// a consistent constant multiplier would give zero.
pub fn isoperimetric_time_test(traj: &ClassicalTrajectory, sys: &ClassicalSystem) -> Result<MultiplierTrace> {
    let (lambdas, excluded) = isoperimetric_lambdas(traj, sys)?;
    let mut trace = MultiplierTrace {
        form: MultiplierForm::Constant,
        times: traj.times.clone(),
        lambdas,
        excluded,
        node_spreads: Vec::new(),
        spread: 0.0,
        worst_node: None,
        shell_deviation: None,
    };
    trace.spread = constant_spread(&trace.lambdas, trace.mean_magnitude());
    Ok(trace)
}

/// Runs [`isoperimetric_time_test`] on nested sub-grids of `dense`, normalizing
/// every level by the mean `|lambda|` of the finest one so that spreads are
/// comparable across levels.
pub fn isoperimetric_refinement(
    dense: &ClassicalTrajectory,
    sys: &ClassicalSystem,
    grids: &[usize],
) -> Result<Vec<MultiplierTrace>> {
    let segments = dense.len().saturating_sub(1);
    let mut traces = grids
        .iter()
        .map(|&n| {
            if n == 0 || !segments.is_multiple_of(n) {
                return Err(Error::InvalidParameter(format!("grid {n} does not divide {segments} segments")));
            }
            isoperimetric_time_test(&dense.subsample(segments / n)?, sys)
        })
        .collect::<Result<Vec<_>>>()?;
    let finest = traces.iter().max_by_key(|t| t.times.len()).map_or(0.0, |t| t.mean_magnitude());
    for t in &mut traces {
        t.spread = constant_spread(&t.lambdas, finest);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Sign;
    use crate::phase::{gradient_flow, hamilton_flow, PhasePoint};
    use crate::systems::{build_classical, SystemKind, SystemSpec};

    fn sys(spec: SystemSpec) -> ClassicalSystem {
        build_classical(&spec).unwrap()
    }

    #[test]
    fn oscillator_and_pendulum_are_consistent_both_ways() {
        let cases = [
            (sys(SystemSpec::new(SystemKind::OscillatorNd)), [1.0, 0.3]),
            (sys(SystemSpec::new(SystemKind::OscillatorNd).with("omega", 2.0)), [0.4, 0.9]),
            (sys(SystemSpec::new(SystemKind::Pendulum)), [0.3, 0.6]),
        ];
        for (s, x) in cases {
            let x0 = PhasePoint::from_slice(&x).unwrap();
            for sign in [Sign::Forward, Sign::Reversed] {
                let traj = hamilton_flow(&x0, &s, 3.0, 3000, sign).unwrap();
                let trace = lambda_consistency(&traj, &s, Some(s.energy(&x0))).unwrap();
                assert!(trace.spread < 1e-6, "{} {sign:?}: {}", s.name(), trace.spread);
            }
        }
    }

    #[test]
    fn gradient_flow_is_inconsistent() {
        let s = sys(SystemSpec::new(SystemKind::Pendulum));
        let traj = gradient_flow(&PhasePoint::from_slice(&[0.3, 0.6]).unwrap(), &s, 1.0, 1000).unwrap();
        let trace = lambda_consistency(&traj, &s, None).unwrap();
        assert!(trace.spread > 0.1, "{}", trace.spread);
    }

    #[test]
    fn coordinates_on_axes_are_excluded() {
        // at q = 0 the q-component of grad H vanishes
        let s = sys(SystemSpec::new(SystemKind::OscillatorNd));
        let traj = hamilton_flow(&PhasePoint::from_slice(&[0.0, 1.0]).unwrap(), &s, 1.0, 10, Sign::Forward).unwrap();
        let trace = lambda_consistency(&traj, &s, None).unwrap();
        assert_eq!(trace.lambdas[0][0], None);
        assert!(trace.excluded >= 1);
    }

    #[test]
    fn isoperimetric_spread_grows_with_refinement() {
        let s = sys(SystemSpec::new(SystemKind::OscillatorNd).with("omega", 2.0));
        let x0 = PhasePoint::from_slice(&[0.4, 0.9]).unwrap();
        let dense = hamilton_flow(&x0, &s, 1.0, 2000, Sign::Forward).unwrap();
        let traces = isoperimetric_refinement(&dense, &s, &[250, 500, 1000, 2000]).unwrap();
        assert!(traces[0].spread > 0.1);
        for w in traces.windows(2) {
            assert!(w[1].spread >= w[0].spread);
        }
    }

    #[test]
    fn fixed_point_is_rejected() {
        let s = sys(SystemSpec::new(SystemKind::OscillatorNd));
        let traj = hamilton_flow(&PhasePoint::from_slice(&[0.0, 0.0]).unwrap(), &s, 1.0, 4, Sign::Forward).unwrap();
        assert!(matches!(lambda_consistency(&traj, &s, None), Err(Error::DegenerateSpeed { .. })));
    }
}
