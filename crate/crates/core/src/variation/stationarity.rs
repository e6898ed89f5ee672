use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sources::PathSource;
use super::stencil::first_variation;
use super::{Constraint, ConstraintPolicy, DirectionSpec, Perturbable, PerturbationField};
use crate::error::{Error, Result};
use crate::functionals::{Functional, FunctionalKind};
use crate::numeric::{extrapolate_stencil, fit_order};

/// Decision thresholds of the stationarity protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest admissible `|dT/de|` ratio between candidate and baseline.
    pub ratio: f64,
    /// Refinement order a vanishing first variation must show.
    pub min_order: f64,
    /// Allowance subtracted from `min_order` for fit noise on four levels.
    pub order_slack: f64,
    /// Relative change between the two finest grids below which a value counts as converged.
    pub convergence: f64,
    /// Relative magnitude (times `max(1, |T|)`) below which a slope is round-off.
    pub noise_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { ratio: 1e-3, min_order: 2.0, order_slack: 0.1, convergence: 0.05, noise_floor: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stationary,
    NonStationary,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stationary => "stationary",
            Verdict::NonStationary => "non_stationary",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Refinement behaviour of one direction's extrapolated slope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionStatus {
    /// Below the noise floor on every level, or dropped below it monotonically.
    AtFloor,
    /// Decreasing at the required order.
    Vanishing,
    /// Settled to a nonzero value.
    ConvergedNonzero,
    NonMonotone,
    Unresolved,
}

/// One `(direction, epsilon, grid)` evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub direction: usize,
    pub mode: u32,
    pub seed: u64,
    pub epsilon: f64,
    pub grid: usize,
    /// Unperturbed functional value on this grid.
    pub value: f64,
    pub central: f64,
    pub four_point: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLevel {
    pub grid: usize,
    /// Four-point slope extrapolated to zero step.
    pub slope: f64,
    pub extrapolation_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub index: usize,
    pub mode: u32,
    pub seed: u64,
    pub levels: Vec<GridLevel>,
    /// Fitted `p` in `|slope| ~ n^-p`, when at least two levels are above the floor.
    pub order: Option<f64>,
    pub status: DirectionStatus,
}

impl DirectionRecord {
    pub fn final_slope(&self) -> f64 {
        self.levels.last().map_or(0.0, |l| l.slope)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseValue {
    pub grid: usize,
    pub value: f64,
}

/// Analysis of a single path without reference to baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub label: String,
    pub functional: FunctionalKind,
    pub base_values: Vec<BaseValue>,
    pub directions: Vec<DirectionRecord>,
    pub cells: Vec<Cell>,
    /// `stationary` here only means every direction vanishes under refinement;
    /// the full verdict also needs the baseline comparison.
    pub intrinsic: Verdict,
}

impl PathReport {
    /// RMS of the finest-grid slopes over directions.
    pub fn slope_scale(&self) -> f64 {
        let n = self.directions.len().max(1) as f64;
        (self.directions.iter().map(|d| d.final_slope().powi(2)).sum::<f64>() / n).sqrt()
    }

    pub fn final_value(&self) -> f64 {
        self.base_values.last().map_or(0.0, |b| b.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub label: String,
    /// Whether the baseline itself was found non-stationary and so can anchor ratios.
    pub usable: bool,
    pub scale: Option<f64>,
    pub report: Option<PathReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub direction: usize,
    pub baseline: String,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub functional: FunctionalKind,
    pub policy: ConstraintPolicy,
    pub grid_sizes: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub thresholds: Thresholds,
    pub candidate: PathReport,
    pub baselines: Vec<BaselineRecord>,
    pub ratios: Vec<RatioRecord>,
    pub verdict: Verdict,
}

fn validate_plan(directions: &[DirectionSpec], epsilons: &[f64], grids: &[usize]) -> Result<()> {
    if directions.is_empty() {
        return Err(Error::InvalidParameter("at least one direction is required".into()));
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter("epsilons must be a non-empty list of positive steps".into()));
    }
    if grids.is_empty() || grids.contains(&0) || grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grids must be a strictly increasing list of positive sizes".into()));
    }
    Ok(())
}

fn classify(levels: &[GridLevel], floor: f64, th: &Thresholds) -> (DirectionStatus, Option<f64>) {
    let grids: Vec<usize> = levels.iter().map(|l| l.grid).collect();
    let mags: Vec<f64> = levels.iter().map(|l| l.slope.abs()).collect();
    let order = fit_order(&grids, &mags, floor).map(|f| f.order);
    let above: Vec<bool> = mags.iter().map(|m| *m > floor).collect();
    if !above.iter().any(|a| *a) {
        return (DirectionStatus::AtFloor, order);
    }
    let decreasing = |m: &[f64]| m.windows(2).all(|w| w[1] < w[0]);
    if !above[above.len() - 1] {
        let prefix = above.iter().take_while(|a| **a).count();
        let contiguous = above[prefix..].iter().all(|a| !*a);
        let status = if contiguous && decreasing(&mags[..prefix]) {
            DirectionStatus::AtFloor
        } else {
            DirectionStatus::NonMonotone
        };
        return (status, order);
    }
    let kept: Vec<f64> = mags.iter().copied().filter(|m| *m > floor).collect();
    let monotone = kept.len() == mags.len() && decreasing(&kept);
    if let Some(p) = order {
        if monotone && p >= th.min_order - th.order_slack {
            return (DirectionStatus::Vanishing, order);
        }
    }
    if levels.len() >= 2 {
        let (a, b) = (levels[levels.len() - 2].slope, levels[levels.len() - 1].slope);
        if ((b - a) / b).abs() < th.convergence {
            return (DirectionStatus::ConvergedNonzero, order);
        }
    }
    if !monotone {
        return (DirectionStatus::NonMonotone, order);
    }
    (DirectionStatus::Unresolved, order)
}

fn intrinsic_verdict(directions: &[DirectionRecord]) -> Verdict {
    if directions.iter().any(|d| d.status == DirectionStatus::ConvergedNonzero) {
        Verdict::NonStationary
    } else if directions.iter().all(|d| matches!(d.status, DirectionStatus::Vanishing | DirectionStatus::AtFloor)) {
        Verdict::Stationary
    } else {
        Verdict::Inconclusive
    }
}

/// Runs the `(direction, epsilon, grid)` sweep on one path source.
///
/// Cells are evaluated in parallel on the ambient rayon pool and collected in
/// declaration order, so the report does not depend on the worker count.
pub fn analyze_path<P, F, S>(
    source: &S,
    functional: &F,
    constraint: &Constraint,
    directions: &[DirectionSpec],
    epsilons: &[f64],
    grids: &[usize],
    thresholds: &Thresholds,
) -> Result<PathReport>
where
    P: Perturbable,
    F: Functional<P> + ?Sized,
    S: PathSource<P> + ?Sized,
{
    validate_plan(directions, epsilons, grids)?;
    let paths = grids.par_iter().map(|&n| source.at_grid(n)).collect::<Result<Vec<P>>>()?;
    let base_values = grids
        .par_iter()
        .zip(&paths)
        .map(|(&grid, path)| Ok(BaseValue { grid, value: functional.evaluate(path)?.value }))
        .collect::<Result<Vec<_>>>()?;
    let fields: Vec<PerturbationField> = directions
        .iter()
        .map(|d| PerturbationField::new(*d, paths[0].random_direction(d.seed), constraint.clone()))
        .collect();

    let jobs: Vec<(usize, usize, usize)> = (0..grids.len())
        .flat_map(|g| (0..fields.len()).flat_map(move |d| (0..epsilons.len()).map(move |e| (g, d, e))))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(g, d, e)| {
            let est = first_variation(functional, &paths[g], &fields[d], epsilons[e])?;
            Ok(Cell {
                direction: directions[d].index,
                mode: directions[d].mode,
                seed: directions[d].seed,
                epsilon: epsilons[e],
                grid: grids[g],
                value: base_values[g].value,
                central: est.central,
                four_point: est.four_point,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let floor = thresholds.noise_floor * base_values.last().map_or(1.0, |b| b.value.abs()).max(1.0);
    let records = directions
        .iter()
        .enumerate()
        .map(|(d, spec)| {
            let levels = (0..grids.len())
                .map(|g| {
                    let start = (g * fields.len() + d) * epsilons.len();
                    let slice = &cells[start..start + epsilons.len()];
                    let ex = extrapolate_stencil(epsilons, &slice.iter().map(|c| c.four_point).collect::<Vec<_>>())?;
                    Ok(GridLevel { grid: grids[g], slope: ex.value, extrapolation_residual: ex.residual_rms })
                })
                .collect::<Result<Vec<_>>>()?;
            let (status, order) = classify(&levels, floor, thresholds);
            Ok(DirectionRecord { index: spec.index, mode: spec.mode, seed: spec.seed, levels, order, status })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PathReport {
        label: source.label(),
        functional: functional.kind(),
        base_values,
        intrinsic: intrinsic_verdict(&records),
        directions: records,
        cells,
    })
}

/// Analyzes `candidate` and every baseline and combines them into a verdict.
///
/// A baseline that fails to build or evaluate, or that is not itself
/// non-stationary, is recorded but cannot anchor the ratio test.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_test<P, F>(
    candidate: &dyn PathSource<P>,
    baselines: &[&dyn PathSource<P>],
    functional: &F,
    constraint: &Constraint,
    directions: &[DirectionSpec],
    epsilons: &[f64],
    grids: &[usize],
    thresholds: &Thresholds,
) -> Result<StationarityReport>
where
    P: Perturbable,
    F: Functional<P> + ?Sized,
{
    let cand = analyze_path(candidate, functional, constraint, directions, epsilons, grids, thresholds)?;
    let baseline_records: Vec<BaselineRecord> = baselines
        .iter()
        .map(|b| match analyze_path(*b, functional, constraint, directions, epsilons, grids, thresholds) {
            Ok(report) => {
                let usable = report.intrinsic == Verdict::NonStationary;
                BaselineRecord {
                    label: report.label.clone(),
                    usable,
                    scale: Some(report.slope_scale()),
                    report: Some(report),
                    error: None,
                }
            }
            Err(e) => BaselineRecord {
                label: b.label(),
                usable: false,
                scale: None,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut ratios = Vec::new();
    for rec in cand.directions.iter() {
        for b in baseline_records.iter().filter(|b| b.usable) {
            let scale = b.scale.unwrap_or(0.0);
            ratios.push(RatioRecord {
                direction: rec.index,
                baseline: b.label.clone(),
                ratio: rec.final_slope().abs() / scale,
            });
        }
    }

    let verdict = match cand.intrinsic {
        Verdict::NonStationary => Verdict::NonStationary,
        Verdict::Stationary if !ratios.is_empty() && ratios.iter().all(|r| r.ratio < thresholds.ratio) => {
            Verdict::Stationary
        }
        _ => Verdict::Inconclusive,
    };

    Ok(StationarityReport {
        functional: functional.kind(),
        policy: constraint.policy(),
        grid_sizes: grids.to_vec(),
        epsilons: epsilons.to_vec(),
        thresholds: *thresholds,
        candidate: cand,
        baselines: baseline_records,
        ratios,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels(values: &[f64]) -> Vec<GridLevel> {
        [250, 500, 1000, 2000]
            .iter()
            .zip(values)
            .map(|(g, v)| GridLevel { grid: *g, slope: *v, extrapolation_residual: 0.0 })
            .collect()
    }

    #[test]
    fn classification_cases() {
        let th = Thresholds::default();
        let quad: Vec<f64> = [250.0f64, 500.0, 1000.0, 2000.0].iter().map(|n| 3.0 / (n * n)).collect();
        assert_eq!(classify(&levels(&quad), 1e-10, &th).0, DirectionStatus::Vanishing);
        let linear: Vec<f64> = [250.0f64, 500.0, 1000.0, 2000.0].iter().map(|n| 3.0 / n).collect();
        assert_eq!(classify(&levels(&linear), 1e-10, &th).0, DirectionStatus::Unresolved);
        let settled: Vec<f64> = [250.0f64, 500.0, 1000.0, 2000.0].iter().map(|n| 0.4 + 3.0 / (n * n)).collect();
        assert_eq!(classify(&levels(&settled), 1e-10, &th).0, DirectionStatus::ConvergedNonzero);
        assert_eq!(classify(&levels(&[1e-12, -3e-12, 2e-13, 0.0]), 1e-10, &th).0, DirectionStatus::AtFloor);
        assert_eq!(classify(&levels(&[1e-6, 2e-7, 1e-12, 1e-13]), 1e-10, &th).0, DirectionStatus::AtFloor);
        assert_eq!(classify(&levels(&[1e-3, 1e-1, 2e-3, 1.0]), 1e-10, &th).0, DirectionStatus::NonMonotone);
    }

    #[test]
    fn plan_validation() {
        let d = DirectionSpec::family(1, &[1], 0).unwrap();
        assert!(validate_plan(&d, &[1e-3], &[10, 20]).is_ok());
        assert!(validate_plan(&d, &[], &[10]).is_err());
        assert!(validate_plan(&d, &[1e-3], &[20, 10]).is_err());
        assert!(validate_plan(&[], &[1e-3], &[10]).is_err());
    }
}
