//! Experiment catalog: claim anchors and the named checks each experiment reports.

use fermatlab_core::systems::SystemKind;
use fermatlab_core::variation::ConstraintPolicy;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, ResolvedConfig};

pub const VERDICTS: &[&str] = &["stationary", "non_stationary", "inconclusive"];
pub const RESIDUAL: &[&str] = &["vanishing", "nonzero"];
pub const CONSERVATION: &[&str] = &["conserved", "drifting"];
pub const CONSISTENCY: &[&str] = &["consistent", "inconsistent", "inconclusive"];

/// A named check an experiment reports, its admissible outcomes and the
/// outcome expected by default (`None`: recorded, not asserted).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSpec {
    pub name: String,
    pub outcomes: &'static [&'static str],
    pub default_expect: Option<&'static str>,
}

fn check(name: &str, outcomes: &'static [&'static str], default_expect: Option<&'static str>) -> CheckSpec {
    CheckSpec { name: name.to_string(), outcomes, default_expect }
}

/// The claim an experiment exercises, in one line.
pub fn anchor(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::QuantumStationarity => {
            "quantum time functional (FS length over energy uncertainty) is stationary along Schrodinger paths"
        }
        ExperimentKind::QuantumResiduals => {
            "pointwise stationarity condition holds for Schrodinger and nonlinear velocities, also with H(t)"
        }
        ExperimentKind::AaLength => "FS speed of unitary evolution equals the energy uncertainty (Anandan-Aharonov)",
        ExperimentKind::NonlinearFlow => {
            "norm-preserving nonlinear flow with generator H - 2<H> satisfies the same stationarity conditions"
        }
        ExperimentKind::ClassicalStationarity => {
            "phase-space time functional (length over |grad H|) is stationary along Hamiltonian flows on the shell"
        }
        ExperimentKind::LambdaConsistency => {
            "shell-constrained Euler-Lagrange equations give one consistent multiplier along Hamiltonian flows"
        }
        ExperimentKind::Isoperimetric => "length extremization at fixed total time has no consistent constant multiplier",
        ExperimentKind::ShellGeodesic => "phase-space path length is stationary under shell-preserving variations",
        ExperimentKind::ConfigSpace => {
            "configuration space: Jacobi action stationary, inverse-Jacobi time candidate only for flat or equipotential motion"
        }
        ExperimentKind::SpinHypothesis => {
            "interacting classical spins in (cos theta, phi) coordinates obey the phase-space principle"
        }
    }
}

fn verdict_checks(cfg: &ResolvedConfig, time: bool) -> Vec<CheckSpec> {
    let mut out = vec![check("candidate", VERDICTS, Some("stationary"))];
    for b in &cfg.variation.baselines {
        // A shell chord can itself be extremal (great circle on an isotropic shell).
        let expect = if b.name() == "shell_chord" { None } else { Some("non_stationary") };
        out.push(check(b.name(), VERDICTS, expect));
    }
    if time {
        out.push(check("time_identity", &["holds", "violated"], Some("holds")));
    }
    out
}

/// Checks reported by the experiment of `cfg`, in report order.
pub fn checks(cfg: &ResolvedConfig) -> Vec<CheckSpec> {
    let sys = cfg.system.kind;
    match cfg.experiment {
        ExperimentKind::QuantumStationarity => verdict_checks(cfg, true),
        ExperimentKind::QuantumResiduals => {
            if sys == SystemKind::DrivenQubit {
                vec![
                    check("driven_residual", RESIDUAL, Some("vanishing")),
                    check("random_residual", RESIDUAL, Some("nonzero")),
                ]
            } else {
                vec![
                    check("flow_residual", RESIDUAL, Some("vanishing")),
                    check("time_dependent_residual", RESIDUAL, Some("vanishing")),
                    check("trajectory_residual", RESIDUAL, Some("vanishing")),
                    check("random_residual", RESIDUAL, Some("nonzero")),
                ]
            }
        }
        ExperimentKind::AaLength => vec![check("aa_length", &["equal", "different"], Some("equal"))],
        ExperimentKind::NonlinearFlow => vec![
            check("norm", CONSERVATION, Some("conserved")),
            check("stationarity_residual", RESIDUAL, Some("vanishing")),
            check("time_dependent_residual", RESIDUAL, Some("vanishing")),
            check("reversed_match", &["matches", "differs"], None),
        ],
        ExperimentKind::ClassicalStationarity => {
            let mut v = verdict_checks(cfg, true);
            v.push(check("energy_drift", CONSERVATION, Some("conserved")));
            v
        }
        ExperimentKind::ShellGeodesic => {
            let mut v = verdict_checks(cfg, false);
            v.push(check("energy_drift", CONSERVATION, Some("conserved")));
            v
        }
        ExperimentKind::LambdaConsistency => vec![
            check("forward", CONSISTENCY, Some("consistent")),
            check("reversed", CONSISTENCY, Some("consistent")),
            check("gradient_flow", CONSISTENCY, Some("inconsistent")),
        ],
        ExperimentKind::Isoperimetric => {
            let expect = |e| if sys == SystemKind::FreeParticle { None } else { Some(e) };
            vec![
                check("constant_multiplier", &["consistent", "inconsistent", "degenerate"], expect("inconsistent")),
                check("refinement", &["non_decreasing", "decreasing", "degenerate"], expect("non_decreasing")),
            ]
        }
        ExperimentKind::ConfigSpace => {
            let flat =
                sys == SystemKind::FreeParticle || cfg.variation.constraint == ConstraintPolicy::ProjectToEquipotential;
            vec![
                check("jacobi", VERDICTS, Some("stationary")),
                check("inverse_jacobi", VERDICTS, Some(if flat { "stationary" } else { "non_stationary" })),
            ]
        }
        ExperimentKind::SpinHypothesis => {
            let mut v = vec![
                check("derivatives", &["validated", "mismatch"], Some("validated")),
                check("total_z", CONSERVATION, Some("conserved")),
                check("forward", CONSISTENCY, Some("consistent")),
                check("reversed", CONSISTENCY, Some("consistent")),
            ];
            v.extend(verdict_checks(cfg, true));
            v.push(check("energy_drift", CONSERVATION, Some("conserved")));
            v
        }
    }
}

/// Catalog entry printed by `list`.
#[derive(Clone, Debug, Serialize)]
pub struct Entry {
    pub experiment: &'static str,
    pub anchor: &'static str,
    pub default: ResolvedConfig,
}

pub fn entries() -> Vec<Entry> {
    ExperimentKind::ALL
        .iter()
        .map(|&kind| {
            let cfg = ExperimentConfig {
                experiment: kind,
                system: None,
                path: Default::default(),
                variation: Default::default(),
                tolerances: Default::default(),
                expect: Default::default(),
                output_dir: None,
            };
            Entry {
                experiment: kind.name(),
                anchor: anchor(kind),
                default: cfg.resolve(None, None).expect("catalog defaults are valid"),
            }
        })
        .collect()
}

/// Text rendering of the catalog; contains no timestamps or run-dependent data.
pub fn render() -> String {
    let mut out = String::new();
    for e in entries() {
        let mut default = serde_json::to_value(&e.default).expect("config serializes");
        if let Some(map) = default.as_object_mut() {
            map.remove("tolerances");
        }
        out += &format!("{}\n  anchor: {}\n  default: {}\n", e.experiment, e.anchor, default);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_ten_anchored_entries() {
        let e = entries();
        assert_eq!(e.len(), 10);
        assert!(e.iter().all(|x| !x.anchor.is_empty()));
        assert_eq!(render(), render());
    }

    #[test]
    fn expectations_are_admissible_outcomes() {
        for e in entries() {
            for c in checks(&e.default) {
                if let Some(x) = c.default_expect {
                    assert!(c.outcomes.contains(&x), "{} {}", e.experiment, c.name);
                }
            }
        }
    }
}
