//! Strict JSON experiment configuration and its resolution against defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use fermatlab_core::hilbert::Sign;
use fermatlab_core::systems::{SystemKind, SystemSpec};
use fermatlab_core::variation::{ConstraintPolicy, DEFAULT_EPSILONS, DEFAULT_GRIDS, DENSE_STEPS};
use serde::{Deserialize, Serialize};

use crate::catalog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    QuantumStationarity,
    QuantumResiduals,
    AaLength,
    NonlinearFlow,
    ClassicalStationarity,
    LambdaConsistency,
    Isoperimetric,
    ShellGeodesic,
    ConfigSpace,
    SpinHypothesis,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::QuantumStationarity,
        ExperimentKind::QuantumResiduals,
        ExperimentKind::AaLength,
        ExperimentKind::NonlinearFlow,
        ExperimentKind::ClassicalStationarity,
        ExperimentKind::LambdaConsistency,
        ExperimentKind::Isoperimetric,
        ExperimentKind::ShellGeodesic,
        ExperimentKind::ConfigSpace,
        ExperimentKind::SpinHypothesis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::QuantumStationarity => "quantum_stationarity",
            ExperimentKind::QuantumResiduals => "quantum_residuals",
            ExperimentKind::AaLength => "aa_length",
            ExperimentKind::NonlinearFlow => "nonlinear_flow",
            ExperimentKind::ClassicalStationarity => "classical_stationarity",
            ExperimentKind::LambdaConsistency => "lambda_consistency",
            ExperimentKind::Isoperimetric => "isoperimetric",
            ExperimentKind::ShellGeodesic => "shell_geodesic",
            ExperimentKind::ConfigSpace => "config_space",
            ExperimentKind::SpinHypothesis => "spin_hypothesis",
        }
    }

    pub fn is_quantum(self) -> bool {
        matches!(
            self,
            ExperimentKind::QuantumStationarity
                | ExperimentKind::QuantumResiduals
                | ExperimentKind::AaLength
                | ExperimentKind::NonlinearFlow
        )
    }

    /// Whether the experiment runs the perturbation protocol.
    pub fn uses_variation(self) -> bool {
        matches!(
            self,
            ExperimentKind::QuantumStationarity
                | ExperimentKind::ClassicalStationarity
                | ExperimentKind::ShellGeodesic
                | ExperimentKind::ConfigSpace
                | ExperimentKind::SpinHypothesis
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Starting point of the physical path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Quantum: seeded Haar-like random state.
    Seed(u64),
    /// Quantum: computational basis state.
    Basis(usize),
    /// Classical: explicit phase point `(q..., p...)`.
    Point(Vec<f64>),
    /// Classical: the system's catalog starting point.
    Default,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub t_final: Option<f64>,
    pub n_steps: Option<usize>,
    pub grids: Option<Vec<usize>>,
    pub sign: Option<Sign>,
    pub initial: Option<InitialSpec>,
    pub samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    FsGeodesic,
    SmoothRandom,
    ShellChord,
    ShellDistorted,
    ConfigChord,
    ConfigDistorted,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::FsGeodesic => "fs_geodesic",
            BaselineKind::SmoothRandom => "smooth_random",
            BaselineKind::ShellChord => "shell_chord",
            BaselineKind::ShellDistorted => "shell_distorted",
            BaselineKind::ConfigChord => "config_chord",
            BaselineKind::ConfigDistorted => "config_distorted",
        }
    }

    fn space(self) -> Space {
        match self {
            BaselineKind::FsGeodesic | BaselineKind::SmoothRandom => Space::Quantum,
            BaselineKind::ShellChord | BaselineKind::ShellDistorted => Space::Phase,
            BaselineKind::ConfigChord | BaselineKind::ConfigDistorted => Space::Config,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Space {
    Quantum,
    Phase,
    Config,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationConfig {
    pub n_directions: Option<usize>,
    pub modes: Option<Vec<u32>>,
    pub seed: Option<u64>,
    pub epsilons: Option<Vec<f64>>,
    pub constraint: Option<ConstraintPolicy>,
    pub baselines: Option<Vec<BaselineKind>>,
}

/// The document a user writes. Everything except `experiment` is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub variation: VariationConfig,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Expected outcome per named check; unlisted checks use the catalog defaults.
    #[serde(default)]
    pub expect: BTreeMap<String, String>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedPath {
    pub t_final: f64,
    pub n_steps: usize,
    pub grids: Vec<usize>,
    pub sign: Sign,
    pub initial: InitialSpec,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedVariation {
    pub n_directions: usize,
    pub modes: Vec<u32>,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub constraint: ConstraintPolicy,
    pub baselines: Vec<BaselineKind>,
}

/// A configuration with every default filled in; embedded verbatim in reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub experiment: ExperimentKind,
    pub system: SystemSpec,
    pub path: ResolvedPath,
    pub variation: ResolvedVariation,
    pub tolerances: BTreeMap<String, f64>,
    /// Expected outcome per check; checks without an entry are recorded only.
    pub expect: BTreeMap<String, String>,
    pub output_dir: String,
}

/// Configuration problems; all map to exit code 2.
#[derive(Debug)]
pub enum ConfigError {
    Io { path: String, message: String },
    Parse { path: String, line: usize, column: usize, message: String },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read config {path}: {message}"),
            ConfigError::Parse { path, line, column, message } => write!(f, "{path}:{line}:{column}: {message}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Default tolerance table shared by every experiment.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("ratio", 1e-3),
        ("min_order", 2.0),
        ("order_slack", 0.1),
        ("convergence", 0.05),
        ("noise_floor", 1e-10),
        ("residual", 1e-10),
        ("random_residual", 1e-3),
        ("driven_residual", 1e-8),
        ("norm", 1e-10),
        ("aa_relative", 1e-6),
        ("time_identity", 1e-5),
        ("consistency", 1e-6),
        ("inconsistency", 0.1),
        ("isoperimetric", 0.1),
        ("energy_drift", 1e-8),
        ("projective_match", 1e-8),
        ("derivative", 1e-5),
        ("sweep_order_min", 1.7),
        ("sweep_order_max", 2.3),
        ("linear_response", 0.05),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn parse_str(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_str(&text, &path.display().to_string())
}

fn default_system(kind: ExperimentKind) -> SystemSpec {
    match kind {
        ExperimentKind::QuantumStationarity | ExperimentKind::QuantumResiduals | ExperimentKind::NonlinearFlow => {
            SystemSpec::new(SystemKind::RandomHermitian).with("dim", 8.0).with_seed(42)
        }
        ExperimentKind::AaLength => SystemSpec::new(SystemKind::QubitField),
        ExperimentKind::ClassicalStationarity | ExperimentKind::ShellGeodesic => {
            SystemSpec::new(SystemKind::OscillatorNd).with("dof", 2.0)
        }
        ExperimentKind::LambdaConsistency => SystemSpec::new(SystemKind::Pendulum),
        ExperimentKind::Isoperimetric => SystemSpec::new(SystemKind::OscillatorNd).with("omega", 2.0),
        ExperimentKind::ConfigSpace => SystemSpec::new(SystemKind::Pendulum).with("dof", 2.0).with("coupling", 0.3),
        ExperimentKind::SpinHypothesis => SystemSpec::new(SystemKind::ClassicalSpinPair),
    }
}

fn default_path(kind: ExperimentKind) -> ResolvedPath {
    let (t_final, n_steps, initial, samples) = match kind {
        ExperimentKind::QuantumStationarity => (1.0, 2000, InitialSpec::Seed(7), 0),
        ExperimentKind::QuantumResiduals => (1.0, 1000, InitialSpec::Seed(7), 20),
        ExperimentKind::AaLength => (std::f64::consts::FRAC_PI_2, 10_000, InitialSpec::Basis(0), 0),
        ExperimentKind::NonlinearFlow => (10.0, 10_000, InitialSpec::Seed(7), 0),
        ExperimentKind::LambdaConsistency => (3.0, 3000, InitialSpec::Default, 0),
        ExperimentKind::Isoperimetric => (1.0, 2000, InitialSpec::Default, 0),
        ExperimentKind::ClassicalStationarity
        | ExperimentKind::ShellGeodesic
        | ExperimentKind::ConfigSpace
        | ExperimentKind::SpinHypothesis => (1.0, DENSE_STEPS, InitialSpec::Default, 0),
    };
    ResolvedPath { t_final, n_steps, grids: DEFAULT_GRIDS.to_vec(), sign: Sign::Forward, initial, samples }
}

fn default_variation(kind: ExperimentKind) -> ResolvedVariation {
    let (n_directions, seed, constraint, baselines) = match kind {
        ExperimentKind::QuantumStationarity => {
            (8, 2024, ConstraintPolicy::Renormalize, vec![BaselineKind::FsGeodesic, BaselineKind::SmoothRandom])
        }
        ExperimentKind::ClassicalStationarity | ExperimentKind::ShellGeodesic | ExperimentKind::SpinHypothesis => {
            (6, 77, ConstraintPolicy::ProjectToShell, vec![BaselineKind::ShellChord, BaselineKind::ShellDistorted])
        }
        ExperimentKind::ConfigSpace => {
            (6, 31, ConstraintPolicy::None, vec![BaselineKind::ConfigChord, BaselineKind::ConfigDistorted])
        }
        _ => (0, 0, ConstraintPolicy::None, Vec::new()),
    };
    ResolvedVariation {
        n_directions,
        modes: if n_directions > 0 { vec![1, 2, 3] } else { Vec::new() },
        seed,
        epsilons: if n_directions > 0 { DEFAULT_EPSILONS.to_vec() } else { Vec::new() },
        constraint,
        baselines,
    }
}

impl ExperimentConfig {
    /// Fills defaults and validates the combination; `seed` overrides the
    /// variation seed and the system seed.
    pub fn resolve(&self, output_override: Option<&str>, seed: Option<u64>) -> Result<ResolvedConfig, ConfigError> {
        let kind = self.experiment;
        let mut system = self.system.clone().unwrap_or_else(|| default_system(kind));
        if let Some(s) = seed {
            system.seed = Some(s);
        }
        system.parameters = system.resolved_parameters().map_err(|e| invalid(e.to_string()))?;

        let d = default_path(kind);
        let path = ResolvedPath {
            t_final: self.path.t_final.unwrap_or(d.t_final),
            n_steps: self.path.n_steps.unwrap_or(d.n_steps),
            grids: self.path.grids.clone().unwrap_or(d.grids),
            sign: self.path.sign.unwrap_or(d.sign),
            initial: self.path.initial.clone().unwrap_or(d.initial),
            samples: self.path.samples.unwrap_or(d.samples),
        };
        let dv = default_variation(kind);
        let variation = ResolvedVariation {
            n_directions: self.variation.n_directions.unwrap_or(dv.n_directions),
            modes: self.variation.modes.clone().unwrap_or(dv.modes),
            seed: seed.or(self.variation.seed).unwrap_or(dv.seed),
            epsilons: self.variation.epsilons.clone().unwrap_or(dv.epsilons),
            constraint: self.variation.constraint.unwrap_or(dv.constraint),
            baselines: self.variation.baselines.clone().unwrap_or(dv.baselines),
        };

        let mut tolerances = default_tolerances();
        for (k, v) in &self.tolerances {
            if !tolerances.contains_key(k) {
                let known: Vec<&String> = tolerances.keys().collect();
                return Err(invalid(format!("unknown tolerance '{k}'; expected one of {known:?}")));
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(invalid(format!("tolerance '{k}' must be a finite nonnegative number")));
            }
            tolerances.insert(k.clone(), *v);
        }

        let mut resolved = ResolvedConfig {
            experiment: kind,
            system,
            path,
            variation,
            tolerances,
            expect: BTreeMap::new(),
            output_dir: output_override
                .map(str::to_string)
                .or_else(|| self.output_dir.clone())
                .unwrap_or_else(|| format!("out/{}", kind.name())),
        };
        resolved.validate()?;

        let checks = catalog::checks(&resolved);
        for c in &checks {
            if let Some(e) = c.default_expect {
                resolved.expect.insert(c.name.clone(), e.to_string());
            }
        }
        for (name, value) in &self.expect {
            let Some(check) = checks.iter().find(|c| &c.name == name) else {
                let known: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
                return Err(invalid(format!("unknown expectation '{name}' for {kind}; expected one of {known:?}")));
            };
            if !check.outcomes.contains(&value.as_str()) {
                return Err(invalid(format!(
                    "expectation '{name}' must be one of {:?}, got '{value}'",
                    check.outcomes
                )));
            }
            resolved.expect.insert(name.clone(), value.clone());
        }
        Ok(resolved)
    }
}

impl ResolvedConfig {
    /// Checks the combination of experiment, system, path and variation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let kind = self.experiment;
        let sys = self.system.kind;
        let supported: &[SystemKind] = match kind {
            ExperimentKind::QuantumStationarity | ExperimentKind::AaLength | ExperimentKind::NonlinearFlow => {
                &[SystemKind::QubitField, SystemKind::HeisenbergChain, SystemKind::RandomHermitian]
            }
            ExperimentKind::QuantumResiduals => &[
                SystemKind::QubitField,
                SystemKind::DrivenQubit,
                SystemKind::HeisenbergChain,
                SystemKind::RandomHermitian,
            ],
            ExperimentKind::SpinHypothesis => &[SystemKind::ClassicalSpinPair],
            _ => &[
                SystemKind::OscillatorNd,
                SystemKind::Pendulum,
                SystemKind::DoubleWell,
                SystemKind::HenonHeilesLike,
                SystemKind::ClassicalSpinPair,
                SystemKind::FreeParticle,
            ],
        };
        if !supported.contains(&sys) {
            return Err(invalid(format!("{kind} does not support system {}", sys.name())));
        }
        if kind == ExperimentKind::ConfigSpace && sys == SystemKind::ClassicalSpinPair {
            return Err(invalid("config_space needs a kinetic-plus-potential system"));
        }
        if kind.is_quantum() {
            self.system.quantum_dim().map_err(|e| invalid(e.to_string()))?;
        } else {
            self.system.classical_dof().map_err(|e| invalid(e.to_string()))?;
        }

        let p = &self.path;
        if !(p.t_final > 0.0) || !p.t_final.is_finite() {
            return Err(invalid(format!("path.t_final must be positive, got {}", p.t_final)));
        }
        if p.n_steps == 0 {
            return Err(invalid("path.n_steps must be at least 1"));
        }
        if p.grids.is_empty() || p.grids.contains(&0) || p.grids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("path.grids must be a strictly increasing list of positive sizes"));
        }
        match (&p.initial, kind.is_quantum()) {
            (InitialSpec::Point(_) | InitialSpec::Default, true) => {
                return Err(invalid("quantum experiments take path.initial as {\"seed\": n} or {\"basis\": k}"));
            }
            (InitialSpec::Seed(_) | InitialSpec::Basis(_), false) => {
                return Err(invalid("classical experiments take path.initial as {\"point\": [...]} or \"default\""));
            }
            _ => {}
        }
        if kind == ExperimentKind::QuantumResiduals && p.samples == 0 {
            return Err(invalid("path.samples must be at least 1"));
        }
        if kind == ExperimentKind::Isoperimetric {
            if let Some(g) = p.grids.iter().find(|g| !p.n_steps.is_multiple_of(**g)) {
                return Err(invalid(format!("grid {g} must divide path.n_steps = {}", p.n_steps)));
            }
        }

        let v = &self.variation;
        if kind.uses_variation() {
            if v.n_directions == 0 {
                return Err(invalid("variation.n_directions must be at least 1"));
            }
            if v.modes.is_empty() || v.modes.contains(&0) {
                return Err(invalid("variation.modes must be a non-empty list of positive integers"));
            }
            if v.epsilons.is_empty() || v.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return Err(invalid("variation.epsilons must be a non-empty list of positive steps"));
            }
            let space = match kind {
                ExperimentKind::QuantumStationarity => Space::Quantum,
                ExperimentKind::ConfigSpace => Space::Config,
                _ => Space::Phase,
            };
            let allowed: &[ConstraintPolicy] = match space {
                Space::Quantum => &[ConstraintPolicy::Renormalize],
                Space::Phase => &[ConstraintPolicy::ProjectToShell],
                Space::Config => &[ConstraintPolicy::None, ConstraintPolicy::ProjectToEquipotential],
            };
            if !allowed.contains(&v.constraint) {
                return Err(invalid(format!(
                    "variation.constraint {:?} is not valid for {kind}; allowed {allowed:?}",
                    v.constraint
                )));
            }
            if v.baselines.is_empty() {
                return Err(invalid("variation.baselines must name at least one baseline"));
            }
            if let Some(b) = v.baselines.iter().find(|b| b.space() != space) {
                return Err(invalid(format!("baseline {} does not apply to {kind}", b.name())));
            }
            let b = &v.baselines;
            if (0..b.len()).any(|i| b[i + 1..].contains(&b[i])) {
                return Err(invalid("variation.baselines lists a baseline twice"));
            }
        }
        Ok(())
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves() {
        let c = parse_str(r#"{"experiment": "quantum_stationarity"}"#, "t").unwrap();
        let r = c.resolve(None, None).unwrap();
        assert_eq!(r.path.grids, DEFAULT_GRIDS.to_vec());
        assert_eq!(r.variation.n_directions, 8);
        assert_eq!(r.expect["candidate"], "stationary");
    }

    #[test]
    fn unknown_key_is_named_with_position() {
        let text = "{\n  \"experiment\": \"quantum_stationarity\",\n  \"epsilon_list\": [1e-3]\n}";
        match parse_str(text, "cfg.json") {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("epsilon_list"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors() {
        let bad = [
            r#"{"experiment": "isoperimetric", "expect": {"nope": "x"}}"#,
            r#"{"experiment": "isoperimetric", "expect": {"constant_multiplier": "maybe"}}"#,
            r#"{"experiment": "isoperimetric", "tolerances": {"tiny": 1}}"#,
            r#"{"experiment": "quantum_stationarity", "system": {"kind": "pendulum"}}"#,
            r#"{"experiment": "classical_stationarity", "variation": {"baselines": ["fs_geodesic"]}}"#,
            r#"{"experiment": "classical_stationarity", "path": {"grids": [500, 250]}}"#,
            r#"{"experiment": "isoperimetric", "path": {"grids": [7]}}"#,
            r#"{"experiment": "aa_length", "path": {"initial": {"point": [1, 0]}}}"#,
        ];
        for text in bad {
            let c = parse_str(text, "t").unwrap();
            assert!(matches!(c.resolve(None, None), Err(ConfigError::Invalid(_))), "{text}");
        }
    }

    #[test]
    fn seed_override_reaches_system_and_directions() {
        let c = parse_str(r#"{"experiment": "quantum_stationarity"}"#, "t").unwrap();
        let r = c.resolve(Some("x"), Some(9)).unwrap();
        assert_eq!(r.system.seed, Some(9));
        assert_eq!(r.variation.seed, 9);
        assert_eq!(r.output_dir, "x");
    }
}
