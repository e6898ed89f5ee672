//! `run`, `list` and `sweep` with the exit-code contract: 0 every expectation
//! met, 1 a scientific disagreement, 2 a configuration or engine failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fermatlab_core::systems::SystemKind;
use fermatlab_core::variation::StationarityReport;
use serde::Serialize;
use serde_json::json;

use crate::catalog;
use crate::config::{self, ConfigError, ResolvedConfig};
use crate::experiments::{self, fitted_orders, Outcome};
use crate::output::{self, fmt_f64, Manifest, ARTIFACT, VERSION};

pub const EXIT_AGREE: i32 = 0;
pub const EXIT_DISAGREE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Command-line overrides shared by `run` and `sweep`.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub svg: bool,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Engine(String),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Engine(e) => write!(f, "engine error: {e}"),
            RunError::Io(e) => write!(f, "output error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// A finished run and where its artifacts went.
pub struct Finished {
    pub config: ResolvedConfig,
    pub outcome: Outcome,
    pub dir: PathBuf,
}

impl Finished {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.agrees() {
            EXIT_AGREE
        } else {
            EXIT_DISAGREE
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, RunError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| RunError::Engine(e.to_string()))
}

/// Runs a resolved config into `dir`, bracketing the artifacts with a MANIFEST.
pub fn execute(cfg: &ResolvedConfig, dir: &Path, opts: &Options) -> Result<Finished, RunError> {
    let manifest = Manifest::begin(dir)?;
    let start = Instant::now();
    let outcome = match pool(opts.threads)
        .and_then(|p| p.install(|| experiments::run(cfg)).map_err(|e| RunError::Engine(e.to_string())))
    {
        Ok(o) => o,
        Err(e) => {
            manifest.fail(&e.to_string())?;
            return Err(e);
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    match output::write_run(dir, cfg, &outcome, seconds, opts.threads.max(1), opts.svg) {
        Ok(files) => manifest.complete(&files)?,
        Err(e) => {
            manifest.fail(&e.to_string())?;
            return Err(e.into());
        }
    }
    Ok(Finished { config: cfg.clone(), outcome, dir: dir.to_path_buf() })
}

pub fn load_resolved(path: &Path, opts: &Options) -> Result<ResolvedConfig, RunError> {
    let raw = config::load(path)?;
    let out = opts.output_dir.as_ref().map(|p| p.display().to_string());
    Ok(raw.resolve(out.as_deref(), opts.seed)?)
}

/// `run <config>`; prints the check table to stdout and diagnostics to stderr.
pub fn run(path: &Path, opts: &Options) -> i32 {
    let result = load_resolved(path, opts).and_then(|cfg| {
        let dir = PathBuf::from(&cfg.output_dir);
        execute(&cfg, &dir, opts)
    });
    match result {
        Ok(f) => {
            print_checks(&f.outcome);
            println!("status: {} ({})", if f.outcome.agrees() { "agree" } else { "disagree" }, f.dir.display());
            f.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn print_checks(outcome: &Outcome) {
    for c in &outcome.checks {
        let mark = match c.agrees {
            Some(true) => "ok",
            Some(false) => "DISAGREE",
            None => "--",
        };
        match &c.expected {
            Some(e) => println!("[{mark}] {}: {} (expected {e})", c.name, c.observed),
            None => println!("[{mark}] {}: {}", c.name, c.observed),
        }
    }
}

pub fn list() -> i32 {
    print!("{}", catalog::render());
    EXIT_AGREE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Grid,
    Epsilon,
    Dimension,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Grid => "grid",
            Axis::Epsilon => "epsilon",
            Axis::Dimension => "dimension",
        }
    }
}

/// Parses a comma-separated value list.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad sweep value '{}': {e}", s.trim())))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("sweep needs at least one value".into());
    }
    Ok(values)
}

fn as_count(v: f64) -> Result<usize, RunError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(RunError::Config(ConfigError::Invalid(format!("sweep value {v} must be a positive integer"))))
    }
}

fn dimension_parameter(kind: SystemKind) -> Option<&'static str> {
    match kind {
        SystemKind::RandomHermitian => Some("dim"),
        SystemKind::HeisenbergChain => Some("sites"),
        SystemKind::OscillatorNd | SystemKind::Pendulum | SystemKind::FreeParticle => Some("dof"),
        _ => None,
    }
}

/// The config of one sweep point.
pub fn sweep_point(base: &ResolvedConfig, axis: Axis, value: f64) -> Result<ResolvedConfig, RunError> {
    let invalid = |m: String| RunError::Config(ConfigError::Invalid(m));
    let mut cfg = base.clone();
    match axis {
        Axis::Grid | Axis::Epsilon if !base.experiment.uses_variation() => {
            return Err(invalid(format!("axis {} does not apply to {}", axis.name(), base.experiment)));
        }
        Axis::Grid => cfg.path.grids = vec![as_count(value)?],
        Axis::Epsilon => {
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(format!("epsilon {value} must be positive")));
            }
            cfg.variation.epsilons = vec![value];
        }
        Axis::Dimension => {
            let name = dimension_parameter(cfg.system.kind)
                .ok_or_else(|| invalid(format!("system {} has no dimension parameter", cfg.system.kind.name())))?;
            cfg.system.parameters.insert(name.to_string(), as_count(value)? as f64);
            if matches!(cfg.path.initial, config::InitialSpec::Point(_)) {
                return Err(invalid("dimension sweep needs a seeded or default initial point".into()));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn reports(outcome: &Outcome) -> Vec<(String, StationarityReport)> {
    outcome.reports.clone()
}

/// Name of the check holding the candidate verdict of a report.
fn verdict_check(report_key: &str) -> &str {
    match report_key {
        "stationarity" => "candidate",
        other => other,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCheck {
    pub name: String,
    pub observed: String,
    pub expected: Option<String>,
    pub agrees: Option<bool>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub points: Vec<serde_json::Value>,
    pub checks: Vec<SweepCheck>,
    #[serde(skip)]
    pub table: Vec<Vec<String>>,
}

impl SweepSummary {
    pub fn agrees(&self) -> bool {
        self.checks.iter().all(|c| c.agrees != Some(false))
    }
}

fn sweep_check(name: String, observed: &str, expected: Option<&str>, detail: serde_json::Value) -> SweepCheck {
    SweepCheck {
        name,
        observed: observed.into(),
        expected: expected.map(str::to_string),
        agrees: expected.map(|e| e == observed),
        detail,
    }
}

/// Combined table and checks over finished sweep points.
pub fn combine(base: &ResolvedConfig, axis: Axis, values: &[f64], runs: &[Finished]) -> SweepSummary {
    let mut checks = vec![];
    let mut table = vec![];
    let points = runs
        .iter()
        .zip(values)
        .map(|(f, v)| {
            json!({
                "value": v,
                "status": if f.outcome.agrees() { "agree" } else { "disagree" },
                "checks": f.outcome.checks,
            })
        })
        .collect();
    match axis {
        Axis::Grid => {
            let grids: Vec<usize> = values.iter().map(|v| *v as usize).collect();
            let mut header = vec!["report".to_string(), "path".into(), "direction".into(), "mode".into()];
            header.extend(grids.iter().map(|g| format!("grid_{g}")));
            header.push("fitted_order".into());
            table.push(header);
            let per_run: Vec<Vec<(String, StationarityReport)>> = runs.iter().map(|f| reports(&f.outcome)).collect();
            let (lo, hi) = (base.tolerance("sweep_order_min"), base.tolerance("sweep_order_max"));
            for (ri, (key, first)) in per_run[0].iter().enumerate() {
                let floor = base.tolerance("noise_floor") * first.candidate.final_value().abs().max(1.0);
                let slopes: Vec<Vec<f64>> = (0..first.candidate.directions.len())
                    .map(|d| per_run.iter().map(|r| r[ri].1.candidate.directions[d].final_slope().abs()).collect())
                    .collect();
                let orders = fitted_orders(&grids, &slopes, floor);
                for (d, dir) in first.candidate.directions.iter().enumerate() {
                    let mut row = vec![key.clone(), first.candidate.label.clone(), d.to_string(), dir.mode.to_string()];
                    row.extend(slopes[d].iter().map(|s| fmt_f64(*s)));
                    row.push(orders[d].map_or(String::new(), fmt_f64));
                    table.push(row);
                }
                let fitted: Vec<f64> = orders.iter().flatten().copied().collect();
                let observed = if fitted.is_empty() {
                    "at_floor"
                } else if fitted.iter().all(|p| *p >= lo && *p <= hi) {
                    "in_band"
                } else {
                    "out_of_band"
                };
                let stationary_expected = base.expect.get(verdict_check(key)).map(String::as_str) == Some("stationary");
                let expected = if !stationary_expected {
                    None
                } else if observed == "at_floor" {
                    Some("at_floor")
                } else {
                    Some("in_band")
                };
                checks.push(sweep_check(
                    format!("{key}/refinement_order"),
                    observed,
                    expected,
                    json!({ "band": [lo, hi], "orders": orders }),
                ));
            }
        }
        Axis::Epsilon => {
            let mut header =
                vec!["report".to_string(), "path".into(), "direction".into(), "mode".into(), "grid".into()];
            header.extend(values.iter().map(|e| format!("eps_{}", fmt_f64(*e))));
            header.push("relative_spread".into());
            table.push(header);
            let per_run: Vec<Vec<(String, StationarityReport)>> = runs.iter().map(|f| reports(&f.outcome)).collect();
            let tol = base.tolerance("linear_response");
            for (ri, (key, first)) in per_run[0].iter().enumerate() {
                let grid = *first.grid_sizes.last().unwrap();
                let mut path_reports = vec![(first.candidate.label.clone(), None)];
                path_reports.extend(
                    first
                        .baselines
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| b.report.is_some())
                        .map(|(i, b)| (b.label.clone(), Some(i))),
                );
                for (label, bi) in path_reports {
                    let pick = |r: &StationarityReport| -> Vec<f64> {
                        let rep = match bi {
                            None => Some(&r.candidate),
                            Some(i) => r.baselines[i].report.as_ref(),
                        };
                        rep.map_or(vec![], |p| p.directions.iter().map(|d| d.final_slope()).collect())
                    };
                    let series: Vec<Vec<f64>> = per_run.iter().map(|r| pick(&r[ri].1)).collect();
                    if series.iter().any(|s| s.len() != series[0].len()) {
                        continue;
                    }
                    let mut worst: f64 = 0.0;
                    for d in 0..series[0].len() {
                        let col: Vec<f64> = series.iter().map(|s| s[d]).collect();
                        let max = col.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
                        let min = col.iter().fold(f64::INFINITY, |a, b| a.min(*b));
                        let scale = col.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                        let spread = if scale > 0.0 { (max - min) / scale } else { 0.0 };
                        worst = worst.max(spread);
                        let mut row = vec![
                            key.clone(),
                            label.clone(),
                            d.to_string(),
                            first.candidate.directions[d].mode.to_string(),
                            grid.to_string(),
                        ];
                        row.extend(col.iter().map(|x| fmt_f64(*x)));
                        row.push(fmt_f64(spread));
                        table.push(row);
                    }
                    if bi.is_some() {
                        // Only baselines expected to carry a nonzero first variation have a response to compare.
                        let usable = base.expect.get(&label).map(String::as_str) == Some("non_stationary");
                        let observed = if worst < tol { "stable" } else { "unstable" };
                        checks.push(sweep_check(
                            format!("{key}/{label}/linear_response"),
                            observed,
                            usable.then_some("stable"),
                            json!({ "max_relative_spread": worst, "tolerance": tol }),
                        ));
                    }
                }
            }
        }
        Axis::Dimension => {
            table.push(vec!["value".into(), "status".into(), "check".into(), "observed".into(), "expected".into()]);
            for (f, v) in runs.iter().zip(values) {
                for c in &f.outcome.checks {
                    table.push(vec![
                        fmt_f64(*v),
                        if f.outcome.agrees() { "agree" } else { "disagree" }.into(),
                        c.name.clone(),
                        c.observed.clone(),
                        c.expected.clone().unwrap_or_default(),
                    ]);
                }
            }
            let all = runs.iter().all(|f| f.outcome.agrees());
            checks.push(sweep_check(
                "all_points_agree".into(),
                if all { "agree" } else { "disagree" },
                Some("agree"),
                json!({ "disagreeing": runs.iter().zip(values).filter(|(f, _)| !f.outcome.agrees()).map(|(_, v)| v).collect::<Vec<_>>() }),
            ));
        }
    }
    SweepSummary { axis, values: values.to_vec(), points, checks, table }
}

/// Runs every sweep point into `<dir>/<axis>_<value>` and writes the combined
/// `sweep.json` and `convergence.csv` into `<dir>`.
pub fn sweep_resolved(
    base: &ResolvedConfig,
    axis: Axis,
    values: &[f64],
    opts: &Options,
) -> Result<SweepSummary, RunError> {
    let dir = PathBuf::from(&base.output_dir);
    let manifest = Manifest::begin(&dir)?;
    let result: Result<SweepSummary, RunError> = (|| {
        let mut runs = vec![];
        for v in values {
            let mut cfg = sweep_point(base, axis, *v)?;
            let label = match axis {
                Axis::Epsilon => fmt_f64(*v),
                _ => format!("{}", *v as usize),
            };
            let sub = dir.join(format!("{}_{label}", axis.name()));
            cfg.output_dir = sub.display().to_string();
            runs.push(execute(&cfg, &sub, opts)?);
        }
        let summary = combine(base, axis, values, &runs);
        output::write_json(
            &dir.join("sweep.json"),
            &json!({
                "artifact": ARTIFACT,
                "version": VERSION,
                "experiment": base.experiment.name(),
                "config": base,
                "status": if summary.agrees() { "agree" } else { "disagree" },
                "sweep": summary,
            }),
        )?;
        let mut w = csv::Writer::from_path(dir.join("convergence.csv")).map_err(|e| RunError::Io(e.to_string()))?;
        for row in &summary.table {
            w.write_record(row).map_err(|e| RunError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(summary)
    })();
    match &result {
        Ok(_) => manifest.complete(&["sweep.json".into(), "convergence.csv".into()])?,
        Err(e) => manifest.fail(&e.to_string())?,
    }
    result
}

pub fn sweep(path: &Path, axis: Axis, values: &str, opts: &Options) -> i32 {
    let result = parse_values(values).map_err(|e| RunError::Config(ConfigError::Invalid(e))).and_then(|vals| {
        let cfg = load_resolved(path, opts)?;
        sweep_resolved(&cfg, axis, &vals, opts)
    });
    match result {
        Ok(s) => {
            for c in &s.checks {
                let mark = match c.agrees {
                    Some(true) => "ok",
                    Some(false) => "DISAGREE",
                    None => "--",
                };
                println!("[{mark}] {}: {}", c.name, c.observed);
            }
            println!("status: {}", if s.agrees() { "agree" } else { "disagree" });
            if s.agrees() {
                EXIT_AGREE
            } else {
                EXIT_DISAGREE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
