use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::config::{ConfigError, ConfigFile, ScenarioSpec};
use crate::error::Error;
use crate::solver::{adversary_densities, certify, descend, SolveReport};

pub const CLASSIFIER_HEADER: [&str; 4] = ["z", "h", "nu1", "nu_m1"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "scenario",
    "eps",
    "value_eps",
    "dual_eps",
    "gap_eps",
    "upper_T0",
    "lower_unreg",
    "iters",
    "grad_norm",
];
pub const STUDY_HEADER: [&str; 6] = ["eps", "value_eps", "upper_T0", "lower_unreg", "bracket_width", "ratio"];

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub eps: Option<Vec<f64>>,
    pub tol_grad: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
}

/// One solved `(scenario, ε)` pair. Densities are with respect to `m`.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario: String,
    pub eps: f64,
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub nu1: Vec<f64>,
    pub num1: Vec<f64>,
    pub report: SolveReport,
    pub wall_time: Duration,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(io::Error),
    Solver {
        scenario: String,
        eps: f64,
        source: Error,
    },
    /// Some runs failed to converge; their last iterates were written with a
    /// `.partial.csv` suffix.
    Incomplete {
        completed: Vec<RunRecord>,
        failed: Vec<(String, f64, Error)>,
    },
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
            RunError::Solver { scenario, eps, source } => write!(f, "scenario {scenario:?} at eps={eps}: {source}"),
            RunError::Incomplete { failed, .. } => {
                write!(f, "{} run(s) did not converge:", failed.len())?;
                for (s, e, err) in failed {
                    write!(f, "\n  {s} eps={e}: {err}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for RunError {}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn eps_tag(eps: f64) -> String {
    format!("{eps}")
}

fn classifier_path(out_dir: &Path, scenario: &str, eps: f64, partial: bool) -> PathBuf {
    let suffix = if partial { ".partial.csv" } else { ".csv" };
    out_dir.join(format!("{scenario}_eps{}{suffix}", eps_tag(eps)))
}

fn eps_list<'a>(spec: &'a ScenarioSpec, overrides: &'a Overrides) -> &'a [f64] {
    overrides.eps.as_deref().unwrap_or(&spec.eps)
}

fn apply_overrides(spec: &ScenarioSpec, overrides: &Overrides) -> Result<crate::solver::SolverOptions, ConfigError> {
    let mut opts = spec.solver_options()?;
    if let Some(t) = overrides.tol_grad {
        opts.tol_grad = t;
    }
    if let Some(k) = overrides.max_iter {
        opts.max_iter = k;
    }
    Ok(opts)
}

/// Solves one scenario at one regularization level.
pub fn solve_one(spec: &ScenarioSpec, eps: f64, seed: u64, overrides: &Overrides) -> Result<RunRecord, RunError> {
    let problem = spec.problem(eps, seed)?;
    let opts = apply_overrides(spec, overrides)?;
    let started = Instant::now();
    let wrap = |source: Error| RunError::Solver {
        scenario: spec.id.clone(),
        eps,
        source,
    };
    let descent = descend(&problem, &opts).map_err(wrap)?;
    let report = certify(&problem, &descent, opts.sinkhorn).map_err(wrap)?;
    let profile = adversary_densities(&descent.classifier.h, &problem).map_err(wrap)?;
    Ok(RunRecord {
        scenario: spec.id.clone(),
        eps,
        z: problem.space().points().to_vec(),
        h: descent.classifier.h.to_vec(),
        nu1: profile.nu1.to_vec(),
        num1: profile.num1.to_vec(),
        report,
        wall_time: started.elapsed(),
    })
}

pub fn write_classifier_csv(path: &Path, z: &[f64], h: &[f64], nu1: &[f64], num1: &[f64]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CLASSIFIER_HEADER)?;
    for k in 0..z.len() {
        w.write_record([num(z[k]), num(h[k]), num(nu1[k]), num(num1[k])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, records: &[RunRecord]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in records {
        let s = &r.report;
        w.write_record([
            r.scenario.clone(),
            num(r.eps),
            num(s.value_eps),
            num(s.dual_eps),
            num(s.gap_eps),
            num(s.upper_t0),
            num(s.lower_unreg),
            s.iterations.to_string(),
            num(s.grad_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the last iterate of a failed run so it can be inspected.
fn write_partial(spec: &ScenarioSpec, eps: f64, seed: u64, h: &[f64], out_dir: &Path) -> Result<(), RunError> {
    let problem = spec.problem(eps, seed)?;
    let profile = adversary_densities(h, &problem).map_err(|source| RunError::Solver {
        scenario: spec.id.clone(),
        eps,
        source,
    })?;
    write_classifier_csv(
        &classifier_path(out_dir, &spec.id, eps, true),
        problem.space().points(),
        h,
        &profile.nu1,
        &profile.num1,
    )
}

/// Runs every `(scenario, ε)` pair of a configuration, writing one
/// classifier CSV per run and `summary.csv` at the end.
pub fn run_scenarios(cfg: &ConfigFile, overrides: &Overrides) -> Result<Vec<RunRecord>, RunError> {
    let out_dir = output_dir(cfg, overrides);
    fs::create_dir_all(&out_dir)?;
    let seed = overrides.seed.or(cfg.seed).unwrap_or(0);
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for spec in &cfg.scenario {
        for &eps in eps_list(spec, overrides) {
            match run_scenario(spec, eps, seed, overrides, &out_dir) {
                Ok(record) => records.push(record),
                Err(RunError::Solver { scenario, eps, source }) => {
                    if let Error::Convergence { last: Some(h), .. } = &source {
                        write_partial(spec, eps, seed, h, &out_dir)?;
                    }
                    failed.push((scenario, eps, source));
                }
                Err(other) => return Err(other),
            }
        }
    }
    write_summary_csv(&out_dir.join("summary.csv"), &records)?;
    if failed.is_empty() {
        Ok(records)
    } else {
        Err(RunError::Incomplete {
            completed: records,
            failed,
        })
    }
}

/// Solves one `(scenario, ε)` pair and writes its classifier CSV.
pub fn run_scenario(
    spec: &ScenarioSpec,
    eps: f64,
    seed: u64,
    overrides: &Overrides,
    out_dir: &Path,
) -> Result<RunRecord, RunError> {
    let record = solve_one(spec, eps, seed, overrides)?;
    write_classifier_csv(
        &classifier_path(out_dir, &spec.id, eps, false),
        &record.z,
        &record.h,
        &record.nu1,
        &record.num1,
    )?;
    Ok(record)
}

fn output_dir(cfg: &ConfigFile, overrides: &Overrides) -> PathBuf {
    overrides
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub eps: f64,
    pub value_eps: f64,
    pub upper_t0: f64,
    pub lower_unreg: f64,
    pub bracket_width: f64,
    /// `(upper_T0 − value_eps) / (ε log(1/ε))`.
    pub ratio: f64,
}

/// Solves one scenario along a decreasing list of `ε < 1` and tabulates the
/// softmax-to-max gap against the `ε log(1/ε)` rate.
pub fn convergence_study(
    spec: &ScenarioSpec,
    eps: &[f64],
    seed: u64,
    overrides: &Overrides,
) -> Result<Vec<StudyRow>, RunError> {
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ConfigError {
            path: None,
            message: format!(
                "scenario {:?}, field `eps`: study needs a strictly decreasing list",
                spec.id
            ),
        }
        .into());
    }
    if eps.iter().any(|&e| !(e < 1.0)) {
        return Err(ConfigError {
            path: None,
            message: format!("scenario {:?}, field `eps`: study needs every eps < 1", spec.id),
        }
        .into());
    }
    eps.iter()
        .map(|&e| {
            let r = solve_one(spec, e, seed, overrides)?.report;
            Ok(StudyRow {
                eps: e,
                value_eps: r.value_eps,
                upper_t0: r.upper_t0,
                lower_unreg: r.lower_unreg,
                bracket_width: r.upper_t0 - r.lower_unreg,
                ratio: (r.upper_t0 - r.value_eps) / (e * (1.0 / e).ln()),
            })
        })
        .collect()
}

/// Runs [`convergence_study`] for every scenario, writing `study_<id>.csv`.
pub fn run_studies(cfg: &ConfigFile, overrides: &Overrides) -> Result<Vec<(String, Vec<StudyRow>)>, RunError> {
    let out_dir = output_dir(cfg, overrides);
    fs::create_dir_all(&out_dir)?;
    let seed = overrides.seed.or(cfg.seed).unwrap_or(0);
    let mut all = Vec::new();
    for spec in &cfg.scenario {
        let rows = convergence_study(spec, eps_list(spec, overrides), seed, overrides)?;
        let mut w = csv::Writer::from_path(out_dir.join(format!("study_{}.csv", spec.id)))?;
        w.write_record(STUDY_HEADER)?;
        for r in &rows {
            w.write_record([r.eps, r.value_eps, r.upper_t0, r.lower_unreg, r.bracket_width, r.ratio].map(num))?;
        }
        w.flush()?;
        all.push((spec.id.clone(), rows));
    }
    Ok(all)
}
