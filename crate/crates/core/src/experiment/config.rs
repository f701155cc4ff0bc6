use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::entropic_ot::SinkhornOptions;
use crate::losses::LossPair;
use crate::problem::Problem;
use crate::solver::{Method, SolverOptions};
use crate::space::{indicator_cost, power_cost, CostMatrix, CostPair, DiscreteSpace};

/// A configuration file that failed to parse or validate.
#[derive(Debug)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {}", p.display(), self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn field_error(scenario: &str, field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError {
        path: None,
        message: format!("scenario {scenario:?}, field `{field}`: {msg}"),
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Seed for the `random` measure generator.
    #[serde(default)]
    pub seed: Option<u64>,
    pub scenario: Vec<ScenarioSpec>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    /// Number of torus grid points.
    pub n: usize,
    #[serde(default = "default_loss")]
    pub loss: String,
    pub measures: MeasureSpec,
    pub cost: CostSpec,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub sinkhorn: SinkhornSpec,
}

fn default_loss() -> String {
    "logistic".into()
}

/// Class measures on the torus grid. Generators put equal weight on the
/// points of each class support.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    /// `μ₋₁` on `[0, 1/2)`, `μ₁` on `[1/2, 1)`.
    Halves,
    /// `p` alternating intervals of width `1/p`, starting with `μ₋₁`.
    Interleaved { p: usize },
    /// Both classes uniform on the whole grid.
    Uniform,
    /// Weight tables (normalized on load).
    Custom { mu1: Vec<f64>, mum1: Vec<f64> },
    /// Random positive weights drawn from the file or command-line seed.
    Random,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Level {
    Finite(f64),
    /// Only `"inf"` is accepted.
    Named(InfLevel),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
pub enum InfLevel {
    #[serde(rename = "inf")]
    Inf,
}

impl Level {
    pub fn value(self) -> f64 {
        match self {
            Level::Finite(v) => v,
            Level::Named(InfLevel::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostSpec {
    /// `d(x,z)^r` for both classes.
    Power { r: f64 },
    /// `level · 1[d(x,z) > threshold]` for both classes.
    Indicator { threshold: f64, level: Level },
    /// Explicit `N×N` matrices; `cm1` defaults to `c1`.
    Custom {
        c1: Vec<Vec<f64>>,
        cm1: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol_grad: Option<f64>,
    pub max_iter: Option<usize>,
    /// `"lbfgs"` (default) or `"gradient-descent"`.
    pub method: Option<String>,
    pub memory: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SinkhornSpec {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| ConfigError {
        path: None,
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: Some(path.to_owned()),
        message: format!("cannot read file: {e}"),
    })?;
    parse_config(&text).map_err(|mut e| {
        e.path = Some(path.to_owned());
        e
    })
}

impl ConfigFile {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.scenario.is_empty() {
            return Err(ConfigError {
                path: None,
                message: "no [[scenario]] tables".into(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.scenario {
            if !seen.insert(s.id.as_str()) {
                return Err(field_error(&s.id, "id", "duplicate scenario id"));
            }
            s.validate()?;
            // builds every object once so that invalid values surface now
            s.problem(s.eps[0], self.seed.unwrap_or(0))?;
        }
        Ok(())
    }
}

impl ScenarioSpec {
    fn validate(&self) -> Result<(), ConfigError> {
        let id = &self.id;
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(field_error(id, "id", "must be non-empty and use only [A-Za-z0-9_-]"));
        }
        if self.eps.is_empty() {
            return Err(field_error(id, "eps", "list is empty"));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(field_error(id, "eps", format!("{e} is not strictly positive")));
        }
        if let MeasureSpec::Interleaved { p } = self.measures {
            if p < 2 || p % 2 != 0 {
                return Err(field_error(
                    id,
                    "measures.p",
                    format!("must be an even number >= 2, got {p}"),
                ));
            }
        }
        self.solver_options().map(|_| ())
    }

    pub fn solver_options(&self) -> Result<SolverOptions, ConfigError> {
        let mut opts = SolverOptions::default();
        if let Some(t) = self.solver.tol_grad {
            if !(t > 0.0) {
                return Err(field_error(&self.id, "solver.tol_grad", "must be positive"));
            }
            opts.tol_grad = t;
        }
        if let Some(k) = self.solver.max_iter {
            opts.max_iter = k;
        }
        opts.method = match self.solver.method.as_deref() {
            None | Some("lbfgs") => Method::Lbfgs {
                memory: self.solver.memory.unwrap_or(10),
            },
            Some("gradient-descent") => Method::GradientDescent,
            Some(other) => {
                return Err(field_error(
                    &self.id,
                    "solver.method",
                    format!("unknown method {other:?}"),
                ))
            }
        };
        if matches!(opts.method, Method::Lbfgs { memory: 0 }) {
            return Err(field_error(&self.id, "solver.memory", "must be at least 1"));
        }
        let mut sk = SinkhornOptions::default();
        if let Some(t) = self.sinkhorn.tol {
            if !(t > 0.0) {
                return Err(field_error(&self.id, "sinkhorn.tol", "must be positive"));
            }
            sk.tol = t;
        }
        if let Some(k) = self.sinkhorn.max_iter {
            sk.max_iter = k;
        }
        opts.sinkhorn = sk;
        Ok(opts)
    }

    pub fn space(&self) -> Result<DiscreteSpace, ConfigError> {
        DiscreteSpace::torus(self.n).map_err(|e| field_error(&self.id, "n", e))
    }

    /// `(μ₁, μ₋₁)` as probability vectors on the grid.
    pub fn measures(&self, seed: u64) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        let n = self.n;
        let by_interval = |p: usize| {
            let neg: Vec<bool> = (0..n).map(|k| (k * p / n).is_multiple_of(2)).collect();
            let mum1 = normalize(neg.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
            let mu1 = normalize(neg.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect());
            (mu1, mum1)
        };
        let (mu1, mum1) = match &self.measures {
            MeasureSpec::Halves => by_interval(2),
            MeasureSpec::Interleaved { p } => by_interval(*p),
            MeasureSpec::Uniform => (vec![1.0 / n as f64; n], vec![1.0 / n as f64; n]),
            MeasureSpec::Custom { mu1, mum1 } => {
                for (name, w) in [("measures.mu1", mu1), ("measures.mum1", mum1)] {
                    if w.len() != n {
                        return Err(field_error(
                            &self.id,
                            name,
                            format!("has {} entries, expected {n}", w.len()),
                        ));
                    }
                    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || w.iter().sum::<f64>() <= 0.0 {
                        return Err(field_error(
                            &self.id,
                            name,
                            "weights must be nonnegative with positive total",
                        ));
                    }
                }
                (normalize(mu1.clone()), normalize(mum1.clone()))
            }
            MeasureSpec::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mu1 = normalize((0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
                let mum1 = normalize((0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
                (mu1, mum1)
            }
        };
        if mu1.iter().any(|v| v.is_nan()) || mum1.iter().any(|v| v.is_nan()) {
            return Err(field_error(
                &self.id,
                "measures",
                "a class has empty support on this grid",
            ));
        }
        Ok((mu1, mum1))
    }

    pub fn costs(&self, space: &DiscreteSpace) -> Result<CostPair, ConfigError> {
        let id = &self.id;
        Ok(match &self.cost {
            CostSpec::Power { r } => {
                CostPair::symmetric(power_cost(space, *r).map_err(|e| field_error(id, "cost.r", e))?)
            }
            CostSpec::Indicator { threshold, level } => CostPair::symmetric(
                indicator_cost(space, *threshold, level.value()).map_err(|e| field_error(id, "cost", e))?,
            ),
            CostSpec::Custom { c1, cm1 } => {
                let matrix = |name: &str, rows: &Vec<Vec<f64>>| -> Result<CostMatrix, ConfigError> {
                    if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                        return Err(field_error(id, name, format!("must be a {0}x{0} table", self.n)));
                    }
                    CostMatrix::from_row_major(self.n, rows.concat()).map_err(|e| field_error(id, name, e))
                };
                let c1 = matrix("cost.c1", c1)?;
                let cm1 = match cm1 {
                    Some(rows) => matrix("cost.cm1", rows)?,
                    None => c1.clone(),
                };
                CostPair::new(c1, cm1).map_err(|e| field_error(id, "cost", e))?
            }
        })
    }

    pub fn losses(&self) -> Result<LossPair, ConfigError> {
        LossPair::from_name(&self.loss).map_err(|e| field_error(&self.id, "loss", e))
    }

    pub fn problem(&self, eps: f64, seed: u64) -> Result<Problem, ConfigError> {
        let space = self.space()?;
        let costs = self.costs(&space)?;
        let (mu1, mum1) = self.measures(seed)?;
        Problem::new(space, costs, self.losses()?, mu1, mum1, eps).map_err(|e| field_error(&self.id, "scenario", e))
    }
}

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}
