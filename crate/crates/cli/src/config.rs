//! Experiment configuration: a TOML document with a fixed key set.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specbayes::geometry::{
    ar2_triangle_grid, ConstantField, ExpQuadraticField, PowerAffineField, QuadraticPowerField, ScalarField, TOL_SUPER,
};
use specbayes::linalg::Matrix;
use specbayes::posterior::ExpansionRoute;
use specbayes::risk::{Estimator, RepsRule, RiskConfig};
use specbayes::{Model, SigmaPolicy, Theta};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub theta0: Vec<f64>,
    pub model: ModelSpec,
    #[serde(default)]
    pub numerics: RiskConfig,
    /// Named prior factors `h`, referenced by jobs.
    #[serde(default)]
    pub h: BTreeMap<String, FieldSpec>,
    pub jobs: Vec<JobSpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: usize,
    pub q: usize,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaPolicy<f64>,
}

fn default_sigma() -> SigmaPolicy<f64> {
    SigmaPolicy::Fixed(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `(intercept + slopes·θ)^power`
    PowerAffine {
        intercept: f64,
        slopes: Vec<f64>,
        #[serde(default = "one")]
        power: f64,
    },
    /// `(constant + linear·θ + ½θᵀQθ)^power`
    QuadraticPower {
        constant: f64,
        linear: Vec<f64>,
        quadratic: Vec<Vec<f64>>,
        #[serde(default = "one")]
        power: f64,
    },
    /// `exp(constant + linear·θ + ½θᵀQθ)`
    ExpQuadratic {
        #[serde(default)]
        constant: f64,
        linear: Vec<f64>,
        quadratic: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }

    fn build(&self, k: usize, key: &str) -> Result<Arc<dyn ScalarField<f64>>> {
        let vec_len = |v: &[f64], what: &str| {
            if v.len() == k {
                Ok(())
            } else {
                Err(CliError::config(format!("{key}.{what}"), format!("expected {k} entries, found {}", v.len())))
            }
        };
        let matrix = |rows: &[Vec<f64>]| {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(CliError::config(format!("{key}.quadratic"), format!("expected a {k}×{k} matrix")));
            }
            let m = Matrix::from_rows(rows);
            if !m.is_symmetric(0.0) {
                return Err(CliError::config(format!("{key}.quadratic"), "matrix must be symmetric"));
            }
            Ok(m)
        };
        Ok(match self {
            Self::Constant { value } => {
                if !(*value > 0.0) {
                    return Err(CliError::config(format!("{key}.value"), "must be positive"));
                }
                Arc::new(ConstantField(*value))
            }
            Self::PowerAffine { intercept, slopes, power } => {
                vec_len(slopes, "slopes")?;
                Arc::new(PowerAffineField { intercept: *intercept, slopes: slopes.clone(), power: *power })
            }
            Self::QuadraticPower { constant, linear, quadratic, power } => {
                vec_len(linear, "linear")?;
                Arc::new(QuadraticPowerField {
                    constant: *constant,
                    linear: linear.clone(),
                    quadratic: matrix(quadratic)?,
                    power: *power,
                })
            }
            Self::ExpQuadratic { constant, linear, quadratic } => {
                vec_len(linear, "linear")?;
                Arc::new(ExpQuadraticField { constant: *constant, linear: linear.clone(), quadratic: matrix(quadratic)? })
            }
        })
    }
}

/// Nodes on which a superharmonicity check runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    /// AR(2) only.
    Ar2Triangle { per_axis: usize, clearance: f64 },
    /// Tensor grid over `[lower, upper]`; nodes outside the validated region
    /// are dropped.
    Box { lower: Vec<f64>, upper: Vec<f64>, per_axis: usize },
}

impl GridSpec {
    fn nodes(&self, model: &Model, key: &str) -> Result<Vec<Vec<f64>>> {
        let k = model.dim();
        let nodes = match self {
            Self::Ar2Triangle { per_axis, clearance } => {
                if model.p() != 2 || model.q() != 0 || k != 2 {
                    return Err(CliError::config(key, "ar2-triangle needs an AR(2) model with fixed σ²"));
                }
                if *per_axis < 2 {
                    return Err(CliError::config(format!("{key}.per_axis"), "must be at least 2"));
                }
                ar2_triangle_grid(*per_axis, *clearance)
            }
            Self::Box { lower, upper, per_axis } => {
                if lower.len() != k || upper.len() != k {
                    return Err(CliError::config(key, format!("lower and upper need {k} entries")));
                }
                if *per_axis < 2 {
                    return Err(CliError::config(format!("{key}.per_axis"), "must be at least 2"));
                }
                let total = per_axis.checked_pow(k as u32).filter(|t| *t <= 1_000_000);
                let Some(total) = total else {
                    return Err(CliError::config(format!("{key}.per_axis"), "grid exceeds 10⁶ nodes"));
                };
                (0..total)
                    .map(|mut idx| {
                        (0..k)
                            .map(|d| {
                                let i = idx % per_axis;
                                idx /= per_axis;
                                lower[d] + (upper[d] - lower[d]) * i as f64 / (*per_axis - 1) as f64
                            })
                            .collect::<Vec<f64>>()
                    })
                    .filter(|c| model.validate(c).is_ok())
                    .collect()
            }
        };
        if nodes.is_empty() {
            return Err(CliError::config(key, "grid has no valid nodes"));
        }
        Ok(nodes)
    }
}

/// A prior: `"jeffreys"` or the name of an `h` entry (meaning `π_J·h`).
pub type PriorName = String;

pub const JEFFREYS: &str = "jeffreys";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JobSpec {
    /// Metric, skewness and Jeffreys density at a list of points.
    GeometryTable {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        /// Defaults to `[theta0]`.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        points: Vec<Vec<f64>>,
    },
    SuperharmonicCheck {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        h: String,
        grid: GridSpec,
        #[serde(default = "default_tol_super")]
        tol: f64,
    },
    /// Monte Carlo mean of `θ̂ − θ₀` against the analytic bias.
    BiasCheck {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        n: usize,
        reps: usize,
        #[serde(default = "default_z")]
        z: f64,
    },
    DominanceExperiment {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        h: String,
        /// Nodes of the superharmonicity precondition.
        grid: GridSpec,
        n_grid: Vec<usize>,
        #[serde(default)]
        reps: RepsRule,
        #[serde(default = "default_estimator")]
        estimator: Estimator,
        #[serde(default = "default_tol_super")]
        tol: f64,
        /// Required t-statistic of the difference at every n.
        #[serde(default = "default_min_t")]
        min_t: f64,
        /// Bound on |t| when `h` is constant.
        #[serde(default = "default_z")]
        null_max_t: f64,
        /// Width of the n²·difference consistency band in standard errors.
        #[serde(default = "default_z")]
        band_sigmas: f64,
        /// Replications per cell re-run with the quadrature oracle.
        #[serde(default)]
        oracle_audit_reps: usize,
    },
    ExpansionVsOracle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_prior")]
        prior: PriorName,
        #[serde(default = "default_route")]
        route: ExpansionRoute,
        n_grid: Vec<usize>,
        reps: usize,
        #[serde(default = "default_omega_nodes")]
        omega_nodes: usize,
        /// Required log-log slope of the mean gap against n.
        #[serde(default = "default_max_slope")]
        max_slope: f64,
    },
}

fn default_tol_super() -> f64 {
    TOL_SUPER
}
fn default_z() -> f64 {
    3.0
}
fn default_min_t() -> f64 {
    2.0
}
fn default_estimator() -> Estimator {
    Estimator::ExpansionGeometric
}
fn default_prior() -> PriorName {
    JEFFREYS.into()
}
fn default_route() -> ExpansionRoute {
    ExpansionRoute::Likelihood
}
fn default_omega_nodes() -> usize {
    64
}
fn default_max_slope() -> f64 {
    -1.3
}

impl JobSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::GeometryTable { .. } => "geometry-table",
            Self::SuperharmonicCheck { .. } => "superharmonic-check",
            Self::BiasCheck { .. } => "bias-check",
            Self::DominanceExperiment { .. } => "dominance-experiment",
            Self::ExpansionVsOracle { .. } => "expansion-vs-oracle",
        }
    }

    fn explicit_name(&self) -> Option<&str> {
        match self {
            Self::GeometryTable { name, .. }
            | Self::SuperharmonicCheck { name, .. }
            | Self::BiasCheck { name, .. }
            | Self::DominanceExperiment { name, .. }
            | Self::ExpansionVsOracle { name, .. } => name.as_deref(),
        }
    }

    /// Output file stem; `NN-kind` when no name is given.
    pub fn name(&self, index: usize) -> String {
        self.explicit_name().map_or_else(|| format!("{index:02}-{}", self.kind()), str::to_owned)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_owned();
            let key = backticked(&message).unwrap_or_else(|| "<document>".into());
            CliError::config(key, e.to_string().trim_end())
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Serialize(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, defaults included.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Checks every key and builds the model, `θ₀` and the named fields.
    pub fn validate(&self) -> Result<Validated> {
        let model = Model::arma(self.model.p, self.model.q, self.model.sigma)
            .map_err(|e| CliError::config("model", e.to_string()))?;
        let k = model.dim();
        if self.theta0.len() != k {
            return Err(CliError::config("theta0", format!("expected {k} coordinates, found {}", self.theta0.len())));
        }
        let theta0 = model.validate(&self.theta0).map_err(|e| CliError::config("theta0", e.to_string()))?;
        if self.jobs.is_empty() {
            return Err(CliError::config("jobs", "no jobs configured"));
        }
        let mut fields = BTreeMap::new();
        for (name, spec) in &self.h {
            if name == JEFFREYS {
                return Err(CliError::config(format!("h.{name}"), "name is reserved"));
            }
            fields.insert(name.clone(), spec.build(k, &format!("h.{name}"))?);
        }
        let mut names = BTreeSet::new();
        let mut jobs = Vec::with_capacity(self.jobs.len());
        for (i, job) in self.jobs.iter().enumerate() {
            let key = format!("jobs[{i}]");
            let name = job.name(i);
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(CliError::config(format!("{key}.name"), "must be a plain file stem"));
            }
            if !names.insert(name.clone()) {
                return Err(CliError::config(format!("{key}.name"), format!("duplicate job name `{name}`")));
            }
            jobs.push(self.validate_job(job, &key, &model, &fields)?);
        }
        Ok(Validated { model, theta0, fields, jobs })
    }

    fn validate_job(
        &self,
        job: &JobSpec,
        key: &str,
        model: &Model,
        fields: &BTreeMap<String, Arc<dyn ScalarField<f64>>>,
    ) -> Result<JobInputs> {
        let k = model.dim();
        let field = |h: &str| {
            if fields.contains_key(h) {
                Ok(())
            } else {
                Err(CliError::config(format!("{key}.h"), format!("no `h.{h}` entry")))
            }
        };
        let n_grid = |grid: &[usize]| {
            let nk = format!("{key}.n_grid");
            if grid.is_empty() {
                return Err(CliError::config(nk, "must list at least one sample size"));
            }
            if let Some(n) = grid.iter().find(|&&n| n < 2 * k + 8) {
                return Err(CliError::config(nk, format!("sample size {n} is below {}", 2 * k + 8)));
            }
            let set: BTreeSet<_> = grid.iter().collect();
            if set.len() != grid.len() {
                return Err(CliError::config(nk, "sample sizes must be distinct"));
            }
            Ok(())
        };
        let reps = |r: usize, what: &str| {
            if r < 2 {
                Err(CliError::config(format!("{key}.{what}"), "must be at least 2"))
            } else {
                Ok(())
            }
        };
        Ok(match job {
            JobSpec::GeometryTable { points, .. } => {
                let points = if points.is_empty() { vec![self.theta0.clone()] } else { points.clone() };
                let validated = points
                    .iter()
                    .enumerate()
                    .map(|(j, p)| model.validate(p).map_err(|e| CliError::config(format!("{key}.points[{j}]"), e.to_string())))
                    .collect::<Result<Vec<Theta>>>()?;
                JobInputs::Points(validated)
            }
            JobSpec::SuperharmonicCheck { h, grid, .. } => {
                field(h)?;
                JobInputs::Grid(grid.nodes(model, &format!("{key}.grid"))?)
            }
            JobSpec::BiasCheck { n, reps: r, z, .. } => {
                n_grid(&[*n]).map_err(|_| CliError::config(format!("{key}.n"), format!("must be at least {}", 2 * k + 8)))?;
                reps(*r, "reps")?;
                positive(*z, &format!("{key}.z"))?;
                JobInputs::None
            }
            JobSpec::DominanceExperiment { h, grid, n_grid: g, reps: rule, min_t, null_max_t, band_sigmas, oracle_audit_reps, estimator, .. } => {
                field(h)?;
                n_grid(g)?;
                match *rule {
                    RepsRule::Fixed { reps: r } => reps(r, "reps.reps")?,
                    RepsRule::Pilot { pilot, target_t, min, max } => {
                        reps(pilot, "reps.pilot")?;
                        positive(target_t, &format!("{key}.reps.target_t"))?;
                        if min > max {
                            return Err(CliError::config(format!("{key}.reps"), "min exceeds max"));
                        }
                    }
                }
                positive(*min_t, &format!("{key}.min_t"))?;
                positive(*null_max_t, &format!("{key}.null_max_t"))?;
                positive(*band_sigmas, &format!("{key}.band_sigmas"))?;
                if *oracle_audit_reps == 1 {
                    return Err(CliError::config(format!("{key}.oracle_audit_reps"), "must be 0 or at least 2"));
                }
                if (*oracle_audit_reps > 0 || *estimator == Estimator::Oracle) && k > 3 {
                    return Err(CliError::config(format!("{key}.oracle_audit_reps"), "the oracle supports at most 3 parameters"));
                }
                JobInputs::Grid(grid.nodes(model, &format!("{key}.grid"))?)
            }
            JobSpec::ExpansionVsOracle { prior, n_grid: g, reps: r, omega_nodes, .. } => {
                if prior != JEFFREYS && !fields.contains_key(prior) {
                    return Err(CliError::config(format!("{key}.prior"), format!("`{prior}` is neither `jeffreys` nor an `h` entry")));
                }
                n_grid(g)?;
                if g.len() < 2 {
                    return Err(CliError::config(format!("{key}.n_grid"), "a slope needs at least two sample sizes"));
                }
                reps(*r, "reps")?;
                if *omega_nodes < 2 {
                    return Err(CliError::config(format!("{key}.omega_nodes"), "must be at least 2"));
                }
                if k > 3 {
                    return Err(CliError::config("model", "the oracle supports at most 3 parameters"));
                }
                JobInputs::None
            }
        })
    }
}

fn positive(v: f64, key: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(key, "must be positive and finite"))
    }
}

fn backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_owned())
}

/// Objects built from a validated config.
pub struct Validated {
    pub model: Model,
    pub theta0: Theta,
    pub fields: BTreeMap<String, Arc<dyn ScalarField<f64>>>,
    /// Per-job inputs in job order.
    pub jobs: Vec<JobInputs>,
}

pub enum JobInputs {
    None,
    Points(Vec<Theta>),
    Grid(Vec<Vec<f64>>),
}
