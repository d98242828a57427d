//! JSON run configurations. Unknown fields are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use hkgf::descent::{EstimatorConfig, LogisticData, LogisticPotential};
use hkgf::flow::{FlowConfig, MassDynamics};
use hkgf::geometry::ScanSampler;
use hkgf::{Cotangent, GaussianTarget, ScaledGaussian};

use crate::error::{CliError, CliResult};

/// Parses `path`, reporting schema errors with the JSON path of the offending field.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let at = if at == "." { String::new() } else { format!("at `{at}`: ") };
        CliError::config(path, format!("{at}{}", e.inner()))
    })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub n: usize,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    /// CSV with columns x_1..x_d, y; relative paths resolve against the config file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticData>,
    pub reg_lambda: f64,
    #[serde(default)]
    pub include_intercept: bool,
    #[serde(default)]
    pub prior_precision: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Gaussian(GaussianTarget<f64>),
    Logistic(LogisticConfig),
}

pub enum Target {
    Gaussian(GaussianTarget<f64>),
    Logistic(LogisticPotential),
}

impl TargetConfig {
    pub fn build(&self, config_path: &Path) -> CliResult<Target> {
        match self {
            TargetConfig::Gaussian(t) => Ok(Target::Gaussian(t.clone())),
            TargetConfig::Logistic(lc) => {
                let data = match (&lc.data, &lc.synthetic) {
                    (Some(p), None) => {
                        let p = config_path.parent().map_or(p.clone(), |dir| dir.join(p));
                        if !p.exists() {
                            return Err(CliError::config(config_path, format!("dataset {} not found", p.display())));
                        }
                        LogisticData::from_csv(&p).map_err(|e| CliError::config(config_path, e.to_string()))?
                    }
                    (None, Some(s)) => LogisticData::synthetic(s.n, &s.theta, s.intercept, s.seed)?,
                    _ => {
                        return Err(CliError::config(
                            config_path,
                            "logistic target needs exactly one of `data` and `synthetic`",
                        ))
                    }
                };
                let pot = LogisticPotential::new(data, lc.reg_lambda, lc.include_intercept, lc.prior_precision)
                    .map_err(|e| CliError::config(config_path, e.to_string()))?;
                Ok(Target::Logistic(pot))
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRun {
    pub target: TargetConfig,
    pub start: ScaledGaussian<f64>,
    pub flow: FlowConfig,
    #[serde(default)]
    pub mass: MassDynamics,
    /// Expectation estimator for non-Gaussian targets.
    #[serde(default)]
    pub estimator: Option<EstimatorConfig>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentRun {
    pub target: TargetConfig,
    pub start: ScaledGaussian<f64>,
    pub descent: hkgf::descent::DescentConfig,
    /// Also run the reaction-only and transport-only descents and write the KL curves side by side.
    #[serde(default)]
    pub compare: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayRun {
    pub target: GaussianTarget<f64>,
    pub start: ScaledGaussian<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
}

fn default_record() -> usize {
    10
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRun {
    pub target: GaussianTarget<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub sampler: Option<ScanSampler>,
    #[serde(default)]
    pub seed: u64,
    /// Energies at which to report the sublevel radius bounds.
    #[serde(default)]
    pub sublevel_energies: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicRun {
    pub start: ScaledGaussian<f64>,
    pub costate: Cotangent<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub ds: f64,
    pub n_steps: usize,
    /// Pin the mass to one and drop the mass costate.
    #[serde(default)]
    pub normalized: bool,
    /// Optional target; when present the relative entropy is recorded along the path.
    #[serde(default)]
    pub target: Option<GaussianTarget<f64>>,
}
