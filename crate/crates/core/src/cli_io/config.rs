//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feller::Measure;
use crate::linalg::{Mat2, Vec2};
use crate::model::{ModelError, ModelKind, PhysicalParams};
use crate::montecarlo::{Dynamics, SimConfig};
use crate::scalar::Scalar;

/// Absolute tolerance for the identification equalities on load.
pub const IDENTIFICATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        match e.within("model") {
            ModelError::Constraint { field, message } => ConfigError::Invalid {
                path: field,
                message,
            },
            other => ConfigError::invalid("model", other.to_string()),
        }
    }
}

/// Model section as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_plus_a_hat: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_hat: Option<[f64; 2]>,
    pub alpha: [f64; 2],
    pub beta: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    #[serde(default)]
    pub lambda: [f64; 2],
    #[serde(default)]
    pub omega_pi: f64,
    #[serde(default)]
    pub omega_s: f64,
    #[serde(default)]
    pub nu: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSim {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<Dynamics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub model: RawModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<RawSim>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io: Option<IoConfig>,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub provenance: Option<String>,
    pub model: PhysicalParams<f64>,
    pub sim: SimConfig,
    pub io: IoConfig,
}

fn mat<T: Scalar>(m: [[f64; 2]; 2], conv: impl Fn(f64) -> T) -> Mat2<T> {
    Mat2::new(conv(m[0][0]), conv(m[0][1]), conv(m[1][0]), conv(m[1][1]))
}

fn vec<T: Scalar>(v: [f64; 2], conv: impl Fn(f64) -> T) -> Vec2<T> {
    Vec2::new(conv(v[0]), conv(v[1]))
}

impl RawModel {
    /// Builds parameters, converting each literal with `conv` before any
    /// arithmetic so that exact scalars see the decimal values as written.
    pub fn build<T: Scalar>(
        &self,
        conv: impl Fn(f64) -> T + Copy,
    ) -> Result<PhysicalParams<T>, ConfigError> {
        let a_hat = match (self.i_plus_a_hat, self.a_hat) {
            (Some(m), None) => mat(m, conv) - Mat2::identity(),
            (None, Some(m)) => mat(m, conv),
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid(
                    "model.a_hat",
                    "give either i_plus_a_hat or a_hat, not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::invalid(
                    "model.i_plus_a_hat",
                    "missing drift matrix",
                ))
            }
        };
        let base = PhysicalParams {
            a_hat,
            b_hat: Vec2::zero(),
            alpha: vec(self.alpha, conv),
            beta: mat(self.beta, conv),
            sigma: mat(self.sigma, conv),
            lambda: vec(self.lambda, conv),
            omega_pi: conv(self.omega_pi),
            omega_s: conv(self.omega_s),
            nu0: conv(self.nu[0]),
            nu1: conv(self.nu[1]),
            nu2: conv(self.nu[2]),
            kind: self.kind,
        };
        let params = match (self.equilibrium, self.b_hat) {
            (Some(x), None) => base.with_equilibrium(vec(x, conv)),
            (None, Some(b)) => PhysicalParams {
                b_hat: vec(b, conv),
                ..base
            },
            (Some(_), Some(_)) => {
                return Err(ConfigError::invalid(
                    "model.b_hat",
                    "give either equilibrium or b_hat, not both",
                ))
            }
            (None, None) => {
                return Err(ConfigError::invalid(
                    "model.equilibrium",
                    "missing drift offset",
                ))
            }
        };
        Ok(params)
    }

    /// On-disk form of `p`, using the exact `a_hat`/`b_hat` fields.
    pub fn from_params(p: &PhysicalParams<f64>) -> Self {
        RawModel {
            kind: p.kind,
            i_plus_a_hat: None,
            a_hat: Some(p.a_hat.0),
            equilibrium: None,
            b_hat: Some(p.b_hat.0),
            alpha: p.alpha.0,
            beta: p.beta.0,
            sigma: p.sigma.0,
            lambda: p.lambda.0,
            omega_pi: p.omega_pi,
            omega_s: p.omega_s,
            nu: [p.nu0, p.nu1, p.nu2],
        }
    }
}

impl RawSim {
    fn build(&self) -> Result<SimConfig, ConfigError> {
        let d = SimConfig::default();
        let cfg = SimConfig {
            paths: self.paths.unwrap_or(d.paths),
            horizon: self.horizon.unwrap_or(d.horizon),
            seed: self.seed.unwrap_or(d.seed),
            dynamics: self.dynamics.unwrap_or(d.dynamics),
            measure: self.measure.unwrap_or(d.measure),
            ci_level: self.ci_level.unwrap_or(d.ci_level),
            threads: self.threads.or(d.threads),
        };
        cfg.validate()
            .map_err(|e| ConfigError::invalid(format!("sim.{}", e.field), e.message))?;
        Ok(cfg)
    }
}

impl RawConfig {
    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let model = self.model.build(|v| v)?;
        model.validate(IDENTIFICATION_TOL)?;
        let sim = self.sim.clone().unwrap_or_default().build()?;
        Ok(RunConfig {
            provenance: self.provenance.clone(),
            model,
            sim,
            io: self.io.clone().unwrap_or_default(),
        })
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    raw.build()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
