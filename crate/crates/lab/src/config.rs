//! Experiment configuration: one JSON document per run.

use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tasep_core::estimators::{Lattice, SurvivalSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Current,
    Survival,
    FirstOrder,
    Sandwich,
    Profile,
    OracleCheck,
    ProjectionCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Current => "current",
            Subcommand::Survival => "survival",
            Subcommand::FirstOrder => "first-order",
            Subcommand::Sandwich => "sandwich",
            Subcommand::Profile => "profile",
            Subcommand::OracleCheck => "oracle-check",
            Subcommand::ProjectionCheck => "projection-check",
        }
    }
}

/// All fields are optional in the file; each subcommand requires or
/// defaults what it uses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_far: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lattice_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_line: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// Invalid configuration, reported with exit status 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            field: Some(field.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "field `{field}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses a config file. A run manifest is accepted too: its `config`
/// member is used.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError {
        field: None,
        message: format!("not valid JSON: {e}"),
    })?;
    if let Some(inner) = value.get_mut("config").filter(|v| v.is_object()) {
        value = inner.take();
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let field = if path == "." {
            inner
                .split('`')
                .nth(1)
                .map(str::to_string)
        } else {
            Some(path)
        };
        ConfigError {
            field,
            message: inner,
        }
    })
}

fn check(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::field(field, message()))
    }
}

impl ExperimentConfig {
    pub fn lambda(&self) -> Result<f64, ConfigError> {
        let l = self
            .lambda
            .ok_or_else(|| ConfigError::field("lambda", "missing required field"))?;
        check((0.0..0.5).contains(&l), "lambda", || format!("{l} not in [0, 1/2)"))?;
        Ok(l)
    }

    /// Entry rate and perturbation with `lambda + epsilon < 1/2`.
    pub fn rates(&self) -> Result<(f64, f64), ConfigError> {
        let l = self.lambda()?;
        let e = self.epsilon.unwrap_or(0.0);
        check(e >= 0.0 && l + e < 0.5, "epsilon", || {
            format!("{e} must be nonnegative with lambda + epsilon < 1/2")
        })?;
        Ok((l, e))
    }

    pub fn classes(&self, default: u16) -> Result<u16, ConfigError> {
        let k = self.classes.unwrap_or(default);
        check(k >= 1, "classes", || "at least one class is needed".into())?;
        Ok(k)
    }

    pub fn burn_in(&self, default: f64) -> Result<f64, ConfigError> {
        let b = self.burn_in.unwrap_or(default);
        check(b >= 0.0 && b.is_finite(), "burn_in", || format!("{b} must be finite and >= 0"))?;
        Ok(b)
    }

    pub fn horizon(&self, default: f64) -> Result<f64, ConfigError> {
        let h = self.horizon.unwrap_or(default);
        check(h > 0.0 && h.is_finite(), "horizon", || format!("{h} must be finite and > 0"))?;
        Ok(h)
    }

    pub fn replicas(&self, default: usize) -> Result<usize, ConfigError> {
        let r = self.replicas.unwrap_or(default);
        check(r >= 2, "replicas", || "at least two replicas are needed".into())?;
        Ok(r)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn lattice(&self) -> Result<Lattice, ConfigError> {
        if self.half_line.unwrap_or(false) {
            return Ok(Lattice::HalfLine);
        }
        let len = self.lattice_len.unwrap_or(512);
        check(len >= 2, "L", || "the lattice needs at least two sites".into())?;
        let rho = self.reservoir_density.unwrap_or(0.0);
        check((0.0..=1.0).contains(&rho), "reservoir_density", || format!("{rho} not in [0, 1]"))?;
        Ok(Lattice::Open {
            len,
            reservoir_density: rho,
        })
    }

    pub fn eps_grid(&self, lambda: f64) -> Result<Vec<f64>, ConfigError> {
        let grid = self.eps_grid.clone().unwrap_or_else(|| vec![0.01, 0.02, 0.04]);
        check(grid.len() >= 3, "eps_grid", || "at least three points are needed".into())?;
        for &e in &grid {
            check(e > 0.0 && lambda + e < 0.5, "eps_grid", || {
                format!("{e} outside (0, 1/2 - lambda)")
            })?;
        }
        Ok(grid)
    }

    pub fn survival_spec(&self) -> Result<SurvivalSpec, ConfigError> {
        let l = self
            .lambda
            .ok_or_else(|| ConfigError::field("lambda", "missing required field"))?;
        check((0.0..=0.5).contains(&l), "lambda", || format!("{l} not in [0, 1/2]"))?;
        let x_far = self.x_far.unwrap_or(200);
        check(x_far >= 10, "x_far", || "must be at least 10".into())?;
        let t_max = self.t_max.unwrap_or_else(|| SurvivalSpec::default_t_max(l, x_far));
        check(t_max > 0.0 && t_max.is_finite(), "t_max", || format!("{t_max} must be > 0"))?;
        Ok(SurvivalSpec {
            x_far,
            t_max,
            ..SurvivalSpec::new(l, self.replicas(2000)?, self.seed())
        })
    }

    pub fn sites(&self) -> Result<(usize, usize), ConfigError> {
        let [a, b] = self.sites.unwrap_or([3, 50]);
        check(a >= 1 && b >= a, "sites", || format!("bad range [{a}, {b}]"))?;
        if let Lattice::Open { len, .. } = self.lattice()? {
            check(b <= len, "sites", || format!("site {b} beyond the lattice of {len}"))?;
        }
        Ok((a, b))
    }
}
