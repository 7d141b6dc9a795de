//! Scenario documents.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "fig2_battery"
//! energy_unit = "kWh"
//! horizon = 1
//!
//! [storage]
//! s_min = 0.0
//! s_max = 5.0
//! s_init = 0.0
//!
//! [[steps]]
//! generation = { kind = "deterministic", value = 2.0 }
//! demand = { kind = "weibull", scale = 2.0, shape = 5.0 }
//! ```
//!
//! Log-normal entries take either `mu`/`sigma` (log space) or
//! `mean`/`variance` (moments), never both. Units are labels only.

use crate::dist::{DistError, DistributionSpec};
use crate::storage::StorageSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid `{path}`: {reason}")]
    Invariant { path: String, reason: String },
}

impl ScenarioError {
    fn invariant(path: impl Into<String>, reason: impl fmt::Display) -> Self {
        Self::Invariant {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Syntax(_) => "syntax",
            Self::Schema(_) => "schema",
            Self::Invariant { .. } => "invariant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyUnit {
    KWh,
    MWh,
}

impl EnergyUnit {
    pub fn label(&self) -> &'static str {
        match self {
            Self::KWh => "kWh",
            Self::MWh => "MWh",
        }
    }
}

impl fmt::Display for EnergyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for EnergyUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kWh" => Ok(Self::KWh),
            "MWh" => Ok(Self::MWh),
            other => Err(format!(
                "unknown energy unit `{other}` (expected kWh or MWh)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSpec {
    pub generation: DistributionSpec,
    pub demand: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub energy_unit: EnergyUnit,
    pub storage: StorageSpec,
    pub steps: Vec<StepSpec>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn parse(document: &str) -> Result<Self, ScenarioError> {
        parse_scenario(document)
    }

    pub fn to_toml(&self) -> String {
        let raw = RawScenario {
            name: self.name.clone(),
            energy_unit: self.energy_unit.label().to_owned(),
            horizon: self.horizon(),
            storage: RawStorage {
                s_min: self.storage.s_min(),
                s_max: self.storage.s_max(),
                s_init: self.storage.s_init(),
            },
            steps: self
                .steps
                .iter()
                .map(|s| RawStep {
                    generation: RawDist::from(&s.generation),
                    demand: RawDist::from(&s.demand),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("scenario serialization is infallible")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    energy_unit: String,
    horizon: usize,
    storage: RawStorage,
    steps: Vec<RawStep>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStorage {
    s_min: f64,
    s_max: f64,
    s_init: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    generation: RawDist,
    demand: RawDist,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawDist {
    LogNormal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
    },
    Weibull {
        scale: f64,
        shape: f64,
    },
    Deterministic {
        value: f64,
    },
    Empirical {
        samples: Vec<f64>,
    },
}

impl From<&DistributionSpec> for RawDist {
    fn from(spec: &DistributionSpec) -> Self {
        match spec {
            DistributionSpec::LogNormal { mu, sigma } => Self::LogNormal {
                mu: Some(*mu),
                sigma: Some(*sigma),
                mean: None,
                variance: None,
            },
            DistributionSpec::Weibull {
                scale_lambda,
                shape_k,
            } => Self::Weibull {
                scale: *scale_lambda,
                shape: *shape_k,
            },
            DistributionSpec::Deterministic { value } => Self::Deterministic { value: *value },
            DistributionSpec::Empirical { samples } => Self::Empirical {
                samples: samples.as_slice().to_vec(),
            },
        }
    }
}

fn dist_path(path: &str, err: &DistError) -> String {
    match err {
        DistError::InvalidParameter { name, .. } => format!("{path}.{name}"),
        _ => path.to_owned(),
    }
}

fn build_dist(raw: RawDist, path: &str) -> Result<DistributionSpec, ScenarioError> {
    let spec = match raw {
        RawDist::LogNormal {
            mu,
            sigma,
            mean,
            variance,
        } => match (mu, sigma, mean, variance) {
            (Some(mu), Some(sigma), None, None) => DistributionSpec::lognormal(mu, sigma),
            (None, None, Some(mean), Some(variance)) => {
                DistributionSpec::lognormal_from_moments(mean, variance)
            }
            _ => {
                return Err(ScenarioError::Schema(format!(
                    "`{path}`: lognormal needs exactly one of {{mu, sigma}} or {{mean, variance}}"
                )))
            }
        },
        RawDist::Weibull { scale, shape } => DistributionSpec::weibull(scale, shape),
        RawDist::Deterministic { value } => DistributionSpec::deterministic(value),
        RawDist::Empirical { samples } => DistributionSpec::empirical(samples),
    };
    spec.map_err(|e| ScenarioError::invariant(dist_path(path, &e), e))
}

/// Parses and validates a scenario document.
pub fn parse_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    document
        .parse::<toml::Table>()
        .map_err(|e| ScenarioError::Syntax(e.message().to_owned()))?;
    let raw: RawScenario =
        toml::from_str(document).map_err(|e| ScenarioError::Schema(e.to_string()))?;

    if raw.name.trim().is_empty() {
        return Err(ScenarioError::invariant("name", "must be nonempty"));
    }
    let energy_unit = raw
        .energy_unit
        .parse()
        .map_err(|e: String| ScenarioError::invariant("energy_unit", e))?;
    let storage = StorageSpec::new(raw.storage.s_min, raw.storage.s_max, raw.storage.s_init)
        .map_err(|e| ScenarioError::invariant("storage", e))?;
    if raw.steps.is_empty() {
        return Err(ScenarioError::invariant(
            "steps",
            "horizon must be at least 1",
        ));
    }
    if raw.horizon != raw.steps.len() {
        return Err(ScenarioError::invariant(
            "horizon",
            format!(
                "{} does not match {} step entries",
                raw.horizon,
                raw.steps.len()
            ),
        ));
    }
    let steps = raw
        .steps
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(StepSpec {
                generation: build_dist(s.generation, &format!("steps[{i}].generation"))?,
                demand: build_dist(s.demand, &format!("steps[{i}].demand"))?,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;

    Ok(Scenario {
        name: raw.name,
        energy_unit,
        storage,
        steps,
    })
}

/// Scenario documents shipped with the crate.
pub mod fixtures {
    pub const FIG2_BATTERY: &str = include_str!("../fixtures/fig2_battery.toml");
    pub const DAY24_LOGNORMAL: &str = include_str!("../fixtures/day24_lognormal.toml");

    pub fn bundled(name: &str) -> Option<&'static str> {
        match name {
            "fig2_battery" => Some(FIG2_BATTERY),
            "day24_lognormal" => Some(DAY24_LOGNORMAL),
            _ => None,
        }
    }
}
