//! JSON experiment configs.
//!
//! ```json
//! {
//!   "scenario_id": "demo",
//!   "system": {"n": 10, "j": 60},
//!   "model": {"type": "shifted_exponential", "delta": 1.0, "w": 1.0},
//!   "policies": {"k": "all_feasible", "b": "all_feasible"},
//!   "estimators": ["quadrature", "monte_carlo"],
//!   "sim": {"samples": 100000, "seed": 42},
//!   "output": {"format": "csv", "path": "out.csv"}
//! }
//! ```
//!
//! `policies` is either a sweep object (`k`/`b` each a number, a list, or
//! `"all_feasible"`) or an explicit list of `{"k": .., "b": ..}` objects.

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::optimizer::{feasible_batches, feasible_k, SimOptions};
use crate::service::ServiceModel;
use crate::simulator::{Method, Policy, SystemSpec, DEFAULT_SAMPLES, DEFAULT_SEED};

pub const ALL_FEASIBLE: &str = "all_feasible";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario_id: String,
    pub system: SystemConfig,
    pub model: ServiceModel,
    pub policies: PolicySelection,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Method>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

fn default_scenario() -> String {
    "config".to_string()
}

fn default_estimators() -> Vec<Method> {
    vec![Method::Quadrature]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: u64,
    pub j: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PolicySelection {
    Explicit(Vec<PolicyEntry>),
    Sweep(SweepRanges),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub k: u64,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRanges {
    pub k: Selector,
    pub b: Selector,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    One(u64),
    List(Vec<u64>),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> u64 {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

impl From<SimConfig> for SimOptions {
    fn from(c: SimConfig) -> Self {
        SimOptions {
            samples: c.samples,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(
                "format",
                format!("expected csv or json, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub path: PathBuf,
}

fn at(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            at(
                if path.is_empty() {
                    ".".to_string()
                } else {
                    path
                },
                e.into_inner().to_string(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        SystemSpec::new(self.system.n, self.system.j).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => at(format!("system.{name}"), reason),
            other => other,
        })?;
        self.model.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => at(format!("model.{name}"), reason),
            other => other,
        })?;
        if self.estimators.is_empty() {
            return Err(at("estimators", "at least one estimator is required"));
        }
        if self.sim.samples == 0 {
            return Err(at("sim.samples", "must be >= 1"));
        }
        self.expand()?;
        Ok(())
    }

    pub fn spec(&self) -> SystemSpec {
        SystemSpec {
            n: self.system.n,
            j: self.system.j,
        }
    }

    /// Expands the policy selection into concrete feasible policies, `k`-major.
    pub fn expand(&self) -> Result<Vec<Policy>> {
        let spec = self.spec();
        let infeasible = |path: String, e: Error| match e {
            Error::Infeasible(reason) | Error::InvalidParameter { reason, .. } => at(path, reason),
            other => other,
        };
        match &self.policies {
            PolicySelection::Explicit(entries) => {
                if entries.is_empty() {
                    return Err(at("policies", "empty policy list"));
                }
                entries
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        Policy::new(&spec, p.k, p.b)
                            .map_err(|e| infeasible(format!("policies[{i}]"), e))
                    })
                    .collect()
            }
            PolicySelection::Sweep(ranges) => {
                let ks = select(&ranges.k, "policies.k", || feasible_k(&spec))?;
                let mut out = Vec::new();
                for k in ks {
                    Policy::new(&spec, k, 1).map_err(|e| infeasible("policies.k".into(), e))?;
                    let bs = select(&ranges.b, "policies.b", || feasible_batches(spec.j / k))?;
                    for b in bs {
                        out.push(
                            Policy::new(&spec, k, b)
                                .map_err(|e| infeasible("policies.b".into(), e))?,
                        );
                    }
                }
                Ok(out)
            }
        }
    }
}

fn select(sel: &Selector, path: &str, all: impl FnOnce() -> Vec<u64>) -> Result<Vec<u64>> {
    match sel {
        Selector::One(v) => Ok(vec![*v]),
        Selector::List(vs) if vs.is_empty() => Err(at(path, "empty list")),
        Selector::List(vs) => Ok(vs.clone()),
        Selector::Keyword(word) if word == ALL_FEASIBLE => Ok(all()),
        Selector::Keyword(word) => Err(at(
            path,
            format!("expected a number, a list or \"{ALL_FEASIBLE}\", got \"{word}\""),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "system": {"n": 10, "j": 60},
        "model": {"type": "shifted_exponential", "delta": 1, "w": 1},
        "policies": {"k": "all_feasible", "b": "all_feasible"}
    }"#;

    #[test]
    fn all_feasible_expansion() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        let ps = c.expand().unwrap();
        let expected: usize = [1u64, 2, 3, 4, 5, 6, 10]
            .iter()
            .map(|k| feasible_batches(60 / k).len())
            .sum();
        assert_eq!(ps.len(), expected);
        assert_eq!(c.estimators, vec![Method::Quadrature]);
        assert_eq!(
            c.sim,
            SimConfig {
                samples: 100_000,
                seed: 42
            }
        );
    }

    #[test]
    fn explicit_list() {
        let text = BASE.replace(
            r#"{"k": "all_feasible", "b": "all_feasible"}"#,
            r#"[{"k": 2, "b": 5}, {"k": 10, "b": 6}]"#,
        );
        let ps = ExperimentConfig::from_json(&text)
            .unwrap()
            .expand()
            .unwrap();
        assert_eq!(
            ps.iter().map(|p| (p.k, p.b)).collect::<Vec<_>>(),
            vec![(2, 5), (10, 6)]
        );
    }

    #[test]
    fn eps_out_of_range_names_the_field() {
        let text = r#"{
            "system": {"n": 3, "j": 3},
            "model": {"type": "bimodal", "t_fast": 1, "t_slow": 2, "eps": 1.5},
            "policies": [{"k": 1, "b": 1}]
        }"#;
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("model.eps"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace(r#""system""#, r#""bogus": 1, "system""#);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let text = BASE.replace(r#""n": 10"#, r#""n": 10, "m": 3"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("system"), "{err}");
    }

    #[test]
    fn infeasible_policy_reports_divisibility() {
        let text = BASE.replace(
            r#"{"k": "all_feasible", "b": "all_feasible"}"#,
            r#"[{"k": 7, "b": 1}]"#,
        );
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(
            err.contains("policies[0]") && err.contains("60 mod 7"),
            "{err}"
        );
        let text = BASE.replace(r#""b": "all_feasible""#, r#""b": 4"#);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("policies.b") && err.contains("mod 4"), "{err}");
        let text = BASE.replace(r#""k": "all_feasible""#, r#""k": "everything""#);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("policies.k"), "{err}");
    }
}
