//! Experiment configuration: strict JSON loading and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::{CorrelationStrategy, CostFunction, VolatilityMap};
use crate::ctmc::{validate_chain, ChainSpec};
use crate::hjb::GridSpec;
use crate::simulate::{McOptions, DEFAULT_CI_LEVEL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_ci")]
    pub ci_level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

fn default_ci() -> f64 {
    DEFAULT_CI_LEVEL
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chain: ChainSpec,
    pub volatility: VolatilityMap,
    pub strategies: Vec<CorrelationStrategy>,
    pub cost_functions: Vec<CostFunction>,
    pub r0: f64,
    pub horizon: f64,
    pub monte_carlo: MonteCarloConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hjb: Option<GridSpec>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
}

impl ExperimentConfig {
    pub fn mc_options(&self) -> McOptions {
        let mut mc = McOptions::new(self.monte_carlo.n_paths, self.monte_carlo.seed)
            .with_ci_level(self.monte_carlo.ci_level);
        mc.step = self.monte_carlo.step;
        mc
    }

    /// Run every validator, reporting the first failure with its location.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let chain = validate_chain(self.chain.clone()).map_err(|errs| {
            let first = &errs.0[0];
            ConfigError::Validation {
                location: format!("/chain{}", first.location()),
                message: errs.to_string(),
            }
        })?;
        self.volatility
            .validate(&chain)
            .map_err(|e| invalid("/volatility", e))?;
        if self.strategies.is_empty() {
            return Err(invalid("/strategies", "at least one strategy is required"));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            s.validate(&chain).map_err(|e| invalid(&format!("/strategies/{i}"), e))?;
        }
        for (i, phi) in self.cost_functions.iter().enumerate() {
            phi.spot_check(10.0).map_err(|e| invalid(&format!("/cost_functions/{i}"), e))?;
        }
        if !self.r0.is_finite() {
            return Err(invalid("/r0", "r0 must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("/horizon", format!("horizon {} must be positive", self.horizon)));
        }
        let mc = &self.monte_carlo;
        if mc.n_paths == 0 {
            return Err(invalid("/monte_carlo/n_paths", "n_paths must be positive"));
        }
        if !(mc.ci_level > 0.0 && mc.ci_level < 1.0) {
            return Err(invalid("/monte_carlo/ci_level", format!("{} is not in (0, 1)", mc.ci_level)));
        }
        if let Some(step) = mc.step {
            if !(step > 0.0 && step <= self.horizon) {
                return Err(invalid("/monte_carlo/step", format!("step {step} must lie in (0, horizon]")));
            }
        }
        if let Some(grid) = &self.hjb {
            grid.validate(&chain, &self.volatility).map_err(|e| invalid("/hjb", e))?;
        }
        Ok(())
    }
}

fn invalid(location: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Validation {
        location: location.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unknown field `{field}` at {location}{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownField {
        location: String,
        field: String,
        suggestion: Option<String>,
    },
    #[error("invalid value at {location}: {message}")]
    Validation { location: String, message: String },
}

impl ConfigError {
    pub fn location(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { location, .. }
            | ConfigError::UnknownField { location, .. }
            | ConfigError::Validation { location, .. } => Some(location),
        }
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        "/".into()
    } else {
        out
    }
}

/// Split serde's "unknown field `x`, expected one of `a`, `b`" message.
fn unknown_field(message: &str) -> Option<(String, Vec<String>)> {
    let rest = message.strip_prefix("unknown field `")?;
    let (field, tail) = rest.split_once('`')?;
    let expected = tail
        .split('`')
        .skip(1)
        .step_by(2)
        .map(str::to_string)
        .collect();
    Some((field.to_string(), expected))
}

fn closest(field: &str, candidates: &[String]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::normalized_damerau_levenshtein(field, c), c))
        .filter(|(score, _)| *score >= 0.6)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.clone())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|err| {
        let location = pointer(err.path());
        let message = err.inner().to_string();
        let core = message.split(" at line ").next().unwrap_or(&message);
        match unknown_field(core) {
            Some((field, expected)) => ConfigError::UnknownField {
                location,
                suggestion: closest(&field, &expected),
                field,
            },
            None => ConfigError::Parse { location, message },
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "chain": {"states": [{"id": "a"}], "generator": [[0.0]], "initial": "a"},
        "volatility": {"sigma1": [1.0], "sigma2": [2.0]},
        "strategies": [{"kind": "synchronous"}],
        "cost_functions": [{"kind": "quadratic"}],
        "r0": 1.0,
        "horizon": 1.0,
        "monte_carlo": {"n_paths": 1000, "seed": 1}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.chain.n_states(), 1);
        assert_eq!(cfg.monte_carlo.ci_level, 0.99);
        assert_eq!(cfg.outputs, PathBuf::from("out"));
        let back = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn row_sum_violation_names_row() {
        let text = MINIMAL.replace(r#""generator": [[0.0]]"#, r#""generator": [[0.5]]"#);
        match parse_config(&text).unwrap_err() {
            ConfigError::Validation { location, message } => {
                assert_eq!(location, "/chain/generator/0");
                assert!(message.contains("row 0"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn misspelled_key_gets_suggestion() {
        let text = MINIMAL.replace("\"volatility\"", "\"volatilty\"");
        match parse_config(&text).unwrap_err() {
            ConfigError::UnknownField {
                field, suggestion, ..
            } => {
                assert_eq!(field, "volatilty");
                assert_eq!(suggestion.as_deref(), Some("volatility"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn nested_unknown_field_has_pointer() {
        let text = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"sead\": 2");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.location(), Some("/monte_carlo/sead"));
        assert!(err.to_string().contains("did you mean `seed`"), "{err}");
    }

    #[test]
    fn bad_values_are_located() {
        let text = MINIMAL.replace("\"horizon\": 1.0", "\"horizon\": -1.0");
        assert_eq!(parse_config(&text).unwrap_err().location(), Some("/horizon"));
        let text = MINIMAL.replace(r#"{"kind": "synchronous"}"#, r#"{"kind": "state_feedback", "c": [0.1, 0.2]}"#);
        assert_eq!(parse_config(&text).unwrap_err().location(), Some("/strategies/0"));
        let text = MINIMAL.replace(r#"{"kind": "synchronous"}"#, r#"{"kind": "constant", "c": 2.0}"#);
        assert!(matches!(parse_config(&text).unwrap_err(), ConfigError::Parse { .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_config(Path::new("/nonexistent/config.json")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
