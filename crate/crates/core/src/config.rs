//! Run configuration file: `[similarity]`, `[mutation]` and `[difftest]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::difftest::{Limits, Policy};
use crate::mutation::{MutationConfig, MutationConfigError};
use crate::similarity::{ConfigError, SimilarityConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DifftestConfig {
    pub limits: Limits,
    pub policy: Policy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub similarity: SimilarityConfig,
    pub mutation: MutationConfig,
    pub difftest: DifftestConfig,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: [similarity] {source}")]
    Similarity {
        path: String,
        #[source]
        source: ConfigError,
    },
    #[error("{path}: [mutation] {source}")]
    Mutation {
        path: String,
        #[source]
        source: MutationConfigError,
    },
}

impl Config {
    pub fn from_toml(text: &str, origin: &str) -> Result<Config, LoadError> {
        let cfg: Config = toml::from_str(text).map_err(|e| LoadError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.similarity
            .validate()
            .map_err(|source| LoadError::Similarity {
                path: origin.to_string(),
                source,
            })?;
        cfg.mutation
            .validate()
            .map_err(|source| LoadError::Mutation {
                path: origin.to_string(),
                source,
            })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, LoadError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: origin.clone(),
            source,
        })?;
        Self::from_toml(&text, &origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::AcceptPolarity;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml(
            "[mutation]\nthreshold = 0.7\naccept_polarity = \"above_threshold\"\n[difftest.limits]\nmax_steps = 99\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.mutation.threshold, 0.7);
        assert_eq!(cfg.mutation.accept_polarity, AcceptPolarity::AboveThreshold);
        assert_eq!(cfg.mutation.retries, 10);
        assert_eq!(cfg.similarity, SimilarityConfig::default());
        assert_eq!(cfg.difftest.limits.max_steps, 99);
        assert_eq!(Config::from_toml("", "t").unwrap(), Config::default());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(
            Config::from_toml("[similarity]\nw_tp = 0.9\n", "t"),
            Err(LoadError::Similarity { .. })
        ));
        assert!(matches!(
            Config::from_toml("[mutation]\nthreshold = 2.0\n", "t"),
            Err(LoadError::Mutation { .. })
        ));
        assert!(matches!(
            Config::from_toml("[bogus]\n", "t"),
            Err(LoadError::Parse { .. })
        ));
    }
}
