//! Pipeline configuration file (TOML). Every section is optional and falls
//! back to the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::certifier::Thresholds;
use crate::model::HexDigest;
use crate::rationale::RationaleConfig;
use crate::taxonomy::ClassifierConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconPaths {
    pub bloom: Option<PathBuf>,
    pub solo: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub timeout_seconds: u64,
    pub parallelism: usize,
    /// Keep the full prompt text in provenance (the hash is always kept).
    pub store_prompt_text: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            timeout_seconds: 60,
            parallelism: 4,
            store_prompt_text: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub thresholds: Thresholds,
    pub classifier: ClassifierConfig,
    pub rationale: RationaleConfig,
    pub lexicons: LexiconPaths,
    pub policy: PolicyConfig,
    pub generator: GeneratorConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, ConfigError> {
        let config: PipelineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = PipelineConfig::from_toml(&text)?;
        // relative data paths resolve against the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.lexicons.bloom, &mut config.lexicons.solo, &mut config.policy.path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.thresholds
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.classifier
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rationale
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.generator.parallelism == 0 {
            return Err(ConfigError::Invalid("generator.parallelism must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn digest(&self) -> HexDigest {
        HexDigest::of(to_canonical_string(self).expect("config serializes").as_bytes())
    }
}
