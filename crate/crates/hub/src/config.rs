//! Service configuration: a TOML file overlaid with `PMI_*` environment
//! variables.
//!
//! | variable               | field              |
//! |------------------------|--------------------|
//! | `PMI_EMBEDDING_DIM`    | `embedding_dim`    |
//! | `PMI_GAMMA`            | `gamma`            |
//! | `PMI_DATA_DIR`         | `data_dir`         |
//! | `PMI_BIND`             | `bind`             |
//! | `PMI_ENCODER_NAME`     | `encoder.name`     |
//! | `PMI_ENCODER_ENDPOINT` | `encoder.endpoint` (switches to a remote encoder) |

use std::path::{Path, PathBuf};
use std::sync::Arc;

use pmi_core::encoder::{Encoder, EncoderKind, EncoderProfile, MockEncoder};
use pmi_core::registry::{Registry, RegistryConfig};
use pmi_core::{Error, KernelConfig, MatchOptions, Result};
use serde::{Deserialize, Serialize};

use crate::remote::RemoteEncoder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub name: String,
    pub kind: EncoderKind,
    pub endpoint: Option<String>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            name: "mock-clip".into(),
            kind: EncoderKind::Mock,
            endpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubConfig {
    pub embedding_dim: usize,
    pub gamma: f64,
    pub data_dir: PathBuf,
    pub bind: String,
    pub reduced_set_size: usize,
    pub clamp_weights: bool,
    pub encoder: EncoderSettings,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            embedding_dim: 64,
            gamma: pmi_core::kernel::DEFAULT_GAMMA,
            data_dir: PathBuf::from("pmi-data"),
            bind: "127.0.0.1:8080".into(),
            reduced_set_size: 1,
            clamp_weights: false,
            encoder: EncoderSettings::default(),
        }
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}={value:?} is not valid")))
}

impl HubConfig {
    /// Reads `path` (if any), then applies process environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => HubConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = lookup("PMI_EMBEDDING_DIM") {
            self.embedding_dim = parse_env("PMI_EMBEDDING_DIM", &v)?;
        }
        if let Some(v) = lookup("PMI_GAMMA") {
            self.gamma = parse_env("PMI_GAMMA", &v)?;
        }
        if let Some(v) = lookup("PMI_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup("PMI_BIND") {
            self.bind = v;
        }
        if let Some(v) = lookup("PMI_ENCODER_NAME") {
            self.encoder.name = v;
        }
        if let Some(v) = lookup("PMI_ENCODER_ENDPOINT") {
            self.encoder.endpoint = Some(v);
            self.encoder.kind = EncoderKind::Remote;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        KernelConfig::new(self.gamma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.registry_config().validate()?;
        self.profile().validate()
    }

    pub fn profile(&self) -> EncoderProfile {
        EncoderProfile {
            name: self.encoder.name.clone(),
            embedding_dim: self.embedding_dim,
            endpoint: self.encoder.endpoint.clone(),
            kind: self.encoder.kind,
        }
    }

    pub fn registry_config(&self) -> RegistryConfig {
        RegistryConfig {
            embedding_dim: self.embedding_dim,
            kernel: KernelConfig::new(self.gamma).unwrap_or_default(),
            reduced_set_size: self.reduced_set_size,
            match_options: MatchOptions {
                clamp_weights: self.clamp_weights,
            },
        }
    }

    pub fn build_encoder(&self) -> Result<Arc<dyn Encoder>> {
        let profile = self.profile();
        Ok(match profile.kind {
            EncoderKind::Mock => Arc::new(MockEncoder::new(profile)?),
            EncoderKind::Remote => Arc::new(RemoteEncoder::new(profile)?),
        })
    }

    pub fn open_registry(&self) -> Result<Registry> {
        Registry::open(&self.data_dir, self.registry_config(), self.build_encoder()?)
    }
}
