//! User-supplied environment specification (`j2k.yml`): import-to-package
//! mapping, version pins, global environment variables, broker address, and
//! container build parameters.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BROKER: &str = "my-broker-address";
pub const DEFAULT_BASE_IMAGE: &str = "python:3.11-slim";
pub const DEFAULT_INSTALL_COMMAND: &str = "pip install --no-cache-dir {packages}";
pub const DEFAULT_RUNTIME: &str = "python3";
pub const DEFAULT_TAG: &str = "latest";

#[derive(Debug, Error)]
pub enum EnvSpecError {
    #[error("malformed environment spec: {0}")]
    Malformed(#[from] serde_yaml::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    #[default]
    Local,
    Cloud,
}

/// A named environment variable, ordered as written in the spec file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvVar {
    pub name: String,
    pub value: String,
}

impl EnvVar {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSpec {
    /// import name -> package name; imports absent here are reported as
    /// unmapped.
    pub package_map: IndexMap<String, String>,
    /// package name -> pinned version; unpinned packages get "unpinned".
    pub pins: IndexMap<String, String>,
    /// Global environment variables propagated to every step.
    pub env: IndexMap<String, String>,
    pub broker: String,
    pub storage: StorageMode,
    /// Extra names treated as builtins by the def/use analysis.
    pub builtin_extra: Vec<String>,
    pub base_image: String,
    /// May contain `{packages}`, replaced with the space-joined
    /// `name==version` list (bare name when unpinned).
    pub install_command: String,
    pub runtime: String,
    pub tag: String,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            package_map: IndexMap::new(),
            pins: IndexMap::new(),
            env: IndexMap::new(),
            broker: DEFAULT_BROKER.to_owned(),
            storage: StorageMode::Local,
            builtin_extra: Vec::new(),
            base_image: DEFAULT_BASE_IMAGE.to_owned(),
            install_command: DEFAULT_INSTALL_COMMAND.to_owned(),
            runtime: DEFAULT_RUNTIME.to_owned(),
            tag: DEFAULT_TAG.to_owned(),
        }
    }
}

impl EnvironmentSpec {
    pub fn parse(text: &str) -> Result<Self, EnvSpecError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        Ok(serde_yaml::from_str(text)?)
    }

    /// Global env vars in file order.
    pub fn global_env(&self) -> Vec<EnvVar> {
        self.env
            .iter()
            .map(|(k, v)| EnvVar::new(k.clone(), v.clone()))
            .collect()
    }
}
