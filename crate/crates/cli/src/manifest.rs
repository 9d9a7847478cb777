//! Run manifest: everything needed to re-execute a deployment.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cts_core::io::ModelFile;
use cts_core::scenario::DeployConfig;
use cts_core::Model;
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA: &str = "cts.manifest/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub model: ModelFile,
    pub deploy: DeployConfig,
    /// Plan file contents when the run replayed a supplied plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

impl Manifest {
    pub fn new(model: &Model, deploy: &DeployConfig, plan: Option<String>) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            model: ModelFile::from_model(model),
            deploy: deploy.clone(),
            plan,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| cts_core::Error::Validation(format!("manifest {}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(cts_core::Error::Validation(format!(
                "manifest schema `{}`, expected `{MANIFEST_SCHEMA}`",
                m.schema
            ))
            .into());
        }
        Ok(m)
    }

    pub fn model(&self) -> Result<Model> {
        Ok(self.model.clone().into_model()?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
