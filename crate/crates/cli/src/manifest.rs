use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Command, Common};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub common: Common,
    #[serde(flatten)]
    pub command: Command,
    pub seed: u64,
    pub scene_hash: Option<String>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(common: &Common, command: &Command, scene_hash: Option<String>, outputs: Vec<String>) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            common: common.clone(),
            command: command.clone(),
            seed: common.seed,
            scene_hash,
            outputs,
        }
    }

    pub fn load(path: &Path) -> singlap::Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
