use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::errors::CliError;
use crate::staging::OutputSet;

pub const TOOL_NAME: &str = "chainprofiler";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance sidecar written next to every artifact: the tool version, the
/// seed in effect, and a SHA-256 digest of each input file. Deliberately
/// free of timestamps so identical runs produce identical bytes.
#[derive(Clone)]
pub struct SidecarBuilder {
    seed: Option<u64>,
    inputs: Vec<(String, String)>,
}

impl SidecarBuilder {
    pub fn new(seed: Option<u64>) -> Self {
        SidecarBuilder { seed, inputs: Vec::new() }
    }

    /// Records the digest of one input file under its path as given.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let digest = sha256_file(path)?;
        self.inputs.push((path.display().to_string(), digest));
        Ok(self)
    }

    /// Stages `<artifact>.meta.json` describing how `artifact` was produced.
    /// `extra` adds artifact-specific keys (parameters, counts, ...).
    pub fn stage_for(
        &self,
        out: &mut OutputSet,
        artifact: &Path,
        extra: &[(&str, serde_json::Value)],
    ) -> Result<(), CliError> {
        let mut obj = serde_json::Map::new();
        obj.insert("tool".into(), serde_json::Value::String(TOOL_NAME.into()));
        obj.insert("version".into(), serde_json::Value::String(TOOL_VERSION.into()));
        obj.insert(
            "seed".into(),
            match self.seed {
                Some(s) => serde_json::Value::from(s),
                None => serde_json::Value::Null,
            },
        );
        let mut inputs = serde_json::Map::new();
        for (name, digest) in &self.inputs {
            inputs.insert(name.clone(), serde_json::Value::String(digest.clone()));
        }
        obj.insert("inputs".into(), serde_json::Value::Object(inputs));
        for (k, v) in extra {
            obj.insert((*k).into(), v.clone());
        }
        let mut bytes = serde_json::to_vec_pretty(&serde_json::Value::Object(obj))
            .expect("sidecar serialization cannot fail");
        bytes.push(b'\n');
        out.stage(&sidecar_path(artifact), &bytes)
    }
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut os = artifact.as_os_str().to_os_string();
    os.push(".meta.json");
    PathBuf::from(os)
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
