//! Run manifests: the resolved invocation plus content hashes of every
//! input and output, enough to replay a run and verify it.

use std::fs;
use std::path::{Path, PathBuf};

use micl::data::{AugmentationPlan, SynthConfig};
use micl::model::ModelConfig;
use micl::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Fully resolved parameters of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Synth {
        synth: SynthConfig,
        seed: u64,
        train_fraction: f64,
        val_fraction: f64,
    },
    Augment {
        dataset: PathBuf,
        plan: AugmentationPlan,
        seed: u64,
    },
    Train {
        dataset: PathBuf,
        config: TrainConfig,
    },
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
        credibility: bool,
    },
    Gradcheck {
        checkpoint: Option<PathBuf>,
        model: ModelConfig,
        seed: u64,
        batch: usize,
        eps: f64,
        tau: f64,
        lambda: f64,
        tolerance: f64,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Synth { .. } => "synth",
            Invocation::Augment { .. } => "augment",
            Invocation::Train { .. } => "train",
            Invocation::Eval { .. } => "eval",
            Invocation::Gradcheck { .. } => "gradcheck",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Invocation::Synth { seed, .. }
            | Invocation::Augment { seed, .. }
            | Invocation::Gradcheck { seed, .. } => Some(*seed),
            Invocation::Train { config, .. } => Some(config.seed),
            Invocation::Eval { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub invocation: Invocation,
    pub inputs: Vec<Fingerprint>,
    /// Output files, relative to the output directory.
    pub artifacts: Vec<Fingerprint>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn fingerprint(path: &Path) -> Result<Fingerprint, CliError> {
    Ok(Fingerprint {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}

impl RunManifest {
    pub fn new(invocation: Invocation, inputs: &[PathBuf], out: &Path, artifacts: &[String]) -> Result<Self, CliError> {
        let inputs = inputs.iter().map(|p| fingerprint(p)).collect::<Result<_, _>>()?;
        let artifacts = artifacts
            .iter()
            .map(|name| {
                Ok(Fingerprint {
                    path: PathBuf::from(name),
                    sha256: sha256_file(&out.join(name))?,
                })
            })
            .collect::<Result<_, CliError>>()?;
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: invocation.seed(),
            invocation,
            inputs,
            artifacts,
        })
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = out.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("malformed manifest {}: {e}", path.display())))
    }

    /// Inputs whose current content differs from the recorded hash.
    pub fn changed_inputs(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut changed = Vec::new();
        for f in &self.inputs {
            if sha256_file(&f.path)? != f.sha256 {
                changed.push(f.path.clone());
            }
        }
        Ok(changed)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}
