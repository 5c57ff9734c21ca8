//! Versioned JSON checkpoints holding the model configuration and every
//! parameter tensor by name.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MiclError, Result};
use crate::model::{MiclModel, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Matrix;

pub const CHECKPOINT_FORMAT: &str = "micl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn capture(config: &ModelConfig, store: &ParamStore) -> Result<Self> {
        let tensors = store
            .iter()
            .map(|(name, m)| {
                if !m.is_finite() {
                    return Err(MiclError::Numerical(format!("parameter {name} is not finite")));
                }
                Ok(NamedTensor {
                    name: name.to_string(),
                    shape: [m.rows(), m.cols()],
                    data: m.data().to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            header: CheckpointHeader {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
            },
            config: config.clone(),
            tensors,
        })
    }

    /// Rebuilds the model and loads the stored values into it.
    pub fn restore(&self) -> Result<(MiclModel, ParamStore)> {
        if self.header.format != CHECKPOINT_FORMAT {
            return Err(MiclError::Checkpoint(format!("unknown format {:?}", self.header.format)));
        }
        if self.header.version != CHECKPOINT_VERSION {
            return Err(MiclError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.header.version
            )));
        }
        let (model, mut store) = MiclModel::new(self.config.clone(), 0)?;
        let mut loaded = ParamStore::new();
        for t in &self.tensors {
            let m = Matrix::from_vec(t.shape[0], t.shape[1], t.data.clone())
                .map_err(|e| MiclError::Checkpoint(format!("tensor {}: {e}", t.name)))?;
            loaded.add(t.name.clone(), m);
        }
        store.load_from(&loaded)?;
        Ok((model, store))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| MiclError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MiclError::io(path, e))?;
        Self::from_json(&text)
    }
}
