//! JSON model checkpoints. Reals are written in shortest round-trip decimal
//! form, so a save/load cycle reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Layer, Network, TrainedModel, TrainingMetadata};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "motion-saliency-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    architecture: Architecture,
    layers: Vec<Layer>,
    metadata: TrainingMetadata,
}

impl TrainedModel {
    pub fn to_json_string(&self) -> String {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: self.architecture.clone(),
            layers: self.network.layers.clone(),
            metadata: self.metadata.clone(),
        };
        let mut s = serde_json::to_string(&file).expect("checkpoint serializes");
        s.push('\n');
        s
    }
}

pub fn parse_checkpoint(text: &str) -> Result<TrainedModel> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Data(format!("checkpoint: unexpected format `{}`", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!("checkpoint: unsupported version {}", file.version)));
    }
    file.architecture
        .validate()
        .map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
    let network = Network { layers: file.layers };
    network.validate()?;
    let widths: Vec<usize> = network
        .layers
        .iter()
        .map(|l| l.inputs)
        .chain(std::iter::once(1))
        .collect();
    if widths != file.architecture.widths() {
        return Err(Error::Data(format!(
            "checkpoint: layer widths {widths:?} do not match architecture {:?}",
            file.architecture.widths()
        )));
    }
    Ok(TrainedModel {
        architecture: file.architecture,
        network,
        metadata: file.metadata,
    })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_json_string()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}
