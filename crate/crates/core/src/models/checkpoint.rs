//! Checkpoint container.
//!
//! ```text
//! "MERACKPT" | version u8 | header length u32 LE | header JSON | tensor files…
//! ```
//!
//! The header holds the model and training configs, the history and the
//! ordered tensor names; each tensor follows in the embed tensor format.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::FusionModel;
use super::train::{EpochLog, TrainConfig};
use super::{ModelConfig, ModelError};
use crate::corpus::LanguageCode;
use crate::embed::{read_tensor, write_tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MERACKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: FusionModel<f32>,
    pub train_config: TrainConfig,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub language: LanguageCode,
}

impl Checkpoint {
    pub fn seed(&self) -> u64 {
        self.train_config.seed
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    language: LanguageCode,
    best_epoch: usize,
    seed: u64,
    history: Vec<EpochLog>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), ModelError> {
    let params = ckpt.model.named_parameters();
    let header = Header {
        model_config: ckpt.model.config().clone(),
        train_config: ckpt.train_config.clone(),
        language: ckpt.language,
        best_epoch: ckpt.best_epoch,
        seed: ckpt.seed(),
        history: ckpt.history.clone(),
        tensors: params
            .iter()
            .map(|(name, p)| TensorEntry {
                name: name.clone(),
                rows: p.nrows(),
                cols: p.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| corrupt("header too large"))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION])?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for (name, p) in params {
        write_tensor(&mut w, p).map_err(|e| corrupt(format!("{name}: {e}")))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version).map_err(|_| corrupt("truncated header"))?;
    if version[0] != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {}", version[0])));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(|_| corrupt("truncated header"))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(|_| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| corrupt(e.to_string()))?;

    let mut model = FusionModel::<f32>::build(header.model_config)?;
    {
        let mut params = model.named_parameters_mut();
        if params.len() != header.tensors.len() {
            return Err(corrupt(format!(
                "expected {} tensors, header lists {}",
                params.len(),
                header.tensors.len()
            )));
        }
        for ((name, p), entry) in params.iter_mut().zip(&header.tensors) {
            if *name != entry.name || p.dim() != (entry.rows, entry.cols) {
                return Err(corrupt(format!("tensor {} does not match the architecture", entry.name)));
            }
            let (values, _) = read_tensor(&mut r).map_err(|e| corrupt(format!("{name}: {e}")))?;
            if values.dim() != p.dim() {
                return Err(corrupt(format!("{name}: stored shape {:?}", values.dim())));
            }
            **p = values;
        }
    }
    Ok(Checkpoint {
        model,
        train_config: header.train_config,
        history: header.history,
        best_epoch: header.best_epoch,
        language: header.language,
    })
}

/// Writes atomically via a temporary sibling file.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_checkpoint(&mut w, ckpt)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let file = fs::File::open(path)?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::ProviderDims;
    use crate::models::{EpochLog, Variant};

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::new(Variant::Transformer, ProviderDims::uniform(16, 4)).with_seed(3);
        Checkpoint {
            model: FusionModel::build(cfg).unwrap(),
            train_config: TrainConfig::default(),
            history: vec![EpochLog {
                epoch: 1,
                train_loss: 3.5,
                val_loss: 3.25,
                train_acc: 0.1,
                val_acc: 0.2,
                lr: 1e-3,
                stopped_early: false,
            }],
            best_epoch: 1,
            language: LanguageCode::Hi,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, ckpt);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn awkward_floats_survive_the_header() {
        let mut ckpt = sample();
        ckpt.history[0].train_loss = 3.695_526_275_634_766_6;
        ckpt.history[0].val_loss = 0.1 + 0.2;
        ckpt.train_config.learning_rate = 1.0 / 3.0;
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ckpt).unwrap();
        assert_eq!(read_checkpoint(&bytes[..]).unwrap(), ckpt);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &sample()).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), sample());
    }

    #[test]
    fn damage_is_detected() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &sample()).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint(&bad_magic[..]).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(read_checkpoint(&bad_version[..]).is_err());
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        assert!(read_checkpoint(&bytes[..]).is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() / 2]).is_err());
    }
}
