use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::network::{MixedLm, ModelConfig};
use super::vocab::Vocab;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    kind: String,
    trained: bool,
    config: ModelConfig,
    vocab: Vocab,
    params: BTreeMap<String, Matrix>,
}

/// Write a self-describing JSON checkpoint.
pub fn save_checkpoint(model: &MixedLm, kind: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        trained: model.trained,
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        params: model.params.to_named(),
    };
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, &file)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load a checkpoint, returning the model and its recorded kind.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MixedLm, String)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile = serde_json::from_reader(BufReader::new(f))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::validation(
            "version",
            format!("unsupported checkpoint version {}", file.version),
        ));
    }
    let mut model = MixedLm::new(file.config, file.vocab, 0)?;
    model.params.load_named(&file.params)?;
    model.trained = file.trained;
    Ok((model, file.kind))
}
