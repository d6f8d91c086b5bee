//! Checkpoint directory: `weights.safetensors`, `vocab.json`,
//! `config.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::model::{QuestionModel, TrainReport};
use crate::params::ParamStore;
use crate::vocab::Vocab;

pub const WEIGHTS: &str = "weights.safetensors";
pub const VOCAB: &str = "vocab.json";
pub const CONFIG: &str = "config.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ModelConfig,
    pub attention_layer: Option<usize>,
    pub vocab_size: usize,
    #[serde(default)]
    pub report: Option<TrainReport>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.to_path_buf(), source }
}

pub fn save(model: &QuestionModel, report: Option<&TrainReport>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    model.store.save(&dir.join(WEIGHTS))?;
    let vocab_path = dir.join(VOCAB);
    std::fs::write(&vocab_path, serde_json::to_vec(&model.vocab)?).map_err(io(&vocab_path))?;
    let manifest = Manifest {
        config: model.cfg.clone(),
        attention_layer: model.attention_layer,
        vocab_size: model.vocab.len(),
        report: report.cloned(),
    };
    let cfg_path = dir.join(CONFIG);
    std::fs::write(&cfg_path, serde_json::to_vec_pretty(&manifest)?).map_err(io(&cfg_path))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(QuestionModel, Manifest)> {
    let cfg_path = dir.join(CONFIG);
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(&cfg_path).map_err(io(&cfg_path))?)?;
    let vocab_path = dir.join(VOCAB);
    let mut vocab: Vocab = serde_json::from_slice(&std::fs::read(&vocab_path).map_err(io(&vocab_path))?)?;
    vocab.reindex();
    if vocab.len() != manifest.vocab_size {
        return Err(ModelError::Config(format!("vocab has {} tokens, manifest says {}", vocab.len(), manifest.vocab_size)));
    }
    let before = ParamStore::load(&dir.join(WEIGHTS), manifest.config.seed)?;
    let expected = before.num_parameters();
    let model = QuestionModel::with_store(&manifest.config, vocab, before, manifest.attention_layer)?;
    if model.store.num_parameters() != expected {
        return Err(ModelError::Config("checkpoint is missing parameters for this configuration".into()));
    }
    Ok((model, manifest))
}

/// First 12 hex digits of the SHA-256 of the weights file.
pub fn version(dir: &Path) -> Result<String> {
    let path = dir.join(WEIGHTS);
    let bytes = std::fs::read(&path).map_err(io(&path))?;
    Ok(hex::encode(Sha256::digest(&bytes))[..12].to_string())
}
