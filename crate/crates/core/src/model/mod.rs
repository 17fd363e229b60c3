//! Joint transformer over all entities plus the autoregressive pointer
//! decoder, with training, checkpointing, and attention export.

mod attention;
mod checkpoint;
mod config;
mod decoder;
mod encoder;
mod params;
mod train;

use std::path::Path;

use thiserror::Error;

use crate::dataset::{AnswerVocabulary, QARecord, WordVocab};
use crate::numerics::NumericsError;

pub use attention::{export_attention, EntityMass, Heatmap, HEATMAP_SIZE};
pub use config::ModelConfig;
pub use decoder::{
    decode_greedy, pointer_scores, DecodeStep, DecodedAnswer, StepChoice, StepScores,
};
pub use encoder::{encode, joint_mask};
pub use params::{LayerNodes, LayerParams, ModelNodes, ModelParams, PointerNodes, PointerParams};
pub use train::{
    batch_loss, model_grad_check, run_training, train_step, AdamWOptions, AdamWState,
    TrainLoopOptions,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{message}")]
    Config { message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid checkpoint: {message}")]
    Checkpoint { message: String },
}

/// A trained or freshly initialized model bundled with its configuration
/// and vocabularies.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ModelParams,
    pub answer_vocab: AnswerVocabulary,
    pub question_vocab: WordVocab,
}

impl Model {
    /// Fresh parameters for the given configuration and vocabularies.
    pub fn init(
        cfg: ModelConfig,
        answer_vocab: AnswerVocabulary,
        question_vocab: WordVocab,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let params = ModelParams::init(&cfg, seed);
        Self::assemble(cfg, params, answer_vocab, question_vocab)
    }

    pub(crate) fn assemble(
        cfg: ModelConfig,
        params: ModelParams,
        answer_vocab: AnswerVocabulary,
        question_vocab: WordVocab,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        if cfg.vocab_size != answer_vocab.len() {
            return Err(ModelError::Config {
                message: format!(
                    "vocab_size {} does not match answer vocabulary of {}",
                    cfg.vocab_size,
                    answer_vocab.len()
                ),
            });
        }
        if cfg.question_vocab_size != question_vocab.len() {
            return Err(ModelError::Config {
                message: format!(
                    "question_vocab_size {} does not match question vocabulary of {}",
                    cfg.question_vocab_size,
                    question_vocab.len()
                ),
            });
        }
        Ok(Self {
            cfg,
            params,
            answer_vocab,
            question_vocab,
        })
    }

    /// Greedy-decodes one record.
    pub fn decode(&self, record: &QARecord) -> Result<DecodedAnswer, ModelError> {
        decode_greedy(
            &self.params,
            &self.cfg,
            record,
            &self.answer_vocab,
            &self.question_vocab,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        checkpoint::load(path)
    }
}

#[cfg(test)]
mod tests;
