//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Sizes of the joint transformer, the decoder, and the feature families.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Joint embedding width.
    pub d: usize,
    /// Transformer layers.
    pub layers: usize,
    /// Attention heads; must divide `d`.
    pub heads: usize,
    /// Maximum autoregressive decoding steps.
    pub max_steps: usize,
    /// OCR tokens kept per record.
    pub ocr_cap: usize,
    /// Detected objects kept per record.
    pub obj_cap: usize,
    /// Question words kept per record.
    pub question_cap: usize,
    /// Answer vocabulary size, including the three specials.
    pub vocab_size: usize,
    /// Feed-forward hidden width.
    pub ffn_width: usize,
    /// Object feature width.
    pub f_obj: usize,
    /// OCR word-vector width.
    pub f_text: usize,
    /// OCR appearance-vector width.
    pub f_appearance: usize,
    /// Question-word vocabulary size, including the unknown word.
    pub question_vocab_size: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: d=64, 2 layers, 4 heads, 12 decode steps, the
    /// 50/100/20 entity caps, and a 4d feed-forward.
    pub fn desk_scale(vocab_size: usize, question_vocab_size: usize) -> Self {
        Self {
            d: 64,
            layers: 2,
            heads: 4,
            max_steps: 12,
            ocr_cap: 50,
            obj_cap: 100,
            question_cap: 20,
            vocab_size,
            ffn_width: 256,
            f_obj: 32,
            f_text: 32,
            f_appearance: 8,
            question_vocab_size,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |message: String| Err(ModelError::Config { message });
        if self.d < 2 {
            return fail(format!("d must be at least 2, got {}", self.d));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return fail(format!(
                "d ({}) must be divisible by heads ({})",
                self.d, self.heads
            ));
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1".into());
        }
        if self.vocab_size < 3 {
            return fail(format!(
                "vocab_size must include the three specials, got {}",
                self.vocab_size
            ));
        }
        for (name, v) in [
            ("ocr_cap", self.ocr_cap),
            ("obj_cap", self.obj_cap),
            ("question_cap", self.question_cap),
            ("ffn_width", self.ffn_width),
            ("f_obj", self.f_obj),
            ("f_text", self.f_text),
            ("f_appearance", self.f_appearance),
            ("question_vocab_size", self.question_vocab_size),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.d / self.heads
    }
}
