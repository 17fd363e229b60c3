//! Desk-scale text-VQA training and evaluation.
//!
//! The crate trains a pointer-augmented multimodal transformer over three
//! entity modalities (detected objects, OCR tokens, question words), merges
//! visual-question and text-question datasets into a single union corpus, and
//! measures how much that union reduces language-prior bias. Everything is
//! deterministic given a seed: datasets, initialization, training, and
//! checkpoints reproduce byte for byte.

pub mod dataset;
pub mod evaluator;
pub mod embedder;
pub mod model;
pub mod numerics;
