//! Record model, ingestion, union construction, statistics, vocabularies,
//! and the synthetic scene generator.

mod io;
mod record;
mod stats;
mod synth;
mod union;
mod vocab;

use thiserror::Error;

pub use io::{load_records, save_records, LoadOutcome, ParseMode};
pub use record::{
    ObjectEntity, OcrToken, QARecord, Source, Split, ANSWER_COUNT, OBJECT_CAP, OCR_CAP,
};
pub use stats::{
    compute_stats, format_proportion, normalize_words, SourceCell, StatsReport, DEFAULT_TOP_K,
};
pub use synth::{
    generate_synthetic, SynthConfig, BIAS_WORD, COUNT_WORDS, RELATIONS, SHAPES, WORD_POOL,
};
pub use union::{build_union, filter_has_text, UnionDataset, UnionReport};
pub use vocab::{
    build_vocabulary, AnswerVocabulary, WordVocab, BEGIN_INDEX, BEGIN_TOKEN, END_INDEX, END_TOKEN,
    UNK_INDEX, UNK_TOKEN,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{message}")]
    Validation { message: String },
}
