//! Versioned binary checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian u32 schema version, a
//! length-prefixed JSON header (config plus both vocabularies), then the
//! named tensors as length-prefixed name, u64 dims, and raw little-endian
//! doubles. Round-trips are bit-exact.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnswerVocabulary, WordVocab};
use crate::numerics::Tensor;

use super::config::ModelConfig;
use super::params::ModelParams;
use super::{Model, ModelError};

const MAGIC: &[u8; 8] = b"LOOKREAD";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    answer_vocab: Vec<String>,
    question_vocab: Vec<String>,
}

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        message: message.into(),
    }
}

pub fn save(model: &Model, path: &Path) -> Result<(), ModelError> {
    let header = Header {
        config: model.cfg.clone(),
        answer_vocab: model.answer_vocab.tokens().to_vec(),
        question_vocab: model.question_vocab.words().to_vec(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| corrupt(format!("header encode: {e}")))?;

    let named = model.params.named();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&(named.len() as u64).to_le_bytes());
    for (name, tensor) in named {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u64).to_le_bytes());
        for &dim in tensor.shape() {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in tensor.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt("unexpected end of file"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(path: &Path) -> Result<Model, ModelError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic; not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!(
            "unsupported schema version {version}, expected {VERSION}"
        )));
    }
    let header_len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| corrupt(format!("header decode: {e}")))?;
    header.config.validate()?;

    let tensor_count = r.u64()? as usize;
    let mut tensors: HashMap<String, Tensor> = HashMap::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name_len = r.u64()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| corrupt("tensor name is not UTF-8"))?;
        let ndim = r.u64()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        for _ in 0..numel {
            values.push(r.f64()?);
        }
        let tensor = Tensor::new(shape, values)
            .map_err(|e| corrupt(format!("tensor `{name}`: {e}")))?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(corrupt(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes after tensors"));
    }

    let answer_vocab = AnswerVocabulary::from_tokens(header.answer_vocab)
        .map_err(|e| corrupt(e.to_string()))?;
    let question_vocab =
        WordVocab::from_words(header.question_vocab).map_err(|e| corrupt(e.to_string()))?;

    // Materialize parameters with the checkpoint's shapes, then overwrite
    // every tensor by name.
    let mut params = ModelParams::init(&header.config, 0);
    for (name, slot) in params.named_mut() {
        let tensor = tensors
            .remove(&name)
            .ok_or_else(|| corrupt(format!("missing tensor `{name}`")))?;
        if tensor.shape() != slot.shape() {
            return Err(corrupt(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    if let Some(name) = tensors.keys().next() {
        return Err(corrupt(format!("unexpected tensor `{name}`")));
    }

    Model::assemble(header.config, params, answer_vocab, question_vocab)
}
