//! Autoregressive greedy decoding with the dynamic vocabulary/OCR pointer.

use std::sync::Arc;

use crate::dataset::{AnswerVocabulary, QARecord, WordVocab, BEGIN_INDEX, END_INDEX};
use crate::embedder::{
    assemble, embed_objects, embed_ocr, embed_question, EntityKind, EntitySequence, LayerNormMode,
};
use crate::numerics::{Graph, NodeId, NumericsError, Tensor};

use super::config::ModelConfig;
use super::encoder::{encode, joint_mask, AttentionNodes};
use super::params::{ModelNodes, PointerNodes};
use super::ModelError;

/// One decoding decision: either a fixed-vocabulary token or a copy of a
/// detected OCR token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepChoice {
    Vocab(usize),
    Ocr(usize),
}

#[derive(Debug, Clone)]
pub struct DecodeStep {
    pub choice: StepChoice,
    pub score: f64,
}

/// Raw scores over the fixed vocabulary and the record's OCR tokens.
#[derive(Debug, Clone)]
pub struct StepScores {
    pub vocab: Vec<f64>,
    pub ocr: Vec<f64>,
}

impl StepScores {
    /// Greedy choice: argmax over the concatenation `[vocab, ocr]`; the
    /// first maximal index wins ties.
    pub fn argmax(&self) -> (StepChoice, f64) {
        let mut best = (StepChoice::Vocab(0), f64::NEG_INFINITY);
        for (i, &s) in self.vocab.iter().enumerate() {
            if s > best.1 {
                best = (StepChoice::Vocab(i), s);
            }
        }
        for (i, &s) in self.ocr.iter().enumerate() {
            if s > best.1 {
                best = (StepChoice::Ocr(i), s);
            }
        }
        best
    }
}

/// Greedy decode result with the attention tensors of the final joint pass.
#[derive(Debug, Clone)]
pub struct DecodedAnswer {
    pub steps: Vec<DecodeStep>,
    /// Step tokens joined by single spaces, end token excluded.
    pub text: String,
    /// `[layer][head]`, each `(entities + steps) x (entities + steps)`,
    /// row-stochastic.
    pub attention: Vec<Vec<Tensor>>,
    pub entity_kinds: Vec<EntityKind>,
    pub n_entities: usize,
}

/// Bilinear pointer: projected decoder states against projected OCR encoder
/// outputs, scaled by `1/sqrt(d)`.
pub fn pointer_scores(
    g: &mut Graph,
    dec_states: NodeId,
    ocr_states: NodeId,
    ptr: &PointerNodes,
) -> Result<NodeId, NumericsError> {
    let d = g.value(dec_states).cols();
    let zq = g.matmul(dec_states, ptr.w_q)?;
    let zq = g.add_row(zq, ptr.b_q)?;
    let so = g.matmul(ocr_states, ptr.w_o)?;
    let so = g.add_row(so, ptr.b_o)?;
    let raw = g.matmul_nt(zq, so)?;
    g.scale(raw, 1.0 / (d as f64).sqrt())
}

/// Embeds a record's three modalities and assembles the entity sequence.
pub(crate) fn embed_record(
    g: &mut Graph,
    nodes: &ModelNodes,
    record: &QARecord,
    question_vocab: &WordVocab,
) -> Result<EntitySequence, NumericsError> {
    let objects = embed_objects(g, &nodes.embedder, &record.objects, LayerNormMode::Learned)?;
    let ocr = embed_ocr(g, &nodes.embedder, &record.ocr, LayerNormMode::Learned)?;
    let question = embed_question(g, &nodes.embedder, &record.question, question_vocab)?;
    assemble(g, objects, ocr, question)
}

/// Encoder pass over the entities alone, plus the gathered OCR output rows
/// used by the pointer and by copy feedback.
pub(crate) fn encode_entities(
    g: &mut Graph,
    nodes: &ModelNodes,
    seq: &EntitySequence,
    cfg: &ModelConfig,
) -> Result<(NodeId, Option<NodeId>), NumericsError> {
    let (states, _) = encode(g, seq.node, &nodes.layers, cfg.heads, None)?;
    let ocr_states = if seq.n_ocr > 0 {
        let rows: Vec<usize> = (0..seq.n_ocr).map(|i| seq.ocr_row(i)).collect();
        Some(g.gather_rows(states, rows)?)
    } else {
        None
    };
    Ok((states, ocr_states))
}

/// Joint pass over entities plus the given decoder input rows; returns the
/// decoder output states and the attention tensors.
pub(crate) fn joint_pass(
    g: &mut Graph,
    nodes: &ModelNodes,
    seq: &EntitySequence,
    dec_inputs: &[NodeId],
    cfg: &ModelConfig,
) -> Result<(NodeId, AttentionNodes), NumericsError> {
    let dec_block = g.concat_rows(dec_inputs)?;
    let joint = g.concat_rows(&[seq.node, dec_block])?;
    let mask = Arc::new(joint_mask(seq.len(), dec_inputs.len()));
    let (states, attention) = encode(g, joint, &nodes.layers, cfg.heads, Some(&mask))?;
    let rows: Vec<usize> = (0..dec_inputs.len()).map(|t| seq.len() + t).collect();
    let dec_states = g.gather_rows(states, rows)?;
    Ok((dec_states, attention))
}

/// Scores for a block of decoder states: vocabulary logits next to pointer
/// logits over the OCR tokens (when any are present).
pub(crate) fn step_logits(
    g: &mut Graph,
    nodes: &ModelNodes,
    dec_states: NodeId,
    ocr_states: Option<NodeId>,
) -> Result<NodeId, NumericsError> {
    let vocab = g.matmul(dec_states, nodes.w_vocab)?;
    let vocab = g.add_row(vocab, nodes.b_vocab)?;
    match ocr_states {
        Some(ocr) => {
            let ptr = pointer_scores(g, dec_states, ocr, &nodes.pointer)?;
            g.concat_cols(&[vocab, ptr])
        }
        None => Ok(vocab),
    }
}

/// Greedy autoregressive decoding for one record.
///
/// Step inputs: the begin-token embedding at step zero, then the previous
/// vocabulary token's embedding, or the previous OCR token's encoder output
/// row when the previous choice was a copy. Stops at the end token or after
/// `max_steps`.
pub fn decode_greedy(
    params: &super::ModelParams,
    cfg: &ModelConfig,
    record: &QARecord,
    answer_vocab: &AnswerVocabulary,
    question_vocab: &WordVocab,
) -> Result<DecodedAnswer, ModelError> {
    let mut g = Graph::new();
    let nodes = params.register(&mut g);
    let seq = embed_record(&mut g, &nodes, record, question_vocab)?;
    let (ent_states, ocr_states) = encode_entities(&mut g, &nodes, &seq, cfg)?;

    let begin = g.gather_rows(nodes.ans_table, vec![BEGIN_INDEX])?;
    let mut dec_inputs = vec![begin];
    let mut steps: Vec<DecodeStep> = Vec::new();
    let mut final_attention: AttentionNodes = Vec::new();

    for t in 0..cfg.max_steps {
        let (dec_states, attention) = joint_pass(&mut g, &nodes, &seq, &dec_inputs, cfg)?;
        final_attention = attention;
        let logits = step_logits(&mut g, &nodes, dec_states, ocr_states)?;
        let row = g.value(logits).row_slice(t);
        let scores = StepScores {
            vocab: row[..cfg.vocab_size].to_vec(),
            ocr: row[cfg.vocab_size..].to_vec(),
        };
        let (choice, score) = scores.argmax();
        steps.push(DecodeStep { choice, score });
        if choice == StepChoice::Vocab(END_INDEX) {
            break;
        }
        if t + 1 < cfg.max_steps {
            let next = match choice {
                StepChoice::Vocab(v) => g.gather_rows(nodes.ans_table, vec![v])?,
                StepChoice::Ocr(i) => g.gather_rows(ent_states, vec![seq.ocr_row(i)])?,
            };
            dec_inputs.push(next);
        }
    }

    let text = steps
        .iter()
        .filter_map(|s| match s.choice {
            StepChoice::Vocab(END_INDEX) => None,
            StepChoice::Vocab(v) => Some(answer_vocab.token(v).to_string()),
            StepChoice::Ocr(i) => Some(record.ocr[i].text.clone()),
        })
        .collect::<Vec<String>>()
        .join(" ");

    let attention = final_attention
        .iter()
        .map(|layer| layer.iter().map(|&id| g.value(id).clone()).collect())
        .collect();

    Ok(DecodedAnswer {
        steps,
        text,
        attention,
        entity_kinds: seq.kinds.clone(),
        n_entities: seq.len(),
    })
}
