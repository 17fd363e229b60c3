//! Projection of objects, OCR tokens, and question words into the shared
//! d-dimensional joint embedding space.
//!
//! The raw feature families have unequal widths, so each summand is
//! projected to width d and layer-normalized before the additive combination:
//!
//! - object row:   `LN(feat . W_obj) + LN(bbox . W_box) + type_obj`
//! - OCR row:      `LN(word . W_ft + appearance . W_ap) + LN(bbox . W_box) + type_ocr`
//! - question row: `word_table[w] + pos_table[position] + type_ques`
//!
//! A learned per-modality type vector lets the joint transformer tell row
//! kinds apart. Tokens without a precomputed word vector get a deterministic
//! hash-derived stand-in, so identical token texts always share a vector.

use crate::dataset::{normalize_words, ObjectEntity, OcrToken, WordVocab};
use crate::numerics::{hash_str, Graph, NodeId, NumericsError, SplitMix64, Tensor};

/// Entity modality of one row in the joint sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Object,
    Ocr,
    Question,
}

/// Test hook: `Identity` replaces every layer norm with a pass-through so
/// the additive structure of the embeddings can be checked directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerNormMode {
    Learned,
    Identity,
}

#[derive(Debug, Clone)]
pub struct LnParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LnParams {
    pub fn unit(d: usize) -> Self {
        Self {
            gain: Tensor::filled(1, d, 1.0),
            bias: Tensor::zeros(1, d),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LnNodes {
    pub gain: NodeId,
    pub bias: NodeId,
}

impl LnParams {
    pub fn register(&self, g: &mut Graph) -> LnNodes {
        LnNodes {
            gain: g.input(self.gain.clone()),
            bias: g.input(self.bias.clone()),
        }
    }
}

/// All learnable arrays of the embedder plus the per-record caps.
#[derive(Debug, Clone)]
pub struct EmbedderParams {
    pub w_obj: Tensor,      // f_obj x d
    pub w_box: Tensor,      // 4 x d
    pub w_ft: Tensor,       // f_text x d
    pub w_ap: Tensor,       // f_appearance x d
    pub word_table: Tensor, // question vocabulary x d
    pub pos_table: Tensor,  // question cap x d
    pub ln_obj_feat: LnParams,
    pub ln_obj_box: LnParams,
    pub ln_ocr_feat: LnParams,
    pub ln_ocr_box: LnParams,
    pub type_obj: Tensor,  // 1 x d
    pub type_ocr: Tensor,  // 1 x d
    pub type_ques: Tensor, // 1 x d
    pub obj_cap: usize,
    pub ocr_cap: usize,
}

impl EmbedderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        d: usize,
        f_obj: usize,
        f_text: usize,
        f_appearance: usize,
        question_vocab: usize,
        question_cap: usize,
        obj_cap: usize,
        ocr_cap: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        let init = |rows, cols, rng: &mut SplitMix64| Tensor::uniform(rows, cols, -0.05, 0.05, rng);
        Self {
            w_obj: init(f_obj, d, rng),
            w_box: init(4, d, rng),
            w_ft: init(f_text, d, rng),
            w_ap: init(f_appearance, d, rng),
            word_table: init(question_vocab, d, rng),
            pos_table: init(question_cap, d, rng),
            ln_obj_feat: LnParams::unit(d),
            ln_obj_box: LnParams::unit(d),
            ln_ocr_feat: LnParams::unit(d),
            ln_ocr_box: LnParams::unit(d),
            type_obj: init(1, d, rng),
            type_ocr: init(1, d, rng),
            type_ques: init(1, d, rng),
            obj_cap,
            ocr_cap,
        }
    }

    pub fn d(&self) -> usize {
        self.w_obj.cols()
    }

    pub fn f_obj(&self) -> usize {
        self.w_obj.rows()
    }

    pub fn f_text(&self) -> usize {
        self.w_ft.rows()
    }

    pub fn f_appearance(&self) -> usize {
        self.w_ap.rows()
    }

    pub fn question_cap(&self) -> usize {
        self.pos_table.rows()
    }

    pub fn register(&self, g: &mut Graph) -> EmbedderNodes {
        EmbedderNodes {
            w_obj: g.input(self.w_obj.clone()),
            w_box: g.input(self.w_box.clone()),
            w_ft: g.input(self.w_ft.clone()),
            w_ap: g.input(self.w_ap.clone()),
            word_table: g.input(self.word_table.clone()),
            pos_table: g.input(self.pos_table.clone()),
            ln_obj_feat: self.ln_obj_feat.register(g),
            ln_obj_box: self.ln_obj_box.register(g),
            ln_ocr_feat: self.ln_ocr_feat.register(g),
            ln_ocr_box: self.ln_ocr_box.register(g),
            type_obj: g.input(self.type_obj.clone()),
            type_ocr: g.input(self.type_ocr.clone()),
            type_ques: g.input(self.type_ques.clone()),
            obj_cap: self.obj_cap,
            ocr_cap: self.ocr_cap,
        }
    }
}

/// Graph handles for one registration of [`EmbedderParams`].
#[derive(Debug, Clone, Copy)]
pub struct EmbedderNodes {
    pub w_obj: NodeId,
    pub w_box: NodeId,
    pub w_ft: NodeId,
    pub w_ap: NodeId,
    pub word_table: NodeId,
    pub pos_table: NodeId,
    pub ln_obj_feat: LnNodes,
    pub ln_obj_box: LnNodes,
    pub ln_ocr_feat: LnNodes,
    pub ln_ocr_box: LnNodes,
    pub type_obj: NodeId,
    pub type_ocr: NodeId,
    pub type_ques: NodeId,
    pub obj_cap: usize,
    pub ocr_cap: usize,
}

/// Deterministic stand-in for a missing word embedding: a splitmix stream
/// keyed on the lowercased token expands into `dim` values in `[-0.5, 0.5)`.
pub fn standin_word_vec(text: &str, dim: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(hash_str(&text.to_lowercase()));
    (0..dim).map(|_| rng.uniform(-0.5, 0.5)).collect()
}

/// Relative bounding box feature: the image-normalized corners as given.
pub fn encode_bbox(bbox: &[f64; 4]) -> [f64; 4] {
    *bbox
}

fn ln_or_identity(
    g: &mut Graph,
    x: NodeId,
    ln: LnNodes,
    mode: LayerNormMode,
) -> Result<NodeId, NumericsError> {
    match mode {
        LayerNormMode::Learned => g.layer_norm(x, ln.gain, ln.bias),
        LayerNormMode::Identity => Ok(x),
    }
}

/// Projects objects into the joint space; `None` when the list is empty.
pub fn embed_objects(
    g: &mut Graph,
    nodes: &EmbedderNodes,
    objects: &[ObjectEntity],
    mode: LayerNormMode,
) -> Result<Option<NodeId>, NumericsError> {
    let objects = &objects[..objects.len().min(nodes.obj_cap)];
    if objects.is_empty() {
        return Ok(None);
    }
    let f_obj = g.value(nodes.w_obj).rows();
    let mut feats = Vec::with_capacity(objects.len() * f_obj);
    let mut boxes = Vec::with_capacity(objects.len() * 4);
    for (i, object) in objects.iter().enumerate() {
        if object.feature.len() != f_obj {
            return Err(NumericsError::InvalidArgument {
                op: "embed_objects",
                reason: format!(
                    "objects[{i}].feature has length {}, expected {}",
                    object.feature.len(),
                    f_obj
                ),
            });
        }
        feats.extend_from_slice(&object.feature);
        boxes.extend_from_slice(&encode_bbox(&object.bbox));
    }
    let feats = g.input(Tensor::matrix(objects.len(), f_obj, feats)?);
    let boxes = g.input(Tensor::matrix(objects.len(), 4, boxes)?);

    let feat_proj = g.matmul(feats, nodes.w_obj)?;
    let feat_proj = ln_or_identity(g, feat_proj, nodes.ln_obj_feat, mode)?;
    let box_proj = g.matmul(boxes, nodes.w_box)?;
    let box_proj = ln_or_identity(g, box_proj, nodes.ln_obj_box, mode)?;
    let summed = g.add(feat_proj, box_proj)?;
    Ok(Some(g.add_row(summed, nodes.type_obj)?))
}

/// Projects OCR tokens into the joint space; `None` when the list is empty.
/// Missing word vectors fall back to the hash stand-in; a missing appearance
/// contributes exactly zero, the same as an all-zero appearance vector.
pub fn embed_ocr(
    g: &mut Graph,
    nodes: &EmbedderNodes,
    tokens: &[OcrToken],
    mode: LayerNormMode,
) -> Result<Option<NodeId>, NumericsError> {
    let tokens = &tokens[..tokens.len().min(nodes.ocr_cap)];
    if tokens.is_empty() {
        return Ok(None);
    }
    let f_text = g.value(nodes.w_ft).rows();
    let f_ap = g.value(nodes.w_ap).rows();
    let mut word = Vec::with_capacity(tokens.len() * f_text);
    let mut appearance = Vec::with_capacity(tokens.len() * f_ap);
    let mut boxes = Vec::with_capacity(tokens.len() * 4);
    for (i, token) in tokens.iter().enumerate() {
        match &token.word_vec {
            Some(v) if v.len() != f_text => {
                return Err(NumericsError::InvalidArgument {
                    op: "embed_ocr",
                    reason: format!(
                        "ocr[{i}].word_vec has length {}, expected {}",
                        v.len(),
                        f_text
                    ),
                })
            }
            Some(v) => word.extend_from_slice(v),
            None => word.extend_from_slice(&standin_word_vec(&token.text, f_text)),
        }
        match &token.appearance {
            Some(v) if v.len() != f_ap => {
                return Err(NumericsError::InvalidArgument {
                    op: "embed_ocr",
                    reason: format!(
                        "ocr[{i}].appearance has length {}, expected {}",
                        v.len(),
                        f_ap
                    ),
                })
            }
            Some(v) => appearance.extend_from_slice(v),
            None => appearance.extend_from_slice(&vec![0.0; f_ap]),
        }
        boxes.extend_from_slice(&encode_bbox(&token.bbox));
    }
    let word = g.input(Tensor::matrix(tokens.len(), f_text, word)?);
    let appearance = g.input(Tensor::matrix(tokens.len(), f_ap, appearance)?);
    let boxes = g.input(Tensor::matrix(tokens.len(), 4, boxes)?);

    let word_proj = g.matmul(word, nodes.w_ft)?;
    let ap_proj = g.matmul(appearance, nodes.w_ap)?;
    let feat = g.add(word_proj, ap_proj)?;
    let feat = ln_or_identity(g, feat, nodes.ln_ocr_feat, mode)?;
    let box_proj = g.matmul(boxes, nodes.w_box)?;
    let box_proj = ln_or_identity(g, box_proj, nodes.ln_ocr_box, mode)?;
    let summed = g.add(feat, box_proj)?;
    Ok(Some(g.add_row(summed, nodes.type_ocr)?))
}

/// Embeds the question words: normalized tokenization, unknown words shared
/// on the unk row, truncation to the question cap, and an unk row for the
/// empty question so the sequence is never empty.
pub fn embed_question(
    g: &mut Graph,
    nodes: &EmbedderNodes,
    question: &str,
    vocab: &WordVocab,
) -> Result<NodeId, NumericsError> {
    let cap = g.value(nodes.pos_table).rows();
    let mut ids: Vec<usize> = normalize_words(question)
        .iter()
        .map(|w| vocab.lookup(w))
        .collect();
    ids.truncate(cap);
    if ids.is_empty() {
        ids.push(0);
    }
    let positions: Vec<usize> = (0..ids.len()).collect();
    let words = g.gather_rows(nodes.word_table, ids)?;
    let pos = g.gather_rows(nodes.pos_table, positions)?;
    let summed = g.add(words, pos)?;
    g.add_row(summed, nodes.type_ques)
}

/// The joint entity list: object rows, then OCR rows, then question rows.
#[derive(Debug, Clone)]
pub struct EntitySequence {
    pub node: NodeId,
    pub kinds: Vec<EntityKind>,
    pub n_obj: usize,
    pub n_ocr: usize,
    pub n_ques: usize,
}

impl EntitySequence {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Row of the i-th OCR token within the assembled sequence.
    pub fn ocr_row(&self, i: usize) -> usize {
        debug_assert!(i < self.n_ocr);
        self.n_obj + i
    }
}

/// Concatenates the modality blocks in the documented order.
pub fn assemble(
    g: &mut Graph,
    objects: Option<NodeId>,
    ocr: Option<NodeId>,
    question: NodeId,
) -> Result<EntitySequence, NumericsError> {
    let mut parts = Vec::new();
    let mut kinds = Vec::new();
    let mut n_obj = 0;
    let mut n_ocr = 0;
    if let Some(node) = objects {
        n_obj = g.value(node).rows();
        kinds.extend(std::iter::repeat(EntityKind::Object).take(n_obj));
        parts.push(node);
    }
    if let Some(node) = ocr {
        n_ocr = g.value(node).rows();
        kinds.extend(std::iter::repeat(EntityKind::Ocr).take(n_ocr));
        parts.push(node);
    }
    let n_ques = g.value(question).rows();
    kinds.extend(std::iter::repeat(EntityKind::Question).take(n_ques));
    parts.push(question);
    let node = g.concat_rows(&parts)?;
    Ok(EntitySequence {
        node,
        kinds,
        n_obj,
        n_ocr,
        n_ques,
    })
}
