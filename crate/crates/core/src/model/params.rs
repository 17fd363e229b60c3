//! Learnable parameters of the full model and their graph registration.
//!
//! `named`, `named_mut`, and `register` must walk the same fields in the same
//! order: the optimizer accumulates gradients positionally and the checkpoint
//! format stores tensors by these names.

use crate::embedder::{EmbedderNodes, EmbedderParams, LnNodes, LnParams};
use crate::numerics::{Graph, NodeId, SplitMix64, Tensor};

use super::config::ModelConfig;

const INIT_RANGE: f64 = 0.05;

/// One pre-norm transformer layer.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub ln_attn: LnParams,
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub ln_ffn: LnParams,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
}

impl LayerParams {
    fn init(d: usize, ffn: usize, rng: &mut SplitMix64) -> Self {
        let u = |r, c, rng: &mut SplitMix64| Tensor::uniform(r, c, -INIT_RANGE, INIT_RANGE, rng);
        Self {
            ln_attn: LnParams::unit(d),
            w_q: u(d, d, rng),
            b_q: u(1, d, rng),
            w_k: u(d, d, rng),
            b_k: u(1, d, rng),
            w_v: u(d, d, rng),
            b_v: u(1, d, rng),
            w_o: u(d, d, rng),
            b_o: u(1, d, rng),
            ln_ffn: LnParams::unit(d),
            ffn_w1: u(d, ffn, rng),
            ffn_b1: u(1, ffn, rng),
            ffn_w2: u(ffn, d, rng),
            ffn_b2: u(1, d, rng),
        }
    }

    pub fn register(&self, g: &mut Graph) -> LayerNodes {
        LayerNodes {
            ln_attn: self.ln_attn.register(g),
            w_q: g.input(self.w_q.clone()),
            b_q: g.input(self.b_q.clone()),
            w_k: g.input(self.w_k.clone()),
            b_k: g.input(self.b_k.clone()),
            w_v: g.input(self.w_v.clone()),
            b_v: g.input(self.b_v.clone()),
            w_o: g.input(self.w_o.clone()),
            b_o: g.input(self.b_o.clone()),
            ln_ffn: self.ln_ffn.register(g),
            ffn_w1: g.input(self.ffn_w1.clone()),
            ffn_b1: g.input(self.ffn_b1.clone()),
            ffn_w2: g.input(self.ffn_w2.clone()),
            ffn_b2: g.input(self.ffn_b2.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNodes {
    pub ln_attn: LnNodes,
    pub w_q: NodeId,
    pub b_q: NodeId,
    pub w_k: NodeId,
    pub b_k: NodeId,
    pub w_v: NodeId,
    pub b_v: NodeId,
    pub w_o: NodeId,
    pub b_o: NodeId,
    pub ln_ffn: LnNodes,
    pub ffn_w1: NodeId,
    pub ffn_b1: NodeId,
    pub ffn_w2: NodeId,
    pub ffn_b2: NodeId,
}

/// Bilinear pointer head between decoder states and OCR encoder outputs.
#[derive(Debug, Clone)]
pub struct PointerParams {
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct PointerNodes {
    pub w_q: NodeId,
    pub b_q: NodeId,
    pub w_o: NodeId,
    pub b_o: NodeId,
}

impl PointerParams {
    fn init(d: usize, rng: &mut SplitMix64) -> Self {
        let u = |r, c, rng: &mut SplitMix64| Tensor::uniform(r, c, -INIT_RANGE, INIT_RANGE, rng);
        Self {
            w_q: u(d, d, rng),
            b_q: u(1, d, rng),
            w_o: u(d, d, rng),
            b_o: u(1, d, rng),
        }
    }

    pub fn register(&self, g: &mut Graph) -> PointerNodes {
        PointerNodes {
            w_q: g.input(self.w_q.clone()),
            b_q: g.input(self.b_q.clone()),
            w_o: g.input(self.w_o.clone()),
            b_o: g.input(self.b_o.clone()),
        }
    }
}

/// Every learnable tensor of the embedder, joint transformer, and decoder
/// heads, in one d-dimensional space.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub embedder: EmbedderParams,
    pub layers: Vec<LayerParams>,
    /// Answer-token input embeddings (begin/end/unk + vocabulary words).
    pub ans_table: Tensor,
    pub w_vocab: Tensor,
    pub b_vocab: Tensor,
    pub pointer: PointerParams,
}

/// Graph handles for one registration of [`ModelParams`].
pub struct ModelNodes {
    pub embedder: EmbedderNodes,
    pub layers: Vec<LayerNodes>,
    pub ans_table: NodeId,
    pub w_vocab: NodeId,
    pub b_vocab: NodeId,
    pub pointer: PointerNodes,
}

impl ModelParams {
    /// Uniform init in [-0.05, 0.05]; layer-norm gains start at one and
    /// biases at zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let embedder = EmbedderParams::init(
            cfg.d,
            cfg.f_obj,
            cfg.f_text,
            cfg.f_appearance,
            cfg.question_vocab_size,
            cfg.question_cap,
            cfg.obj_cap,
            cfg.ocr_cap,
            &mut rng,
        );
        let layers = (0..cfg.layers)
            .map(|_| LayerParams::init(cfg.d, cfg.ffn_width, &mut rng))
            .collect();
        let u = |r, c, rng: &mut SplitMix64| Tensor::uniform(r, c, -INIT_RANGE, INIT_RANGE, rng);
        let ans_table = u(cfg.vocab_size, cfg.d, &mut rng);
        let w_vocab = u(cfg.d, cfg.vocab_size, &mut rng);
        let b_vocab = u(1, cfg.vocab_size, &mut rng);
        let pointer = PointerParams::init(cfg.d, &mut rng);
        Self {
            embedder,
            layers,
            ans_table,
            w_vocab,
            b_vocab,
            pointer,
        }
    }

    pub fn register(&self, g: &mut Graph) -> ModelNodes {
        ModelNodes {
            embedder: self.embedder.register(g),
            layers: self.layers.iter().map(|l| l.register(g)).collect(),
            ans_table: g.input(self.ans_table.clone()),
            w_vocab: g.input(self.w_vocab.clone()),
            b_vocab: g.input(self.b_vocab.clone()),
            pointer: self.pointer.register(g),
        }
    }

    /// `(name, tensor)` pairs in the canonical walk order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        let e = &self.embedder;
        out.push(("embed.w_obj".into(), &e.w_obj));
        out.push(("embed.w_box".into(), &e.w_box));
        out.push(("embed.w_ft".into(), &e.w_ft));
        out.push(("embed.w_ap".into(), &e.w_ap));
        out.push(("embed.word_table".into(), &e.word_table));
        out.push(("embed.pos_table".into(), &e.pos_table));
        for (name, ln) in [
            ("embed.ln_obj_feat", &e.ln_obj_feat),
            ("embed.ln_obj_box", &e.ln_obj_box),
            ("embed.ln_ocr_feat", &e.ln_ocr_feat),
            ("embed.ln_ocr_box", &e.ln_ocr_box),
        ] {
            out.push((format!("{name}.gain"), &ln.gain));
            out.push((format!("{name}.bias"), &ln.bias));
        }
        out.push(("embed.type_obj".into(), &e.type_obj));
        out.push(("embed.type_ocr".into(), &e.type_ocr));
        out.push(("embed.type_ques".into(), &e.type_ques));
        for (i, l) in self.layers.iter().enumerate() {
            let p = |suffix: &str| format!("enc.l{i}.{suffix}");
            out.push((p("ln_attn.gain"), &l.ln_attn.gain));
            out.push((p("ln_attn.bias"), &l.ln_attn.bias));
            out.push((p("attn.w_q"), &l.w_q));
            out.push((p("attn.b_q"), &l.b_q));
            out.push((p("attn.w_k"), &l.w_k));
            out.push((p("attn.b_k"), &l.b_k));
            out.push((p("attn.w_v"), &l.w_v));
            out.push((p("attn.b_v"), &l.b_v));
            out.push((p("attn.w_o"), &l.w_o));
            out.push((p("attn.b_o"), &l.b_o));
            out.push((p("ln_ffn.gain"), &l.ln_ffn.gain));
            out.push((p("ln_ffn.bias"), &l.ln_ffn.bias));
            out.push((p("ffn.w1"), &l.ffn_w1));
            out.push((p("ffn.b1"), &l.ffn_b1));
            out.push((p("ffn.w2"), &l.ffn_w2));
            out.push((p("ffn.b2"), &l.ffn_b2));
        }
        out.push(("dec.ans_table".into(), &self.ans_table));
        out.push(("dec.w_vocab".into(), &self.w_vocab));
        out.push(("dec.b_vocab".into(), &self.b_vocab));
        out.push(("dec.ptr.w_q".into(), &self.pointer.w_q));
        out.push(("dec.ptr.b_q".into(), &self.pointer.b_q));
        out.push(("dec.ptr.w_o".into(), &self.pointer.w_o));
        out.push(("dec.ptr.b_o".into(), &self.pointer.b_o));
        out
    }

    /// Mutable view in exactly the [`ModelParams::named`] order.
    pub(crate) fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        let e = &mut self.embedder;
        out.push(("embed.w_obj".into(), &mut e.w_obj));
        out.push(("embed.w_box".into(), &mut e.w_box));
        out.push(("embed.w_ft".into(), &mut e.w_ft));
        out.push(("embed.w_ap".into(), &mut e.w_ap));
        out.push(("embed.word_table".into(), &mut e.word_table));
        out.push(("embed.pos_table".into(), &mut e.pos_table));
        for (name, ln) in [
            ("embed.ln_obj_feat", &mut e.ln_obj_feat),
            ("embed.ln_obj_box", &mut e.ln_obj_box),
            ("embed.ln_ocr_feat", &mut e.ln_ocr_feat),
            ("embed.ln_ocr_box", &mut e.ln_ocr_box),
        ] {
            out.push((format!("{name}.gain"), &mut ln.gain));
            out.push((format!("{name}.bias"), &mut ln.bias));
        }
        out.push(("embed.type_obj".into(), &mut e.type_obj));
        out.push(("embed.type_ocr".into(), &mut e.type_ocr));
        out.push(("embed.type_ques".into(), &mut e.type_ques));
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = |suffix: &str| format!("enc.l{i}.{suffix}");
            out.push((p("ln_attn.gain"), &mut l.ln_attn.gain));
            out.push((p("ln_attn.bias"), &mut l.ln_attn.bias));
            out.push((p("attn.w_q"), &mut l.w_q));
            out.push((p("attn.b_q"), &mut l.b_q));
            out.push((p("attn.w_k"), &mut l.w_k));
            out.push((p("attn.b_k"), &mut l.b_k));
            out.push((p("attn.w_v"), &mut l.w_v));
            out.push((p("attn.b_v"), &mut l.b_v));
            out.push((p("attn.w_o"), &mut l.w_o));
            out.push((p("attn.b_o"), &mut l.b_o));
            out.push((p("ln_ffn.gain"), &mut l.ln_ffn.gain));
            out.push((p("ln_ffn.bias"), &mut l.ln_ffn.bias));
            out.push((p("ffn.w1"), &mut l.ffn_w1));
            out.push((p("ffn.b1"), &mut l.ffn_b1));
            out.push((p("ffn.w2"), &mut l.ffn_w2));
            out.push((p("ffn.b2"), &mut l.ffn_b2));
        }
        out.push(("dec.ans_table".into(), &mut self.ans_table));
        out.push(("dec.w_vocab".into(), &mut self.w_vocab));
        out.push(("dec.b_vocab".into(), &mut self.b_vocab));
        out.push(("dec.ptr.w_q".into(), &mut self.pointer.w_q));
        out.push(("dec.ptr.b_q".into(), &mut self.pointer.b_q));
        out.push(("dec.ptr.w_o".into(), &mut self.pointer.w_o));
        out.push(("dec.ptr.b_o".into(), &mut self.pointer.b_o));
        out
    }
}

impl ModelNodes {
    /// Rebuilds the node structure from ids listed in the
    /// [`ModelParams::named`] order (the inverse of [`ModelNodes::ordered`]).
    /// Used to gradient-check the full model through externally registered
    /// parameter tensors.
    pub fn from_ordered(cfg: &ModelConfig, ids: &[NodeId]) -> Self {
        let mut it = ids.iter().copied();
        let mut next = || it.next().expect("id list matches the parameter walk");
        let ln = |next: &mut dyn FnMut() -> NodeId| LnNodes {
            gain: next(),
            bias: next(),
        };
        let embedder = EmbedderNodes {
            w_obj: next(),
            w_box: next(),
            w_ft: next(),
            w_ap: next(),
            word_table: next(),
            pos_table: next(),
            ln_obj_feat: ln(&mut next),
            ln_obj_box: ln(&mut next),
            ln_ocr_feat: ln(&mut next),
            ln_ocr_box: ln(&mut next),
            type_obj: next(),
            type_ocr: next(),
            type_ques: next(),
            obj_cap: cfg.obj_cap,
            ocr_cap: cfg.ocr_cap,
        };
        let layers = (0..cfg.layers)
            .map(|_| LayerNodes {
                ln_attn: ln(&mut next),
                w_q: next(),
                b_q: next(),
                w_k: next(),
                b_k: next(),
                w_v: next(),
                b_v: next(),
                w_o: next(),
                b_o: next(),
                ln_ffn: ln(&mut next),
                ffn_w1: next(),
                ffn_b1: next(),
                ffn_w2: next(),
                ffn_b2: next(),
            })
            .collect();
        let ans_table = next();
        let w_vocab = next();
        let b_vocab = next();
        let pointer = PointerNodes {
            w_q: next(),
            b_q: next(),
            w_o: next(),
            b_o: next(),
        };
        assert!(it.next().is_none(), "extra ids beyond the parameter walk");
        Self {
            embedder,
            layers,
            ans_table,
            w_vocab,
            b_vocab,
            pointer,
        }
    }

    /// Node ids in exactly the [`ModelParams::named`] order.
    pub fn ordered(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let e = &self.embedder;
        out.extend([e.w_obj, e.w_box, e.w_ft, e.w_ap, e.word_table, e.pos_table]);
        for ln in [e.ln_obj_feat, e.ln_obj_box, e.ln_ocr_feat, e.ln_ocr_box] {
            out.extend([ln.gain, ln.bias]);
        }
        out.extend([e.type_obj, e.type_ocr, e.type_ques]);
        for l in &self.layers {
            out.extend([l.ln_attn.gain, l.ln_attn.bias]);
            out.extend([l.w_q, l.b_q, l.w_k, l.b_k, l.w_v, l.b_v, l.w_o, l.b_o]);
            out.extend([l.ln_ffn.gain, l.ln_ffn.bias]);
            out.extend([l.ffn_w1, l.ffn_b1, l.ffn_w2, l.ffn_b2]);
        }
        out.extend([self.ans_table, self.w_vocab, self.b_vocab]);
        out.extend([
            self.pointer.w_q,
            self.pointer.b_q,
            self.pointer.w_o,
            self.pointer.b_o,
        ]);
        out
    }
}
