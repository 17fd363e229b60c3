//! Joint self-attention stack shared by encoding and decoding.
//!
//! Entities and decoder rows go through the same pre-norm layers; what
//! differs is the attention mask. Entities attend freely to each other and
//! never to decoder rows, so their outputs are identical with or without the
//! decoder block appended. Decoder rows attend to all entities and causally
//! to decoder rows at or before their own step.

use std::sync::Arc;

use crate::numerics::{AttnMask, Graph, NodeId, NumericsError};

use super::params::LayerNodes;

/// Mask for `entities + decoder` rows: entities <-> entities full,
/// decoder -> entities full, decoder -> decoder causal, entities -> decoder
/// blocked.
pub fn joint_mask(entities: usize, decoder: usize) -> AttnMask {
    let n = entities + decoder;
    let mut allowed = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            allowed[i * n + j] = if i < entities { j < entities } else { j < entities || j <= i };
        }
    }
    AttnMask::new(n, n, allowed).expect("every row allows at least the entity block")
}

/// Per-layer, per-head attention matrices observed during one forward pass.
pub type AttentionNodes = Vec<Vec<NodeId>>;

/// Runs the L-layer stack over the given rows. With `layers` empty the
/// output equals the input (identity test hook). Returns the contextual
/// states and the attention node per layer and head.
pub fn encode(
    g: &mut Graph,
    x: NodeId,
    layers: &[LayerNodes],
    heads: usize,
    mask: Option<&Arc<AttnMask>>,
) -> Result<(NodeId, AttentionNodes), NumericsError> {
    let d = g.value(x).cols();
    debug_assert_eq!(d % heads, 0);
    let head_width = d / heads;
    let scale = 1.0 / (head_width as f64).sqrt();

    let mut states = x;
    let mut attention = Vec::with_capacity(layers.len());
    for layer in layers {
        // Attention sublayer.
        let normed = g.layer_norm(states, layer.ln_attn.gain, layer.ln_attn.bias)?;
        let q = g.matmul(normed, layer.w_q)?;
        let q = g.add_row(q, layer.b_q)?;
        let k = g.matmul(normed, layer.w_k)?;
        let k = g.add_row(k, layer.b_k)?;
        let v = g.matmul(normed, layer.w_v)?;
        let v = g.add_row(v, layer.b_v)?;

        let mut layer_attention = Vec::with_capacity(heads);
        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * head_width, head_width)?;
            let kh = g.slice_cols(k, h * head_width, head_width)?;
            let vh = g.slice_cols(v, h * head_width, head_width)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scaled = g.scale(scores, scale)?;
            let attn = match mask {
                Some(m) => g.masked_softmax_rows(scaled, Arc::clone(m))?,
                None => g.softmax_rows(scaled)?,
            };
            layer_attention.push(attn);
            head_outputs.push(g.matmul(attn, vh)?);
        }
        let merged = g.concat_cols(&head_outputs)?;
        let projected = g.matmul(merged, layer.w_o)?;
        let projected = g.add_row(projected, layer.b_o)?;
        states = g.add(states, projected)?;

        // Feed-forward sublayer.
        let normed = g.layer_norm(states, layer.ln_ffn.gain, layer.ln_ffn.bias)?;
        let hidden = g.matmul(normed, layer.ffn_w1)?;
        let hidden = g.add_row(hidden, layer.ffn_b1)?;
        let hidden = g.relu(hidden)?;
        let out = g.matmul(hidden, layer.ffn_w2)?;
        let out = g.add_row(out, layer.ffn_b2)?;
        states = g.add(states, out)?;

        attention.push(layer_attention);
    }
    Ok((states, attention))
}
