//! Transformer text encoder.
//!
//! Token + position embeddings, then per layer: masked multi-head
//! self-attention and a 4×-wide feed-forward, each with residual connection
//! and layer normalization. R_T is the final hidden state at the [CLS]
//! position.

use rand::Rng;

use super::{BoundParams, ParamBuilder, TextEncoderConfig};
use crate::numerics::{NodeId, Tape, Tensor};
use crate::tokenizer::TokenSequence;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

pub struct TextTrace {
    /// R_T: the [CLS] hidden state, shape [d_model].
    pub rt: NodeId,
    /// Attention weights of every layer, each [heads×n×n].
    pub attention: Vec<Tensor>,
}

pub(super) fn init_params<R: Rng>(b: &mut ParamBuilder<'_, R>, cfg: &TextEncoderConfig) {
    let d = cfg.d_model;
    b.embedding("text.tok_emb", cfg.vocab_size, d);
    b.embedding("text.pos_emb", cfg.n, d);
    for layer in 0..cfg.layers {
        let p = format!("text.l{layer}");
        b.linear(&format!("{p}.wq"), d, d);
        b.linear(&format!("{p}.wk"), d, d);
        b.linear(&format!("{p}.wv"), d, d);
        b.linear(&format!("{p}.wo"), d, d);
        b.layer_norm(&format!("{p}.ln0"), d);
        b.linear(&format!("{p}.ffn0"), d, 4 * d);
        b.linear(&format!("{p}.ffn1"), 4 * d, d);
        b.layer_norm(&format!("{p}.ln1"), d);
    }
}

/// x[n×d] · w[d×out] + b[out], broadcast over rows.
fn linear(
    tape: &mut Tape,
    bound: &BoundParams,
    name: &str,
    x: NodeId,
) -> Result<NodeId> {
    let w = bound.node(&format!("{name}.w"))?;
    let b = bound.node(&format!("{name}.b"))?;
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

fn layer_norm(
    tape: &mut Tape,
    bound: &BoundParams,
    name: &str,
    x: NodeId,
) -> Result<NodeId> {
    let g = bound.node(&format!("{name}.g"))?;
    let b = bound.node(&format!("{name}.b"))?;
    tape.layer_norm(x, g, b, LN_EPS)
}

pub(super) fn text_forward<R: Rng>(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &TextEncoderConfig,
    tokens: &TokenSequence,
    training: bool,
    dropout: f64,
    rng: &mut R,
) -> Result<TextTrace> {
    if tokens.len() != cfg.n {
        return Err(Error::Input(format!(
            "token sequence of length {} against configured n = {}",
            tokens.len(),
            cfg.n
        )));
    }
    let mask = tokens.attention_mask();

    let tok_emb = bound.node("text.tok_emb")?;
    let pos_emb = bound.node("text.pos_emb")?;
    let embedded = tape.embedding(tok_emb, &tokens.ids)?;
    let mut x = tape.add(embedded, pos_emb)?;
    x = tape.dropout(x, dropout, training, rng)?;

    let mut attention = Vec::with_capacity(cfg.layers);
    for layer in 0..cfg.layers {
        let p = format!("text.l{layer}");
        let q = linear(tape, bound, &format!("{p}.wq"), x)?;
        let k = linear(tape, bound, &format!("{p}.wk"), x)?;
        let v = linear(tape, bound, &format!("{p}.wv"), x)?;
        let (attn_out, weights) =
            tape.multi_head_attention(q, k, v, cfg.heads, Some(&mask))?;
        attention.push(weights);
        let proj = linear(tape, bound, &format!("{p}.wo"), attn_out)?;
        let proj = tape.dropout(proj, dropout, training, rng)?;
        let res = tape.add(x, proj)?;
        x = layer_norm(tape, bound, &format!("{p}.ln0"), res)?;

        let h = linear(tape, bound, &format!("{p}.ffn0"), x)?;
        let h = tape.relu(h);
        let h = linear(tape, bound, &format!("{p}.ffn1"), h)?;
        let h = tape.dropout(h, dropout, training, rng)?;
        let res = tape.add(x, h)?;
        x = layer_norm(tape, bound, &format!("{p}.ln1"), res)?;
    }

    let rt = tape.row(x, 0)?;
    Ok(TextTrace { rt, attention })
}
