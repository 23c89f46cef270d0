//! Character-level encoder-decoder with additive attention.
//!
//! A token's characters pass through a stacked bidirectional GRU; at each
//! output step the decoder attends over the encoder states with the
//! previous top decoder state, consumes `[emb(prev char); r_j; s_t]`
//! (`s_t` only when sentence context is enabled) and projects its top state
//! to lemma-character logits.

mod decode;
mod model;

use std::rc::Rc;

use crate::corpus::{SymbolTable, BOS, EOS, UNK};
use crate::error::{Error, Result};
use crate::numerics::{bidirectional_rnn, gru_cell, Dropout, Graph, Var};

pub use decode::{allowed_output, decode_beam, decode_greedy, default_max_len, BeamConfig, Decoded};
pub use model::{
    AttentionParams, ContextLayout, DecoderInit, Layout, Lemmatizer, LmHeads, ModelConfig, Variant,
};

/// Encoder output for one token.
#[derive(Clone, Debug)]
pub struct EncodedToken {
    /// `[forward_i; backward_i]` of the top layer, one per character.
    pub states: Vec<Var>,
    /// Attention keys `U_a h_i`.
    pub keys: Vec<Var>,
    pub final_forward: Var,
    pub final_backward: Var,
}

impl EncodedToken {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Run the character encoder over `form`. Characters outside the training
/// inventory map to the character UNK.
pub fn encode_token(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    form: &str,
    dropout: &mut Dropout<'_>,
) -> Result<EncodedToken> {
    if form.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty form".into()));
    }
    let layout = &model.layout;
    let embedded: Vec<Var> = model
        .vocab
        .chars
        .encode_chars(form)
        .into_iter()
        .map(|c| {
            let e = g.lookup(layout.enc_emb, c);
            dropout.apply(g, e)
        })
        .collect();
    let out = bidirectional_rnn(g, &embedded, &layout.encoder, dropout)?;
    let keys = out
        .states
        .iter()
        .map(|&s| g.matvec(layout.attention.key, s))
        .collect();
    Ok(EncodedToken {
        final_forward: out.final_forward(),
        final_backward: out.final_backward(),
        states: out.states,
        keys,
    })
}

/// Additive attention: `score_i = vᵀ tanh(W_a q + U_a h_i)`, weights the
/// softmax of the scores, summary `Σ_i weight_i h_i`. Returns the summary
/// and the weight vector.
pub fn attend(g: &mut Graph<'_>, model: &Lemmatizer, query: Var, encoded: &EncodedToken) -> (Var, Var) {
    let att = &model.layout.attention;
    let q = g.matvec(att.query, query);
    let scores: Vec<Var> = encoded
        .keys
        .iter()
        .map(|&k| {
            let pre = g.add(q, k);
            let act = g.tanh(pre);
            g.matvec(att.score, act)
        })
        .collect();
    let scores = g.concat(&scores);
    let weights = g.softmax(scores);
    (g.weighted_sum(weights, &encoded.states), weights)
}

/// Recurrent state of the decoder between steps.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub layers: Vec<Var>,
    pub prev_char: usize,
}

/// Per-token dropout masks reused at every decoder step.
#[derive(Clone, Debug, Default)]
pub struct DecoderMasks {
    between_layers: Vec<Option<Rc<Vec<f64>>>>,
}

impl DecoderMasks {
    pub fn sample(model: &Lemmatizer, dropout: &mut Dropout<'_>) -> Self {
        let n = model.layout.decoder.len().saturating_sub(1);
        DecoderMasks {
            between_layers: (0..n).map(|_| dropout.sample_mask(model.config.hidden)).collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }
}

pub fn initial_decoder_state(g: &mut Graph<'_>, model: &Lemmatizer, encoded: &EncodedToken) -> DecoderState {
    let h = model.config.hidden;
    let layers = if model.layout.dec_init.is_empty() {
        (0..model.layout.decoder.len()).map(|_| g.zeros(h)).collect()
    } else {
        let summary = g.concat(&[encoded.final_forward, encoded.final_backward]);
        model
            .layout
            .dec_init
            .iter()
            .map(|&(w, b)| {
                let pre = g.affine(w, b, summary);
                g.tanh(pre)
            })
            .collect()
    };
    DecoderState {
        layers,
        prev_char: BOS,
    }
}

/// One decoder step from `state`, consuming `state.prev_char`. Returns the
/// new recurrent state (with `prev_char` unchanged) and the logits.
pub fn decoder_step(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    state: &DecoderState,
    encoded: &EncodedToken,
    context: Option<Var>,
    masks: &DecoderMasks,
    dropout: &mut Dropout<'_>,
) -> Result<(DecoderState, Var)> {
    let layout = &model.layout;
    let top = *state.layers.last().expect("decoder has layers");
    let (summary, _) = attend(g, model, top, encoded);
    let emb = g.lookup(layout.dec_emb, state.prev_char);
    let emb = dropout.apply(g, emb);
    let input = match context {
        Some(s) => g.concat(&[emb, summary, s]),
        None => g.concat(&[emb, summary]),
    };

    let mut layers = Vec::with_capacity(layout.decoder.len());
    let mut x = input;
    for (l, p) in layout.decoder.iter().enumerate() {
        if l > 0 {
            if let Some(Some(mask)) = masks.between_layers.get(l - 1) {
                x = g.mask(x, mask.clone());
            }
        }
        let h = gru_cell(g, p, x, state.layers[l])?;
        layers.push(h);
        x = h;
    }
    let out = dropout.apply(g, x);
    let logits = g.affine(layout.out_w, layout.out_b, out);
    Ok((
        DecoderState {
            layers,
            prev_char: state.prev_char,
        },
        logits,
    ))
}

/// Gold-sequence loss of one token.
#[derive(Clone, Debug)]
pub struct TeacherForcedLoss {
    /// Negative log-likelihood averaged over target steps (characters plus
    /// EOS).
    pub loss: Var,
    pub steps: usize,
    /// Lemma characters missing from the lemma inventory (mapped to UNK).
    pub unknown_chars: usize,
}

/// Lemma character targets followed by EOS.
pub fn lemma_targets(table: &SymbolTable, lemma: &str) -> (Vec<usize>, usize) {
    let mut targets = table.encode_chars(lemma);
    let unknown = targets.iter().filter(|&&c| c == UNK).count();
    targets.push(EOS);
    (targets, unknown)
}

/// Teacher-forced negative log-likelihood of `lemma`, each step conditioned
/// on the gold previous character.
pub fn decode_loss_teacher_forced(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    encoded: &EncodedToken,
    lemma: &str,
    context: Option<Var>,
    dropout: &mut Dropout<'_>,
) -> Result<TeacherForcedLoss> {
    if lemma.is_empty() {
        return Err(Error::InvalidInput("empty target lemma".into()));
    }
    let (targets, unknown_chars) = lemma_targets(&model.vocab.lemma_chars, lemma);
    if unknown_chars > 0 {
        log::warn!("{unknown_chars} character(s) of lemma {lemma:?} outside the lemma inventory");
    }
    let masks = DecoderMasks::sample(model, &mut *dropout);
    let mut state = initial_decoder_state(g, model, encoded);
    let mut losses = Vec::with_capacity(targets.len());
    for &target in &targets {
        let (next, logits) = decoder_step(g, model, &state, encoded, context, &masks, dropout)?;
        losses.push(g.cross_entropy(logits, target));
        state = DecoderState {
            prev_char: target,
            ..next
        };
    }
    let total = g.sum(&losses);
    let loss = g.scale(total, 1.0 / targets.len() as f64);
    Ok(TeacherForcedLoss {
        loss,
        steps: targets.len(),
        unknown_chars,
    })
}

#[cfg(test)]
mod tests;
