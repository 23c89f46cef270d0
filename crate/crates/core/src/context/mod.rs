//! Sentence-level context for the lemmatizer: a word-level bidirectional
//! RNN over character-encoder summaries, the auxiliary bidirectional word
//! LM objective and the joint training loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::numerics::{bidirectional_rnn, non_improving_streak, Dropout, Gradients, Graph, ParamId, Var};
use crate::transducer::{
    decode_beam, decode_greedy, decode_loss_teacher_forced, default_max_len, encode_token, BeamConfig,
    Decoded, EncodedToken, Lemmatizer,
};

/// Word- and sentence-level features of one chunk.
#[derive(Clone, Debug)]
pub struct SentenceFeatures {
    /// `w_t`: final character-encoder states, plus the word embedding when
    /// enabled.
    pub word_features: Vec<Var>,
    /// `s_t = [forward_t; backward_t]`.
    pub states: Vec<Var>,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

/// Encode every token of a chunk; for context-aware variants also run the
/// sentence RNN. The character encoder is the transducer's own.
pub fn sentence_encode(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    forms: &[&str],
    dropout: &mut Dropout<'_>,
) -> Result<(Vec<EncodedToken>, Option<SentenceFeatures>)> {
    if forms.is_empty() {
        return Err(Error::InvalidInput("empty sentence".into()));
    }
    let encoded = forms
        .iter()
        .map(|f| encode_token(g, model, f, dropout))
        .collect::<Result<Vec<_>>>()?;
    let Some(ctx) = &model.layout.context else {
        return Ok((encoded, None));
    };

    let word_features: Vec<Var> = encoded
        .iter()
        .zip(forms)
        .map(|(e, form)| match ctx.word_emb {
            Some(table) => {
                let w = g.lookup(table, model.vocab.words.get(form));
                let w = dropout.apply(g, w);
                g.concat(&[e.final_forward, e.final_backward, w])
            }
            None => g.concat(&[e.final_forward, e.final_backward]),
        })
        .collect();
    let out = bidirectional_rnn(g, &word_features, &ctx.rnn, dropout)?;
    Ok((
        encoded,
        Some(SentenceFeatures {
            word_features,
            states: out.states,
            forward: out.forward,
            backward: out.backward,
        }),
    ))
}

/// Bidirectional word LM loss of one chunk.
#[derive(Clone, Debug)]
pub struct LmLoss {
    /// `½ mean NLL_fwd + ½ mean NLL_bwd`.
    pub loss: Var,
    /// Summed NLL over both directions.
    pub nll_sum: f64,
    /// Number of predictions over both directions.
    pub predictions: usize,
}

/// The forward state at `t` predicts word `t + 1` and the backward state at
/// `t` predicts word `t − 1`. Chunks of one token have nothing to predict
/// and yield `None`. Words outside the LM vocabulary are predicted as UNK.
pub fn lm_loss(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    features: &SentenceFeatures,
    forms: &[&str],
    dropout: &mut Dropout<'_>,
) -> Result<Option<LmLoss>> {
    let heads = model
        .layout
        .context
        .as_ref()
        .and_then(|c| c.lm.as_ref())
        .ok_or_else(|| Error::Config("model has no language-model heads".into()))?;
    let n = forms.len();
    if features.states.len() != n {
        return Err(Error::InvalidInput("features and sentence differ in length".into()));
    }
    if n < 2 {
        return Ok(None);
    }
    let targets: Vec<usize> = forms.iter().map(|f| model.vocab.lm_words.get(f)).collect();

    let mut direction = |g: &mut Graph<'_>, states: &[Var], w: ParamId, b: ParamId, shift: isize| {
        let losses: Vec<Var> = (0..n)
            .filter_map(|t| {
                let target = t as isize + shift;
                (0..n as isize).contains(&target).then(|| {
                    let s = dropout.apply(g, states[t]);
                    let logits = g.affine(w, b, s);
                    g.cross_entropy(logits, targets[target as usize])
                })
            })
            .collect();
        let total = g.sum(&losses);
        (total, losses.len())
    };
    let (fwd, nf) = direction(g, &features.forward, heads.fwd_w, heads.fwd_b, 1);
    let (bwd, nb) = direction(g, &features.backward, heads.bwd_w, heads.bwd_b, -1);
    let nll_sum = g.scalar(fwd) + g.scalar(bwd);
    let fwd = g.scale(fwd, 0.5 / nf as f64);
    let bwd = g.scale(bwd, 0.5 / nb as f64);
    Ok(Some(LmLoss {
        loss: g.add(fwd, bwd),
        nll_sum,
        predictions: nf + nb,
    }))
}

/// Loss nodes for one chunk.
#[derive(Clone, Debug)]
pub struct SentenceLoss {
    /// Sum of per-token teacher-forced losses.
    pub lemma_sum: Var,
    pub tokens: usize,
    pub lm: Option<LmLoss>,
}

/// Build lemma losses for every token and, if the model has LM heads, the
/// LM loss. The LM part is built last so its dropout draws never perturb
/// the lemma part.
pub fn sentence_loss(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    sentence: &Sentence,
    dropout: &mut Dropout<'_>,
) -> Result<SentenceLoss> {
    let forms: Vec<&str> = sentence.forms().collect();
    let (encoded, features) = sentence_encode(g, model, &forms, dropout)?;
    let mut losses = Vec::with_capacity(forms.len());
    for (t, (enc, token)) in encoded.iter().zip(&sentence.tokens).enumerate() {
        let context = features.as_ref().map(|f| f.states[t]);
        losses.push(decode_loss_teacher_forced(g, model, enc, token.lemma(), context, dropout)?.loss);
    }
    let lm = match &features {
        Some(f) if model.config.variant.uses_lm() => lm_loss(g, model, f, &forms, dropout)?,
        _ => None,
    };
    Ok(SentenceLoss {
        lemma_sum: g.sum(&losses),
        tokens: forms.len(),
        lm,
    })
}

/// Loss terms of one batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    /// `lemma + lm_weight · lm`.
    pub total: f64,
    /// Mean teacher-forced loss per token.
    pub lemma: f64,
    /// Mean LM loss over chunks with at least two tokens.
    pub lm: f64,
    pub tokens: usize,
    pub lm_sentences: usize,
    pub lm_nll_sum: f64,
    pub lm_predictions: usize,
}

/// Per-chunk dropout stream, so chunks draw independently of each other and
/// of the order they are processed in.
pub fn sentence_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Joint loss and its gradient over `batch`. With `seed` set, dropout is
/// active and each chunk gets its own RNG; without, the model runs in
/// evaluation mode. A zero `lm_weight` leaves the LM out of the gradient
/// entirely.
pub fn joint_loss(
    model: &Lemmatizer,
    batch: &[Sentence],
    lm_weight: f64,
    seed: Option<u64>,
) -> Result<(JointLoss, Gradients)> {
    if !(lm_weight >= 0.0) {
        return Err(Error::Config(format!("lm_weight must be non-negative, got {lm_weight}")));
    }
    let tokens: usize = batch.iter().map(Sentence::len).sum();
    if tokens == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let lm_sentences = if model.config.variant.uses_lm() {
        batch.iter().filter(|s| s.len() >= 2).count()
    } else {
        0
    };

    let mut grads = Gradients::zeros_like(&model.params);
    let mut out = JointLoss {
        tokens,
        lm_sentences,
        ..JointLoss::default()
    };
    for (i, sentence) in batch.iter().enumerate() {
        let mut rng = seed.map(|s| ChaCha8Rng::seed_from_u64(sentence_seed(s, i)));
        let mut dropout = match rng.as_mut() {
            Some(r) => Dropout::new(model.config.dropout, Some(r))?,
            None => Dropout::evaluation(),
        };
        let mut g = Graph::new(&model.params);
        let parts = sentence_loss(&mut g, model, sentence, &mut dropout)?;
        out.lemma += g.scalar(parts.lemma_sum) / tokens as f64;
        let mut root = g.scale(parts.lemma_sum, 1.0 / tokens as f64);
        if let Some(lm) = parts.lm {
            out.lm += g.scalar(lm.loss) / lm_sentences as f64;
            out.lm_nll_sum += lm.nll_sum;
            out.lm_predictions += lm.predictions;
            if lm_weight > 0.0 {
                let term = g.scale(lm.loss, lm_weight / lm_sentences as f64);
                root = g.add(root, term);
            }
        }
        g.backward_into(root, 1.0, &mut grads);
    }
    out.total = out.lemma + lm_weight * out.lm;
    Ok((out, grads))
}

/// Word-LM perplexity `exp(mean NLL)` over both directions, without
/// dropout. `None` when the model has no LM or nothing is predictable.
pub fn lm_perplexity(model: &Lemmatizer, sentences: &[Sentence]) -> Result<Option<f64>> {
    if !model.config.variant.uses_lm() {
        return Ok(None);
    }
    let (mut nll, mut count) = (0.0, 0usize);
    for sentence in sentences.iter().filter(|s| s.len() >= 2) {
        let forms: Vec<&str> = sentence.forms().collect();
        let mut g = Graph::new(&model.params);
        let mut dropout = Dropout::evaluation();
        let (_, features) = sentence_encode(&mut g, model, &forms, &mut dropout)?;
        let features = features.expect("LM variants have sentence features");
        if let Some(lm) = lm_loss(&mut g, model, &features, &forms, &mut dropout)? {
            nll += lm.nll_sum;
            count += lm.predictions;
        }
    }
    Ok((count > 0).then(|| (nll / count as f64).exp()))
}

/// Which dev metric drives LM weight annealing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnealTrigger {
    /// Dev perplexity, lower is better.
    #[default]
    Perplexity,
    /// Dev lemmatization accuracy, higher is better.
    Accuracy,
}

/// Halve the weight once the metric has failed to beat its best value for
/// two or more consecutive epochs, and again on every further such epoch.
pub fn lm_weight_schedule_with(current: f64, history: &[f64], trigger: AnnealTrigger) -> f64 {
    let streak = non_improving_streak(history, trigger == AnnealTrigger::Accuracy);
    let next = if streak >= 2 { current / 2.0 } else { current };
    next.max(0.0)
}

/// [`lm_weight_schedule_with`] driven by dev perplexity.
pub fn lm_weight_schedule(current: f64, perplexity_history: &[f64]) -> f64 {
    lm_weight_schedule_with(current, perplexity_history, AnnealTrigger::Perplexity)
}

/// How to turn decoder scores into a lemma.
#[derive(Clone, Debug, PartialEq)]
pub enum DecodeStrategy {
    Greedy,
    Beam(BeamConfig),
}

/// Lemmatize one chunk in evaluation mode.
pub fn lemmatize_sentence(model: &Lemmatizer, forms: &[&str], strategy: &DecodeStrategy) -> Result<Vec<Decoded>> {
    let mut g = Graph::new(&model.params);
    let mut dropout = Dropout::evaluation();
    let (encoded, features) = sentence_encode(&mut g, model, forms, &mut dropout)?;
    encoded
        .iter()
        .enumerate()
        .map(|(t, enc)| {
            let context = features.as_ref().map(|f| f.states[t]);
            match strategy {
                DecodeStrategy::Greedy => decode_greedy(&mut g, model, enc, context, default_max_len(enc.len())),
                DecodeStrategy::Beam(cfg) => decode_beam(&mut g, model, enc, context, cfg),
            }
        })
        .collect()
}
