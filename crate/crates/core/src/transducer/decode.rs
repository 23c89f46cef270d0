use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{decoder_step, initial_decoder_state, DecoderMasks, DecoderState, EncodedToken, Lemmatizer};
use crate::corpus::{SymbolTable, EOS};
use crate::error::Result;
use crate::numerics::{log_softmax, Dropout, Graph, Var};

/// Output symbols the decoder may emit: EOS and real lemma characters.
pub fn allowed_output(index: usize) -> bool {
    index == EOS || !SymbolTable::is_reserved(index)
}

/// Output length cap for a form of `form_chars` characters.
pub fn default_max_len(form_chars: usize) -> usize {
    2 * form_chars + 5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Output length cap in characters; `None` uses [`default_max_len`].
    pub max_len: Option<usize>,
    /// Rank finished hypotheses by log-probability per output step.
    pub length_normalize: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 10,
            max_len: None,
            length_normalize: false,
        }
    }
}

/// A decoded lemma.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub chars: Vec<usize>,
    pub lemma: String,
    /// Sum of step log-probabilities, including EOS when it was emitted.
    pub log_prob: f64,
    /// Set when decoding hit the length cap before EOS.
    pub truncated: bool,
}

impl Decoded {
    fn new(model: &Lemmatizer, chars: Vec<usize>, log_prob: f64, truncated: bool) -> Self {
        Decoded {
            lemma: model.vocab.lemma_chars.decode_chars(&chars),
            chars,
            log_prob,
            truncated,
        }
    }

    fn rank_score(&self, length_normalize: bool) -> f64 {
        if length_normalize {
            let steps = self.chars.len() + usize::from(!self.truncated);
            self.log_prob / steps.max(1) as f64
        } else {
            self.log_prob
        }
    }
}

fn step_log_probs(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    state: &DecoderState,
    encoded: &EncodedToken,
    context: Option<Var>,
) -> Result<(DecoderState, Vec<f64>)> {
    let mut eval = Dropout::evaluation();
    let (next, logits) = decoder_step(g, model, state, encoded, context, &DecoderMasks::none(), &mut eval)?;
    Ok((next, log_softmax(g.value(logits))))
}

/// Most probable allowed symbol at each step (lowest index on ties) until
/// EOS or `max_len` characters.
pub fn decode_greedy(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    encoded: &EncodedToken,
    context: Option<Var>,
    max_len: usize,
) -> Result<Decoded> {
    let mut state = initial_decoder_state(g, model, encoded);
    let mut chars = Vec::new();
    let mut log_prob = 0.0;
    while chars.len() < max_len {
        let (next, lp) = step_log_probs(g, model, &state, encoded, context)?;
        let (best, score) = lp
            .iter()
            .enumerate()
            .filter(|(i, _)| allowed_output(*i))
            .fold((EOS, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        log_prob += score;
        if best == EOS {
            return Ok(Decoded::new(model, chars, log_prob, false));
        }
        chars.push(best);
        state = DecoderState {
            prev_char: best,
            ..next
        };
    }
    Ok(Decoded::new(model, chars, log_prob, true))
}

struct Hypothesis {
    state: DecoderState,
    chars: Vec<usize>,
    log_prob: f64,
}

/// Beam search. Finished hypotheses compete with live ones for the beam
/// slots; search ends when no live hypothesis can beat the best finished
/// one. Hypotheses reaching the length cap are kept as truncated finals.
/// The greedy path is also scored and returned if it ranks higher, so the
/// result is never worse than greedy decoding.
pub fn decode_beam(
    g: &mut Graph<'_>,
    model: &Lemmatizer,
    encoded: &EncodedToken,
    context: Option<Var>,
    config: &BeamConfig,
) -> Result<Decoded> {
    let max_len = config.max_len.unwrap_or_else(|| default_max_len(encoded.len()));
    let k = config.beam_size.max(1);
    let norm = config.length_normalize;

    let mut live = vec![Hypothesis {
        state: initial_decoder_state(g, model, encoded),
        chars: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Decoded> = Vec::new();

    while !live.is_empty() {
        if live[0].chars.len() >= max_len {
            finished.extend(
                live.drain(..)
                    .map(|h| Decoded::new(model, h.chars, h.log_prob, true)),
            );
            break;
        }
        let mut expansions = Vec::with_capacity(live.len());
        let mut candidates = Vec::new();
        for (i, hyp) in live.iter().enumerate() {
            let (next, lp) = step_log_probs(g, model, &hyp.state, encoded, context)?;
            for (c, &s) in lp.iter().enumerate() {
                if allowed_output(c) {
                    candidates.push((hyp.log_prob + s, i, c));
                }
            }
            expansions.push(next);
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next_live = Vec::with_capacity(k);
        for &(score, i, c) in candidates.iter().take(k) {
            let mut chars = live[i].chars.clone();
            if c == EOS {
                finished.push(Decoded::new(model, chars, score, false));
            } else {
                chars.push(c);
                next_live.push(Hypothesis {
                    state: DecoderState {
                        prev_char: c,
                        ..expansions[i].clone()
                    },
                    chars,
                    log_prob: score,
                });
            }
        }
        live = next_live;
        if !norm {
            // Extending a hypothesis can only lower its log-probability.
            let best_finished = finished.iter().map(|d| d.log_prob).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
            if best_finished >= best_live {
                break;
            }
        }
    }

    let greedy = decode_greedy(g, model, encoded, context, max_len)?;
    let mut best = greedy;
    for cand in finished {
        if cand.rank_score(norm) > best.rank_score(norm) {
            best = cand;
        }
    }
    Ok(best)
}
