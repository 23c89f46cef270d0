use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{build_ambiguity_index, Sentence};
use crate::edittree::induce;
use crate::error::Result;

pub const DEFAULT_DIAGNOSTIC_WINDOW: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusDiagnostics {
    /// Distinct forms ÷ distinct lemmas.
    pub token_lemma_ratio: f64,
    pub unique_tree_count: usize,
    /// Percentage of running tokens whose form is ambiguous in training.
    pub ambiguous_token_pct: f64,
    pub tokens_used: usize,
    /// Set when the corpus was shorter than the requested window.
    pub window_truncated: bool,
}

/// Statistics over the first `window` running tokens of the training split.
/// Ambiguity is judged against the index of the whole training split.
pub fn corpus_diagnostics(train: &[Sentence], window: usize) -> Result<CorpusDiagnostics> {
    let index = build_ambiguity_index(train);
    let mut forms = HashSet::new();
    let mut lemmas = HashSet::new();
    let mut trees = HashSet::new();
    let mut ambiguous = 0usize;
    let mut used = 0usize;
    for token in train.iter().flat_map(|s| &s.tokens).take(window) {
        forms.insert(token.form());
        lemmas.insert(token.lemma());
        trees.insert(induce(token.form(), token.lemma())?);
        if index.is_ambiguous(token.form()) {
            ambiguous += 1;
        }
        used += 1;
    }
    Ok(CorpusDiagnostics {
        token_lemma_ratio: if lemmas.is_empty() {
            0.0
        } else {
            forms.len() as f64 / lemmas.len() as f64
        },
        unique_tree_count: trees.len(),
        ambiguous_token_pct: if used == 0 {
            0.0
        } else {
            100.0 * ambiguous as f64 / used as f64
        },
        tokens_used: used,
        window_truncated: used < window,
    })
}
