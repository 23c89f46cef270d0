use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Sentence;

/// Lemmas attested per training form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityIndex {
    lemmas: HashMap<String, BTreeSet<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCategory {
    Ambiguous,
    KnownUnambiguous,
    Unknown,
}

impl AmbiguityIndex {
    pub fn is_ambiguous(&self, form: &str) -> bool {
        self.lemmas.get(form).is_some_and(|l| l.len() > 1)
    }

    pub fn is_unknown(&self, form: &str) -> bool {
        !self.lemmas.contains_key(form)
    }

    pub fn lemmas(&self, form: &str) -> Option<&BTreeSet<String>> {
        self.lemmas.get(form)
    }

    pub fn category(&self, form: &str) -> TokenCategory {
        match self.lemmas.get(form) {
            None => TokenCategory::Unknown,
            Some(l) if l.len() > 1 => TokenCategory::Ambiguous,
            Some(_) => TokenCategory::KnownUnambiguous,
        }
    }

    pub fn form_count(&self) -> usize {
        self.lemmas.len()
    }
}

/// Build the index. Only ever pass the training split.
pub fn build_ambiguity_index(train: &[Sentence]) -> AmbiguityIndex {
    let mut lemmas: HashMap<String, BTreeSet<String>> = HashMap::new();
    for token in train.iter().flat_map(|s| &s.tokens) {
        lemmas
            .entry(token.form().to_owned())
            .or_default()
            .insert(token.lemma().to_owned());
    }
    AmbiguityIndex { lemmas }
}
