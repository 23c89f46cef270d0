//! Annotated corpora: readers, splits, chunking, vocabularies and the
//! ambiguity/unknown index.

mod ambiguity;
mod diagnostics;
mod io;
mod split;
mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ambiguity::{build_ambiguity_index, AmbiguityIndex, TokenCategory};
pub use diagnostics::{corpus_diagnostics, CorpusDiagnostics, DEFAULT_DIAGNOSTIC_WINDOW};
pub use io::{
    load_corpus, parse_conllu, parse_tsv, read_manifest, write_tsv, DatasetManifest, LoadOptions,
    Splits,
};
pub use split::{chunk_sentences, split_at_boundary_tag, split_dataset, DEFAULT_CHUNK_LEN};
pub use vocab::{build_vocabulary, SymbolTable, Vocabulary, BOS, DEFAULT_LM_VOCAB_CAP, EOS, PAD, UNK};

/// One annotated token. The lemma is always stored lowercased.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    form: String,
    lemma: String,
    #[serde(default)]
    tags: BTreeMap<String, String>,
}

impl Token {
    pub fn new(form: impl Into<String>, lemma: impl Into<String>) -> Result<Self> {
        let form = form.into();
        let lemma = lemma.into().to_lowercase();
        if form.is_empty() {
            return Err(Error::InvalidInput("empty token form".into()));
        }
        if lemma.is_empty() {
            return Err(Error::InvalidInput(format!("empty lemma for form {form:?}")));
        }
        Ok(Token {
            form,
            lemma,
            tags: BTreeMap::new(),
        })
    }

    pub fn with_tag(mut self, task: impl Into<String>, label: impl Into<String>) -> Self {
        self.tags.insert(task.into(), label.into());
        self
    }

    pub fn form(&self) -> &str {
        &self.form
    }

    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn tag(&self, task: &str) -> Option<&str> {
        self.tags.get(task).map(String::as_str)
    }

    pub fn tags(&self) -> &BTreeMap<String, String> {
        &self.tags
    }

    pub(crate) fn lowercase_form(&mut self) {
        self.form = self.form.to_lowercase();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub source: String,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>, source: impl Into<String>) -> Self {
        Sentence {
            tokens,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(Token::form)
    }
}

/// Total number of tokens over a slice of sentences.
pub fn token_count(sentences: &[Sentence]) -> usize {
    sentences.iter().map(Sentence::len).sum()
}
