use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Sentence;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

pub const DEFAULT_LM_VOCAB_CAP: usize = 50_000;

/// Dense symbol ↔ index map. Indices 0–3 are PAD, UNK, BOS and EOS.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::from(Vec::new())
    }

    /// Build from symbols in the order they should receive indices.
    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = SymbolTable::new();
        for s in symbols {
            table.insert(s.into());
        }
        table
    }

    fn insert(&mut self, symbol: String) -> usize {
        if let Some(&i) = self.index.get(&symbol) {
            return i;
        }
        let i = self.symbols.len();
        self.index.insert(symbol.clone(), i);
        self.symbols.push(symbol);
        i
    }

    /// Index of `symbol`, or UNK.
    pub fn get(&self, symbol: &str) -> usize {
        self.index.get(symbol).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() == RESERVED.len()
    }

    pub fn is_reserved(index: usize) -> bool {
        index < RESERVED.len()
    }

    /// Character indices of `text`, unknown characters mapping to UNK.
    pub fn encode_chars(&self, text: &str) -> Vec<usize> {
        let mut buf = [0u8; 4];
        text.chars().map(|c| self.get(c.encode_utf8(&mut buf))).collect()
    }

    /// Concatenate non-reserved symbols.
    pub fn decode_chars(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter(|&&i| !Self::is_reserved(i))
            .map(|&i| self.symbol(i))
            .collect()
    }
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl From<Vec<String>> for SymbolTable {
    fn from(symbols: Vec<String>) -> Self {
        let mut table = SymbolTable {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            table.insert(r.to_owned());
        }
        for s in symbols {
            table.insert(s);
        }
        table
    }
}

impl From<SymbolTable> for Vec<String> {
    fn from(table: SymbolTable) -> Self {
        table.symbols.into_iter().skip(RESERVED.len()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Input (form) characters.
    pub chars: SymbolTable,
    /// Lemma characters.
    pub lemma_chars: SymbolTable,
    /// All training word forms, most frequent first.
    pub words: SymbolTable,
    /// Language-model output words, truncated to the configured cap.
    pub lm_words: SymbolTable,
}

/// Build all inventories from the training split. Words are ordered by
/// descending frequency, ties broken lexicographically.
pub fn build_vocabulary(train: &[Sentence], lm_vocab_cap: usize) -> Vocabulary {
    let mut chars: Vec<char> = Vec::new();
    let mut lemma_chars: Vec<char> = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for token in train.iter().flat_map(|s| &s.tokens) {
        chars.extend(token.form().chars());
        lemma_chars.extend(token.lemma().chars());
        *counts.entry(token.form()).or_default() += 1;
    }
    chars.sort_unstable();
    chars.dedup();
    lemma_chars.sort_unstable();
    lemma_chars.dedup();

    let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    Vocabulary {
        chars: SymbolTable::from_symbols(chars.iter().map(char::to_string)),
        lemma_chars: SymbolTable::from_symbols(lemma_chars.iter().map(char::to_string)),
        words: SymbolTable::from_symbols(words.iter().map(|(w, _)| *w)),
        lm_words: SymbolTable::from_symbols(words.iter().take(lm_vocab_cap).map(|(w, _)| *w)),
    }
}
