//! Fixtures shared by unit tests.

use crate::corpus::{build_vocabulary, Sentence, Token};
use crate::transducer::{Lemmatizer, ModelConfig, Variant};

pub fn sentence(pairs: &[(&str, &str)]) -> Sentence {
    Sentence::new(
        pairs.iter().map(|(f, l)| Token::new(*f, *l).unwrap()).collect(),
        "test",
    )
}

pub fn toy_corpus() -> Vec<Sentence> {
    vec![
        sentence(&[("de", "de"), ("jaren", "jaar"), ("gingen", "gaan")]),
        sentence(&[("hij", "hij"), ("ging", "gaan")]),
        sentence(&[("jaar", "jaar")]),
    ]
}

pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        char_dim: 3,
        hidden: 3,
        sent_hidden: 2,
        enc_layers: 2,
        dec_layers: 2,
        sent_layers: 1,
        word_dim: 2,
        dropout: 0.25,
        ..ModelConfig::default()
    }
}

pub fn toy_model(variant: Variant, seed: u64) -> Lemmatizer {
    let vocab = build_vocabulary(&toy_corpus(), 50);
    Lemmatizer::new(tiny_config(variant), vocab, seed).unwrap()
}

pub fn zero_params(model: &mut Lemmatizer) {
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        model.params.tensor_mut(id).values_mut().fill(0.0);
    }
}
