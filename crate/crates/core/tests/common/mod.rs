#![allow(dead_code)]

use std::path::PathBuf;

use lemmaforge::corpus::{Sentence, Token};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_names() -> [&'static str; 3] {
    ["dutch.tsv", "latin.conllu", "middle_english.tsv"]
}

pub fn sentence(pairs: &[(&str, &str)]) -> Sentence {
    Sentence::new(
        pairs.iter().map(|(f, l)| Token::new(*f, *l).unwrap()).collect(),
        "synthetic",
    )
}

const STEMS: [&str; 12] = [
    "bal", "tor", "mis", "kan", "rup", "sel", "dor", "fim", "gal", "hes", "lon", "pav",
];
const FILLERS: [(&str, &str); 10] = [
    ("wiro", "wir"),
    ("wiros", "wir"),
    ("tande", "tand"),
    ("tandes", "tand"),
    ("pelu", "pelu"),
    ("sorit", "sori"),
    ("mekan", "mek"),
    ("ulma", "ulma"),
    ("ulmas", "ulma"),
    ("besti", "best"),
];

/// Sentences in which exactly one token per sentence is ambiguous: the form
/// `<stem>en` lemmatizes to `<stem>` after the cue word `ka` and to
/// `<stem>e` after the cue word `mo`. Two thirds of the sentences have three
/// tokens and one third four, so 30% of all tokens are ambiguous.
pub fn ambiguity_corpus(sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler = |rng: &mut ChaCha8Rng| FILLERS[rng.gen_range(0..FILLERS.len())];
    (0..sentences)
        .map(|i| {
            let stem = STEMS[rng.gen_range(0..STEMS.len())];
            let (cue, lemma) = if rng.gen_bool(0.5) {
                ("ka", stem.to_owned())
            } else {
                ("mo", format!("{stem}e"))
            };
            let form = format!("{stem}en");
            let mut tokens = vec![(cue.to_owned(), cue.to_owned()), (form, lemma)];
            let a = filler(&mut rng);
            if i % 3 == 2 {
                let b = filler(&mut rng);
                tokens.insert(0, (a.0.to_owned(), a.1.to_owned()));
                tokens.push((b.0.to_owned(), b.1.to_owned()));
            } else if rng.gen_bool(0.5) {
                tokens.insert(0, (a.0.to_owned(), a.1.to_owned()));
            } else {
                tokens.push((a.0.to_owned(), a.1.to_owned()));
            }
            Sentence::new(
                tokens
                    .iter()
                    .map(|(f, l)| Token::new(f.as_str(), l.as_str()).unwrap())
                    .collect(),
                "synthetic",
            )
        })
        .collect()
}

/// Random form/lemma pairs produced by a handful of suffix rules, each as
/// its own one-token sentence.
pub fn memorization_pairs(count: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let consonants: Vec<char> = "bdfgklmnprstvz".chars().collect();
    let vowels: Vec<char> = "aeiou".chars().collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    while out.len() < count {
        let syllables = rng.gen_range(1..=2);
        let mut stem = String::new();
        for _ in 0..syllables {
            stem.push(*consonants.choose(&mut rng).unwrap());
            stem.push(*vowels.choose(&mut rng).unwrap());
            stem.push(*consonants.choose(&mut rng).unwrap());
        }
        let (form, lemma) = match rng.gen_range(0..4) {
            0 => (format!("{stem}en"), stem.clone()),
            1 => (format!("ge{stem}t"), format!("{stem}en")),
            2 => (format!("{stem}s"), stem.clone()),
            _ => (stem.clone(), stem.clone()),
        };
        if seen.insert(form.clone()) {
            out.push(sentence(&[(&form, &lemma)]));
        }
    }
    out
}

/// Sentences `<marker> <noun>` where the noun's `Case` tag is fixed by the
/// marker word and the noun itself carries no case information.
pub fn probe_corpus(sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let markers = [("an", "Dat"), ("ur", "Acc"), ("es", "Gen")];
    let nouns = ["tavo", "rilen", "smek", "boru", "dalin", "fesk", "gomar", "hilu"];
    (0..sentences)
        .map(|_| {
            let (m, case) = markers[rng.gen_range(0..markers.len())];
            let n = nouns[rng.gen_range(0..nouns.len())];
            let extra = nouns[rng.gen_range(0..nouns.len())];
            Sentence::new(
                vec![
                    Token::new(m, m).unwrap().with_tag("Case", "None"),
                    Token::new(n, n).unwrap().with_tag("Case", case),
                    Token::new(extra, extra).unwrap().with_tag("Case", "Nom"),
                ],
                "synthetic",
            )
        })
        .collect()
}

/// Random lowercase words over a small alphabet.
pub fn random_words(count: usize, seed: u64, alphabet: &str, max_len: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chars: Vec<char> = alphabet.chars().collect();
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=max_len);
            (0..n).map(|_| *chars.choose(&mut rng).unwrap()).collect()
        })
        .collect()
}
