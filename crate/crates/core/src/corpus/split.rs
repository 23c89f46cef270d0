use rand::seq::SliceRandom;
use rand::Rng;

use super::{Sentence, Splits};
use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_LEN: usize = 35;

const TEST_FRACTION: f64 = 0.10;
const DEV_FRACTION: f64 = 0.05;
const MIN_SENTENCES: usize = 20;

/// Shuffle and split into train/dev/test with 10% test and 5% dev (sizes
/// rounded down, remainder to train).
pub fn split_dataset<R: Rng + ?Sized>(mut sentences: Vec<Sentence>, rng: &mut R) -> Result<Splits> {
    let n = sentences.len();
    if n < MIN_SENTENCES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SENTENCES} sentences to split, got {n}"
        )));
    }
    sentences.shuffle(rng);
    let n_test = (n as f64 * TEST_FRACTION).floor() as usize;
    let n_dev = (n as f64 * DEV_FRACTION).floor() as usize;
    let test = sentences.split_off(n - n_test);
    let dev = sentences.split_off(n - n_test - n_dev);
    Ok(Splits {
        train: sentences,
        dev,
        test,
    })
}

/// Split sentences longer than `max_len` into consecutive chunks.
pub fn chunk_sentences(sentences: Vec<Sentence>, max_len: usize) -> Vec<Sentence> {
    assert!(max_len >= 1, "chunk length must be positive");
    let mut out = Vec::with_capacity(sentences.len());
    for s in sentences {
        if s.len() <= max_len {
            out.push(s);
            continue;
        }
        let source = s.source;
        let mut tokens = s.tokens;
        while !tokens.is_empty() {
            let rest = tokens.split_off(max_len.min(tokens.len()));
            out.push(Sentence::new(tokens, source.clone()));
            tokens = rest;
        }
    }
    out
}

/// Split after every token whose `task` tag equals `boundary_label`.
pub fn split_at_boundary_tag(
    sentences: Vec<Sentence>,
    task: &str,
    boundary_label: &str,
) -> Vec<Sentence> {
    let mut out = Vec::new();
    for s in sentences {
        let mut current = Vec::new();
        for token in s.tokens {
            let boundary = token.tag(task) == Some(boundary_label);
            current.push(token);
            if boundary {
                out.push(Sentence::new(std::mem::take(&mut current), s.source.clone()));
            }
        }
        if !current.is_empty() {
            out.push(Sentence::new(current, s.source.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sentence(n: usize) -> Sentence {
        Sentence::new(
            (0..n)
                .map(|i| Token::new(format!("w{i}"), format!("l{i}")).unwrap())
                .collect(),
            "s",
        )
    }

    fn sizes(s: &Splits) -> (usize, usize, usize) {
        (s.train.len(), s.dev.len(), s.test.len())
    }

    #[test]
    fn split_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = split_dataset((0..100).map(|_| sentence(1)).collect(), &mut rng).unwrap();
        assert_eq!(sizes(&s), (85, 5, 10));
        let s = split_dataset((0..20).map(|_| sentence(1)).collect(), &mut rng).unwrap();
        assert_eq!(sizes(&s), (17, 1, 2));
        assert!(split_dataset((0..19).map(|_| sentence(1)).collect(), &mut rng).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let data: Vec<Sentence> = (1..=40).map(sentence).collect();
        let a = split_dataset(data.clone(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = split_dataset(data, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chunk_lengths() {
        let lens = |n| {
            chunk_sentences(vec![sentence(n)], 35)
                .iter()
                .map(Sentence::len)
                .collect::<Vec<_>>()
        };
        assert_eq!(lens(35), vec![35]);
        assert_eq!(lens(36), vec![35, 1]);
        assert_eq!(lens(71), vec![35, 35, 1]);
    }

    #[test]
    fn boundary_tag_splitting() {
        let tokens = vec![
            Token::new("a", "a").unwrap(),
            Token::new(".", ".").unwrap().with_tag("Pos", "$."),
            Token::new("b", "b").unwrap(),
        ];
        let out = split_at_boundary_tag(vec![Sentence::new(tokens, "x")], "Pos", "$.");
        assert_eq!(out.iter().map(Sentence::len).collect::<Vec<_>>(), vec![2, 1]);
    }

    proptest! {
        #[test]
        fn chunks_concatenate_to_original(n in 1usize..120, max_len in 1usize..40) {
            let original = sentence(n);
            let chunks = chunk_sentences(vec![original.clone()], max_len);
            prop_assert!(chunks.iter().all(|c| c.len() <= max_len && !c.is_empty()));
            let joined: Vec<Token> = chunks.into_iter().flat_map(|c| c.tokens).collect();
            prop_assert_eq!(joined, original.tokens);
        }
    }
}
