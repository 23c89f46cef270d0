use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::numerics::{gradient_check, log_softmax, softmax};
use crate::testutil::{toy_model, zero_params};

fn encode(model: &Lemmatizer, g: &mut Graph<'_>, form: &str) -> EncodedToken {
    encode_token(g, model, form, &mut Dropout::evaluation()).unwrap()
}

#[test]
fn zero_weights_give_zero_states() {
    let mut m = toy_model(Variant::Plain, 1);
    zero_params(&mut m);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "jaren");
    assert_eq!(enc.len(), 5);
    for &s in &enc.states {
        assert!(g.value(s).iter().all(|&x| x == 0.0));
    }
}

#[test]
fn single_character_finals_match_states() {
    let m = toy_model(Variant::Plain, 2);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "j");
    assert_eq!(enc.len(), 1);
    let h = m.config.hidden;
    let s = g.value(enc.states[0]).to_vec();
    assert_eq!(&s[..h], g.value(enc.final_forward));
    assert_eq!(&s[h..], g.value(enc.final_backward));
}

#[test]
fn empty_form_is_rejected() {
    let m = toy_model(Variant::Plain, 0);
    let mut g = Graph::new(&m.params);
    assert!(encode_token(&mut g, &m, "", &mut Dropout::evaluation()).is_err());
}

#[test]
fn unknown_characters_still_encode() {
    let m = toy_model(Variant::Plain, 0);
    let mut g = Graph::new(&m.params);
    assert_eq!(encode(&m, &mut g, "xyz").len(), 3);
}

#[test]
fn attention_on_single_state_is_that_state() {
    let m = toy_model(Variant::Plain, 3);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "a");
    let q = g.constant(vec![0.3, -0.2, 0.9]);
    let (r, w) = attend(&mut g, &m, q, &enc);
    assert_eq!(g.value(w), &[1.0]);
    assert_relative_eq!(g.value(r), g.value(enc.states[0]), epsilon = 1e-15);
}

#[test]
fn identical_states_get_uniform_weights() {
    let m = toy_model(Variant::Plain, 3);
    let mut g = Graph::new(&m.params);
    let state = g.constant(vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
    let key = g.matvec(m.layout.attention.key, state);
    let enc = EncodedToken {
        states: vec![state; 4],
        keys: vec![key; 4],
        final_forward: state,
        final_backward: state,
    };
    let q = g.constant(vec![1.0, 0.0, -1.0]);
    let (_, w) = attend(&mut g, &m, q, &enc);
    for &x in g.value(w) {
        assert_relative_eq!(x, 0.25, epsilon = 1e-15);
    }
}

fn matvec(rows: usize, w: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum())
        .collect()
}

#[test]
fn attention_matches_scalar_formula() {
    let m = toy_model(Variant::Plain, 4);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "ging");
    let enc = EncodedToken {
        states: enc.states[..3].to_vec(),
        keys: enc.keys[..3].to_vec(),
        ..enc
    };
    let query = vec![0.4, -0.7, 0.2];
    let qv = g.constant(query.clone());
    let (r, w) = attend(&mut g, &m, qv, &enc);

    let h = m.config.hidden;
    let att = &m.layout.attention;
    let wa = m.params.tensor(att.query).values();
    let ua = m.params.tensor(att.key).values();
    let v = m.params.tensor(att.score).values();
    let wq = matvec(h, wa, &query);
    let scores: Vec<f64> = enc
        .states
        .iter()
        .map(|&s| {
            let uk = matvec(h, ua, g.value(s));
            (0..h).map(|i| v[i] * (wq[i] + uk[i]).tanh()).sum()
        })
        .collect();
    let expected = softmax(&scores);
    assert_relative_eq!(g.value(w), expected.as_slice(), epsilon = 1e-14);
    assert_relative_eq!(g.value(w).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    let mut summary = vec![0.0; 2 * h];
    for (i, &s) in enc.states.iter().enumerate() {
        for (acc, x) in summary.iter_mut().zip(g.value(s)) {
            *acc += expected[i] * x;
        }
    }
    assert_relative_eq!(g.value(r), summary.as_slice(), epsilon = 1e-14);
}

#[test]
fn uniform_output_gives_log_inventory_loss() {
    let mut m = toy_model(Variant::Plain, 5);
    zero_params(&mut m);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "de");
    let out = decode_loss_teacher_forced(&mut g, &m, &enc, "d", None, &mut Dropout::evaluation()).unwrap();
    assert_eq!(out.steps, 2);
    let l = m.vocab.lemma_chars.len() as f64;
    assert_relative_eq!(g.scalar(out.loss), l.ln(), epsilon = 1e-12);
}

#[test]
fn unknown_lemma_characters_are_counted() {
    let m = toy_model(Variant::Plain, 5);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "de");
    let out = decode_loss_teacher_forced(&mut g, &m, &enc, "dq", None, &mut Dropout::evaluation()).unwrap();
    assert_eq!(out.unknown_chars, 1);
    let loss = g.scalar(out.loss);
    assert!(loss.is_finite() && loss > 0.0);
}

#[test]
fn teacher_forced_gradient_passes_check() {
    let m = toy_model(Variant::Plain, 6);
    let report = gradient_check(
        |p| {
            let mut g = Graph::new(p);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut dropout = Dropout::new(0.25, Some(&mut rng)).unwrap();
            let enc = encode_token(&mut g, &m, "jaren", &mut dropout)?;
            let out = decode_loss_teacher_forced(&mut g, &m, &enc, "jaar", None, &mut dropout)?;
            Ok((g.scalar(out.loss), g.backward(out.loss)))
        },
        &m.params,
        1e-2,
    )
    .unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn greedy_is_deterministic_and_respects_cap() {
    let m = toy_model(Variant::Plain, 7);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "gingen");
    let a = decode_greedy(&mut g, &m, &enc, None, 17).unwrap();
    let b = decode_greedy(&mut g, &m, &enc, None, 17).unwrap();
    assert_eq!(a, b);
    let capped = decode_greedy(&mut g, &m, &enc, None, 0).unwrap();
    assert!(capped.truncated && capped.lemma.is_empty());
    assert!(a.chars.iter().all(|&c| allowed_output(c) && c != EOS));
}

#[test]
fn beam_one_equals_greedy_and_beam_ten_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet: Vec<char> = "dejarnghiq".chars().collect();
    for seed in 0..20 {
        let m = toy_model(Variant::Plain, seed);
        for _ in 0..5 {
            let n = rng.gen_range(1..7);
            let form: String = (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            let mut g = Graph::new(&m.params);
            let enc = encode(&m, &mut g, &form);
            let max_len = default_max_len(enc.len());
            let greedy = decode_greedy(&mut g, &m, &enc, None, max_len).unwrap();
            let one = BeamConfig {
                beam_size: 1,
                ..BeamConfig::default()
            };
            assert_eq!(decode_beam(&mut g, &m, &enc, None, &one).unwrap(), greedy);
            let ten = decode_beam(&mut g, &m, &enc, None, &BeamConfig::default()).unwrap();
            assert!(ten.log_prob >= greedy.log_prob);
        }
    }
}

/// Best sequence over all outputs of at most `max_len` characters, each
/// ending in EOS or cut at `max_len`.
fn exhaustive(
    g: &mut Graph<'_>,
    m: &Lemmatizer,
    enc: &EncodedToken,
    state: &DecoderState,
    prefix: &mut Vec<usize>,
    score: f64,
    max_len: usize,
    best: &mut (f64, Vec<usize>),
) {
    if prefix.len() == max_len {
        if score > best.0 {
            *best = (score, prefix.clone());
        }
        return;
    }
    let (next, logits) =
        decoder_step(g, m, state, enc, None, &DecoderMasks::none(), &mut Dropout::evaluation()).unwrap();
    let lp = log_softmax(g.value(logits));
    for (c, &s) in lp.iter().enumerate().filter(|(c, _)| allowed_output(*c)) {
        if c == EOS {
            if score + s > best.0 {
                *best = (score + s, prefix.clone());
            }
        } else {
            prefix.push(c);
            let st = DecoderState {
                prev_char: c,
                ..next.clone()
            };
            exhaustive(g, m, enc, &st, prefix, score + s, max_len, best);
            prefix.pop();
        }
    }
}

#[test]
fn beam_matches_exhaustive_search_on_small_inventory() {
    use crate::corpus::build_vocabulary;
    use crate::testutil::{sentence, tiny_config};
    let vocab = build_vocabulary(&[sentence(&[("ab", "ab"), ("ba", "b")])], 10);
    assert_eq!(vocab.lemma_chars.len(), 6);
    for seed in 0..10 {
        let m = Lemmatizer::new(tiny_config(Variant::Plain), vocab.clone(), seed).unwrap();
        let mut g = Graph::new(&m.params);
        let enc = encode(&m, &mut g, "abba");
        let config = BeamConfig {
            max_len: Some(4),
            ..BeamConfig::default()
        };
        let beam = decode_beam(&mut g, &m, &enc, None, &config).unwrap();
        let start = initial_decoder_state(&mut g, &m, &enc);
        let mut best = (f64::NEG_INFINITY, Vec::new());
        exhaustive(&mut g, &m, &enc, &start, &mut Vec::new(), 0.0, 4, &mut best);
        assert_eq!(beam.chars, best.1, "seed {seed}");
        assert_relative_eq!(beam.log_prob, best.0, epsilon = 1e-12);
    }
}

#[test]
fn learned_decoder_init_changes_start_state() {
    let mut config = crate::testutil::tiny_config(Variant::Plain);
    config.decoder_init = DecoderInit::Learned;
    let m = Lemmatizer::new(config, toy_model(Variant::Plain, 0).vocab, 3).unwrap();
    assert_eq!(m.layout.dec_init.len(), 2);
    let mut g = Graph::new(&m.params);
    let enc = encode(&m, &mut g, "jaar");
    let st = initial_decoder_state(&mut g, &m, &enc);
    assert!(g.value(st.layers[0]).iter().any(|&x| x != 0.0));
}

#[test]
fn save_and_load_roundtrip() {
    let m = toy_model(Variant::SentLm, 8);
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let back = Lemmatizer::load(dir.path()).unwrap();
    assert_eq!(back.params.checksum(), m.params.checksum());
    assert_eq!(back.config, m.config);
    assert_eq!(back.layout, m.layout);
}
