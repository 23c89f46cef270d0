use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::sentence_encode;
use crate::corpus::{Sentence, Splits};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, non_improving_streak, AdamConfig, Dropout, Gradients, Graph, OptimizerState, ParameterSet, Tensor};
use crate::transducer::Lemmatizer;

/// Tag tasks probed by default.
pub const PROBE_TASKS: [&str; 5] = ["Pos", "Dep", "Gender", "Case", "Num"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without dev accuracy gain before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 1e-3,
            max_epochs: 50,
            patience: 2,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// A probing task: a token tag and its training label inventory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTask {
    pub name: String,
    pub labels: Vec<String>,
}

impl ProbeTask {
    /// Labels seen in `train`, sorted; `None` if the tag never occurs.
    pub fn from_corpus(name: &str, train: &[Sentence]) -> Option<Self> {
        let mut labels: Vec<String> = train
            .iter()
            .flat_map(|s| &s.tokens)
            .filter_map(|t| t.tag(name).map(str::to_owned))
            .collect();
        labels.sort();
        labels.dedup();
        (!labels.is_empty()).then(|| ProbeTask {
            name: name.to_owned(),
            labels,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub task: String,
    pub accuracy: f64,
    pub majority_baseline: f64,
    pub dev_history: Vec<f64>,
    pub test_tokens: usize,
}

/// Accuracy in percent of always answering the most frequent training
/// label (ties: smallest label).
pub fn majority_baseline(train_labels: &[&str], test_labels: &[&str]) -> Option<f64> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in train_labels {
        *counts.entry(l).or_default() += 1;
    }
    let (majority, _) = counts.iter().fold(None, |best: Option<(&str, usize)>, (&l, &c)| match best {
        Some((_, bc)) if bc >= c => best,
        _ => Some((l, c)),
    })?;
    let hits = test_labels.iter().filter(|&&l| l == majority).count();
    (!test_labels.is_empty()).then(|| 100.0 * hits as f64 / test_labels.len() as f64)
}

/// Frozen per-token representations: `s_t` for context models, the final
/// character-encoder states otherwise. Evaluation mode, no gradients.
pub fn token_features(model: &Lemmatizer, sentence: &Sentence) -> Result<Vec<Vec<f64>>> {
    let forms: Vec<&str> = sentence.forms().collect();
    let mut g = Graph::new(&model.params);
    let (encoded, features) = sentence_encode(&mut g, model, &forms, &mut Dropout::evaluation())?;
    Ok(match features {
        Some(f) => f.states.iter().map(|&s| g.value(s).to_vec()).collect(),
        None => encoded
            .iter()
            .map(|e| {
                let mut v = g.value(e.final_forward).to_vec();
                v.extend_from_slice(g.value(e.final_backward));
                v
            })
            .collect(),
    })
}

/// Examples of tokens carrying the tag; unseen labels become `None`.
fn examples(
    model: &Lemmatizer,
    sentences: &[Sentence],
    task: &ProbeTask,
    index: &HashMap<&str, usize>,
) -> Result<Vec<(Vec<f64>, Option<usize>)>> {
    let mut out = Vec::new();
    for s in sentences {
        let feats = token_features(model, s)?;
        for (t, f) in s.tokens.iter().zip(feats) {
            if let Some(label) = t.tag(&task.name) {
                out.push((f, index.get(label).copied()));
            }
        }
    }
    Ok(out)
}

struct Linear {
    params: ParameterSet,
    w: crate::numerics::ParamId,
    b: crate::numerics::ParamId,
}

impl Linear {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let w = self.params.tensor(self.w);
        let b = self.params.tensor(self.b).values();
        (0..w.rows())
            .map(|r| b[r] + w.row(r).iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    fn accuracy(&self, data: &[(Vec<f64>, Option<usize>)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .iter()
            .filter(|(x, y)| {
                let s = self.scores(x);
                let best = (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });
                *y == Some(best)
            })
            .count();
        100.0 * hits as f64 / data.len() as f64
    }
}

/// Train a linear softmax probe on frozen token features and report its
/// test accuracy next to the majority baseline. Returns `Ok(None)` when the
/// tag is absent from the training split. The model is borrowed immutably;
/// only the probe's own parameters are updated.
pub fn probe(model: &Lemmatizer, task_name: &str, splits: &Splits, config: &ProbeConfig) -> Result<Option<ProbeResult>> {
    let Some(task) = ProbeTask::from_corpus(task_name, &splits.train) else {
        log::info!("probe task {task_name} absent from the corpus; skipped");
        return Ok(None);
    };
    let index: HashMap<&str, usize> = task.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let train = examples(model, &splits.train, &task, &index)?;
    let dev = examples(model, &splits.dev, &task, &index)?;
    let test = examples(model, &splits.test, &task, &index)?;
    if test.is_empty() {
        return Err(Error::InvalidInput(format!("no test tokens tagged {task_name}")));
    }
    let width = train[0].0.len();

    let mut params = ParameterSet::new();
    let w = params.insert("probe.w", Tensor::zeros(vec![task.labels.len(), width]))?;
    let b = params.insert("probe.b", Tensor::zeros(vec![task.labels.len()]))?;
    let mut linear = Linear { params, w, b };
    let mut optimizer = OptimizerState::new(&linear.params, config.lr)?;
    let adam = AdamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, ParameterSet)> = None;
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let mut grads = Gradients::zeros_like(&linear.params);
            for &i in chunk {
                let (x, y) = &train[i];
                let Some(y) = *y else { continue };
                let probs = crate::numerics::softmax(&linear.scores(x));
                let scale = 1.0 / chunk.len() as f64;
                for (r, p) in probs.iter().enumerate() {
                    let d = (p - f64::from(u8::from(r == y))) * scale;
                    grads.get_mut(b)[r] += d;
                    for (gw, xv) in grads.get_mut(w)[r * width..(r + 1) * width].iter_mut().zip(x) {
                        *gw += d * xv;
                    }
                }
            }
            adam_step(&mut linear.params, &grads, &mut optimizer, &adam)?;
        }
        let acc = if dev.is_empty() { linear.accuracy(&train) } else { linear.accuracy(&dev) };
        history.push(acc);
        if best.as_ref().map_or(true, |(b, _)| acc > *b) {
            best = Some((acc, linear.params.clone()));
        }
        if non_improving_streak(&history, true) >= config.patience {
            break;
        }
    }
    if let Some((_, p)) = best {
        linear.params = p;
    }

    let labels_of = |sentences: &[Sentence]| -> Vec<String> {
        sentences
            .iter()
            .flat_map(|s| &s.tokens)
            .filter_map(|t| t.tag(task_name).map(str::to_owned))
            .collect()
    };
    let (train_labels, test_labels) = (labels_of(&splits.train), labels_of(&splits.test));
    let majority = majority_baseline(
        &train_labels.iter().map(String::as_str).collect::<Vec<_>>(),
        &test_labels.iter().map(String::as_str).collect::<Vec<_>>(),
    )
    .unwrap_or(0.0);
    Ok(Some(ProbeResult {
        task: task.name,
        accuracy: linear.accuracy(&test),
        majority_baseline: majority,
        dev_history: history,
        test_tokens: test.len(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::testutil::toy_model;
    use crate::transducer::Variant;

    #[test]
    fn majority_of_seven_three() {
        let labels: Vec<&str> = [["A"; 7].as_slice(), ["B"; 3].as_slice()].concat();
        assert_eq!(majority_baseline(&labels, &labels), Some(70.0));
    }

    fn tagged(words: &[(&str, &str)]) -> Sentence {
        Sentence::new(
            words
                .iter()
                .map(|(w, tag)| Token::new(*w, *w).unwrap().with_tag("Pos", *tag))
                .collect(),
            "t",
        )
    }

    #[test]
    fn absent_task_is_skipped() {
        let m = toy_model(Variant::Sent, 0);
        let s = Splits {
            train: vec![tagged(&[("de", "DET")])],
            dev: vec![],
            test: vec![tagged(&[("de", "DET")])],
        };
        assert!(probe(&m, "Case", &s, &ProbeConfig::default()).unwrap().is_none());
    }

    #[test]
    fn frozen_model_is_untouched() {
        let m = toy_model(Variant::SentLm, 1);
        let before = m.params.checksum();
        let data: Vec<Sentence> = (0..10)
            .map(|i| tagged(&[("de", "DET"), (if i % 3 == 0 { "jaar" } else { "jaren" }, "N")]))
            .collect();
        let s = Splits {
            train: data.clone(),
            dev: data[..3].to_vec(),
            test: data[3..].to_vec(),
        };
        let r = probe(&m, "Pos", &s, &ProbeConfig::default()).unwrap().unwrap();
        assert_eq!(m.params.checksum(), before);
        assert_eq!(r.majority_baseline, 50.0);
        assert!(r.accuracy >= 0.0 && r.accuracy <= 100.0);
    }
}
