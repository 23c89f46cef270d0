use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::tree::{induce, EditTree};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, softmax, AdamConfig, Gradients, OptimizerState, ParameterSet, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// How many of the most frequent lowercased forms get an identity
    /// feature.
    pub frequent_forms: usize,
    pub seed: u64,
}

impl Default for TreeClassifierConfig {
    fn default() -> Self {
        TreeClassifierConfig {
            epochs: 20,
            lr: 1e-2,
            batch_size: 64,
            frequent_forms: 10_000,
            seed: 0,
        }
    }
}

/// Softmax classifier over induced edit trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeClassifierModel {
    /// Class inventory, most frequent first (ties in canonical order).
    pub trees: Vec<EditTree>,
    pub frequencies: Vec<usize>,
    features: HashMap<String, usize>,
    frequent_forms: HashSet<String>,
    /// `features × classes`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Mean training cross-entropy per epoch.
    pub loss_history: Vec<f64>,
}

struct Example {
    features: Vec<usize>,
    class: usize,
}

/// Count trees over all training pairs; most frequent first, ties broken by
/// canonical text.
pub fn tree_inventory(train: &[Sentence]) -> Result<Vec<(EditTree, usize)>> {
    let mut counts: HashMap<EditTree, usize> = HashMap::new();
    for token in train.iter().flat_map(|s| &s.tokens) {
        *counts.entry(induce(token.form(), token.lemma())?).or_default() += 1;
    }
    let mut inventory: Vec<(String, EditTree, usize)> = counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), t, c))
        .collect();
    inventory.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    Ok(inventory.into_iter().map(|(_, t, c)| (t, c)).collect())
}

/// One tree per line: canonical form, a tab, the frequency.
pub fn write_inventory<W: Write>(mut out: W, inventory: &[(EditTree, usize)]) -> Result<()> {
    for (tree, count) in inventory {
        writeln!(out, "{tree}\t{count}")?;
    }
    Ok(())
}

pub fn read_inventory<R: BufRead>(reader: R) -> Result<Vec<(EditTree, usize)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (tree, count) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected tree<TAB>count"))?;
        let count = count
            .trim()
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad count {count:?}")))?;
        let tree = EditTree::parse(tree).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push((tree, count));
    }
    Ok(out)
}

/// Multinomial logistic regression over [`extract_features`], classes being
/// the distinct induced trees, trained with Adam on cross-entropy.
pub fn train_tree_classifier(
    train: &[Sentence],
    config: &TreeClassifierConfig,
) -> Result<TreeClassifierModel> {
    let inventory = tree_inventory(train)?;
    if inventory.is_empty() {
        return Err(Error::InvalidInput("no training tokens".into()));
    }
    let class_of: HashMap<&EditTree, usize> =
        inventory.iter().enumerate().map(|(i, (t, _))| (t, i)).collect();

    let mut form_counts: BTreeMap<String, usize> = BTreeMap::new();
    for token in train.iter().flat_map(|s| &s.tokens) {
        *form_counts.entry(token.form().to_lowercase()).or_default() += 1;
    }
    let mut by_freq: Vec<(String, usize)> = form_counts.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let frequent_forms: HashSet<String> = by_freq
        .into_iter()
        .take(config.frequent_forms)
        .map(|(f, _)| f)
        .collect();

    let mut features: HashMap<String, usize> = HashMap::new();
    let mut examples = Vec::new();
    for sentence in train {
        for (pos, token) in sentence.tokens.iter().enumerate() {
            let tree = induce(token.form(), token.lemma())?;
            let names = extract_features(sentence, pos, Some(&frequent_forms));
            let mut idx: Vec<usize> = names
                .into_iter()
                .map(|n| {
                    let next = features.len();
                    *features.entry(n).or_insert(next)
                })
                .collect();
            idx.sort_unstable();
            idx.dedup();
            examples.push(Example {
                features: idx,
                class: class_of[&tree],
            });
        }
    }

    let n_classes = inventory.len();
    let n_features = features.len();
    let mut params = ParameterSet::new();
    let w = params.insert("tree.w", Tensor::zeros(vec![n_features, n_classes]))?;
    let b = params.insert("tree.b", Tensor::zeros(vec![n_classes]))?;
    let mut state = OptimizerState::new(&params, config.lr)?;
    let adam = AdamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grads = Gradients::zeros_like(&params);
            let scale = 1.0 / batch.len() as f64;
            for &e in batch {
                let ex = &examples[e];
                let probs = softmax(&scores(
                    params.tensor(w).values(),
                    params.tensor(b).values(),
                    n_classes,
                    &ex.features,
                ));
                epoch_loss -= probs[ex.class].max(f64::MIN_POSITIVE).ln();
                let mut delta = probs;
                delta[ex.class] -= 1.0;
                let gw = grads.get_mut(w);
                for &f in &ex.features {
                    let row = &mut gw[f * n_classes..(f + 1) * n_classes];
                    row.iter_mut().zip(&delta).for_each(|(g, d)| *g += scale * d);
                }
                grads
                    .get_mut(b)
                    .iter_mut()
                    .zip(&delta)
                    .for_each(|(g, d)| *g += scale * d);
            }
            adam_step(&mut params, &grads, &mut state, &adam)?;
        }
        loss_history.push(epoch_loss / examples.len() as f64);
    }

    let (trees, frequencies) = inventory.into_iter().unzip();
    Ok(TreeClassifierModel {
        trees,
        frequencies,
        features,
        frequent_forms,
        weights: params.tensor(w).values().to_vec(),
        bias: params.tensor(b).values().to_vec(),
        loss_history,
    })
}

fn scores(weights: &[f64], bias: &[f64], n_classes: usize, features: &[usize]) -> Vec<f64> {
    let mut s = bias.to_vec();
    for &f in features {
        s.iter_mut()
            .zip(&weights[f * n_classes..(f + 1) * n_classes])
            .for_each(|(a, w)| *a += w);
    }
    s
}

impl TreeClassifierModel {
    pub fn class_count(&self) -> usize {
        self.trees.len()
    }

    /// Class scores for the token at `position`; unseen features are ignored.
    pub fn scores(&self, sentence: &Sentence, position: usize) -> Vec<f64> {
        let idx: Vec<usize> = extract_features(sentence, position, Some(&self.frequent_forms))
            .iter()
            .filter_map(|f| self.features.get(f).copied())
            .collect();
        scores(&self.weights, &self.bias, self.trees.len(), &idx)
    }

    /// Class indices by descending score; ties keep inventory order.
    pub fn ranking(&self, sentence: &Sentence, position: usize) -> Vec<usize> {
        let s = self.scores(sentence, position);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        order
    }

    /// Replace the learned weights, e.g. to pin scores in tests.
    pub fn set_scores_for_testing(&mut self, bias: Vec<f64>) {
        assert_eq!(bias.len(), self.trees.len());
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        self.bias = bias;
    }

    pub fn inventory(&self) -> Vec<(EditTree, usize)> {
        self.trees.iter().cloned().zip(self.frequencies.iter().copied()).collect()
    }
}

/// Lemmatize every token with the best-scoring applicable tree, falling back
/// to the lowercased form.
pub fn lemmatize_with_trees(model: &TreeClassifierModel, sentence: &Sentence) -> Vec<String> {
    (0..sentence.len())
        .map(|pos| {
            let form = sentence.tokens[pos].form();
            model
                .ranking(sentence, pos)
                .into_iter()
                .find_map(|c| model.trees[c].apply(form))
                .unwrap_or_else(|| form.to_lowercase())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn sentence(pairs: &[(&str, &str)]) -> Sentence {
        Sentence::new(
            pairs.iter().map(|(f, l)| Token::new(*f, *l).unwrap()).collect(),
            "c",
        )
    }

    fn config(epochs: usize) -> TreeClassifierConfig {
        TreeClassifierConfig {
            epochs,
            lr: 0.05,
            batch_size: 8,
            ..Default::default()
        }
    }

    #[test]
    fn single_class_corpus() {
        let train = vec![sentence(&[("de", "de"), ("man", "man"), ("loopt", "loopt")])];
        let model = train_tree_classifier(&train, &config(30)).unwrap();
        assert_eq!(model.class_count(), 1);
        assert!(*model.loss_history.last().unwrap() < 1e-6);
        let out = lemmatize_with_trees(&model, &sentence(&[("nieuw", "x")]));
        assert_eq!(out, vec!["nieuw"]);
    }

    #[test]
    fn separable_two_class_fixture() {
        let mut train = Vec::new();
        for stem in ["walk", "talk", "jump", "play", "kick", "pull", "push", "rock"] {
            train.push(sentence(&[(&format!("{stem}s"), stem), (stem, stem)]));
        }
        let model = train_tree_classifier(&train, &config(60)).unwrap();
        assert_eq!(model.class_count(), 2);
        for s in &train {
            let gold: Vec<&str> = s.tokens.iter().map(Token::lemma).collect();
            assert_eq!(lemmatize_with_trees(&model, s), gold);
        }
    }

    #[test]
    fn uninformative_features_predict_majority() {
        // every token has identical features except through the trees
        let mut train = Vec::new();
        for _ in 0..7 {
            train.push(sentence(&[("aa", "aa")]));
        }
        for _ in 0..3 {
            train.push(sentence(&[("aa", "a")]));
        }
        // full-batch so the fit approaches the empirical class prior
        let cfg = TreeClassifierConfig {
            batch_size: 10,
            ..config(400)
        };
        let model = train_tree_classifier(&train, &cfg).unwrap();
        let ranking = model.ranking(&train[0], 0);
        assert_eq!(model.trees[ranking[0]], EditTree::identity());
        let probs = softmax(&model.scores(&train[0], 0));
        assert!((probs[ranking[0]] - 0.7).abs() < 0.02, "{probs:?}");
    }

    #[test]
    fn falls_through_to_applicable_tree() {
        let train = vec![
            sentence(&[("walking", "walk"), ("cats", "cat"), ("cats", "cat")]),
        ];
        let mut model = train_tree_classifier(&train, &config(1)).unwrap();
        // class 0 is the -s tree (frequency 2), class 1 the -ing tree
        assert_eq!(model.frequencies, vec![2, 1]);
        model.set_scores_for_testing(vec![5.0, 1.0]);
        let out = lemmatize_with_trees(&model, &sentence(&[("singing", "x")]));
        assert_eq!(out, vec!["sing"]);
        let out = lemmatize_with_trees(&model, &sentence(&[("Ox", "x")]));
        assert_eq!(out, vec!["ox"]);
    }

    #[test]
    fn inventory_text_roundtrip() {
        let train = vec![sentence(&[("jaren", "jaar"), ("iare", "jaar"), ("jaren", "jaar")])];
        let inv = tree_inventory(&train).unwrap();
        let mut buf = Vec::new();
        write_inventory(&mut buf, &inv).unwrap();
        assert_eq!(read_inventory(&buf[..]).unwrap(), inv);
        assert_eq!(inv[0].1, 2);
    }
}
