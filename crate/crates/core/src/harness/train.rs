use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::context::{joint_loss, lemmatize_sentence, lm_perplexity, lm_weight_schedule_with, AnnealTrigger, DecodeStrategy};
use crate::corpus::{build_vocabulary, chunk_sentences, split_dataset, DatasetManifest, LoadOptions, Sentence, Splits};
use crate::edittree::{lemmatize_with_trees, train_tree_classifier, TreeClassifierModel};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, non_improving_streak, plateau_lr_schedule, AdamConfig, OptimizerState};
use crate::transducer::{BeamConfig, Lemmatizer};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Token-weighted mean of the batch objectives.
    pub train_loss: f64,
    pub lemma_loss: f64,
    pub lm_loss: Option<f64>,
    pub dev_accuracy: Option<f64>,
    pub dev_perplexity: Option<f64>,
    /// Learning rate and LM weight in force during the epoch.
    pub lr: f64,
    pub lm_weight: Option<f64>,
    pub seconds: f64,
    /// Peak resident set size of the process so far, when the platform
    /// reports it.
    pub peak_rss_kb: Option<u64>,
}

/// A trained lemmatizer of either paradigm.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Neural(Lemmatizer),
    EditTree(TreeClassifierModel),
}

const TREE_FILE: &str = "edittree.json";

impl TrainedModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            TrainedModel::Neural(m) => m.save(dir),
            TrainedModel::EditTree(m) => {
                std::fs::create_dir_all(dir)?;
                serde_json::to_writer(BufWriter::new(File::create(dir.join(TREE_FILE))?), m)?;
                Ok(())
            }
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let tree = dir.join(TREE_FILE);
        if tree.exists() {
            Ok(TrainedModel::EditTree(serde_json::from_reader(BufReader::new(File::open(tree)?))?))
        } else {
            Ok(TrainedModel::Neural(Lemmatizer::load(dir)?))
        }
    }

    /// Predicted lemma per token, sentence by sentence.
    pub fn predict(&self, sentences: &[Sentence], strategy: &DecodeStrategy) -> Result<Vec<Vec<String>>> {
        match self {
            TrainedModel::Neural(m) => predict_neural(m, sentences, strategy),
            TrainedModel::EditTree(m) => Ok(sentences.iter().map(|s| lemmatize_with_trees(m, s)).collect()),
        }
    }
}

pub fn predict_neural(model: &Lemmatizer, sentences: &[Sentence], strategy: &DecodeStrategy) -> Result<Vec<Vec<String>>> {
    sentences
        .iter()
        .map(|s| {
            let forms: Vec<&str> = s.forms().collect();
            Ok(lemmatize_sentence(model, &forms, strategy)?
                .into_iter()
                .map(|d| d.lemma)
                .collect())
        })
        .collect()
}

/// Exact-match accuracy in percent; `None` for an empty set.
pub fn accuracy(sentences: &[Sentence], predictions: &[Vec<String>]) -> Option<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for (s, preds) in sentences.iter().zip(predictions) {
        for (t, p) in s.tokens.iter().zip(preds) {
            total += 1;
            correct += usize::from(t.lemma() == p);
        }
    }
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

/// Load the splits named by the config and chunk them. A lone training
/// file is split 85/5/10 with the config seed.
pub fn load_splits(config: &ExperimentConfig) -> Result<Splits> {
    let options = LoadOptions {
        lowercase_forms: config.lowercase_forms,
        fullstop_tag: config.fullstop_tag.clone(),
    };
    let splits = if let Some(manifest) = &config.data {
        let file = File::open(manifest)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", manifest.display()))))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        crate::corpus::read_manifest(BufReader::new(file), base)?.load(&options)?
    } else {
        let train = config
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("no data given (set `data` or `train`)".into()))?;
        match (&config.dev, &config.test) {
            (Some(dev), Some(test)) => DatasetManifest {
                train: vec![train.clone()],
                dev: vec![dev.clone()],
                test: vec![test.clone()],
            }
            .load(&options)?,
            (None, None) => {
                let sentences = crate::corpus::load_corpus(train, &options)?;
                split_dataset(sentences, &mut ChaCha8Rng::seed_from_u64(config.seed))?
            }
            _ => return Err(Error::Config("give both `dev` and `test`, or neither".into())),
        }
    };
    Ok(chunk_splits(splits, config.chunk_len))
}

pub fn chunk_splits(splits: Splits, chunk_len: usize) -> Splits {
    Splits {
        train: chunk_sentences(splits.train, chunk_len),
        dev: chunk_sentences(splits.dev, chunk_len),
        test: chunk_sentences(splits.test, chunk_len),
    }
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rand::RngCore::next_u64(&mut rng)
}

/// Train the configured model on `train`, selecting on `dev`. Epoch records
/// are appended to `log` as they complete, so the log survives a
/// divergence error.
pub fn train(config: &ExperimentConfig, splits: &Splits, log: &mut Vec<EpochRecord>) -> Result<TrainedModel> {
    config.validate()?;
    if splits.train.is_empty() || splits.dev.is_empty() {
        return Err(Error::InvalidInput("training needs non-empty train and dev splits".into()));
    }
    match config.variant.neural() {
        Some(_) => train_neural(config, splits, log).map(TrainedModel::Neural),
        None => train_edit_trees(config, splits, log),
    }
}

fn train_edit_trees(config: &ExperimentConfig, splits: &Splits, log: &mut Vec<EpochRecord>) -> Result<TrainedModel> {
    let start = Instant::now();
    let model = TrainedModel::EditTree(train_tree_classifier(&splits.train, &config.tree_config())?);
    let TrainedModel::EditTree(m) = &model else { unreachable!() };
    let history = m.loss_history.clone();
    let dev = accuracy(&splits.dev, &model.predict(&splits.dev, &DecodeStrategy::Greedy)?);
    let seconds = start.elapsed().as_secs_f64() / history.len().max(1) as f64;
    for (i, loss) in history.iter().enumerate() {
        log.push(EpochRecord {
            epoch: i + 1,
            train_loss: *loss,
            lemma_loss: *loss,
            lm_loss: None,
            dev_accuracy: if i + 1 == history.len() { dev } else { None },
            dev_perplexity: None,
            lr: config.tree_lr,
            lm_weight: None,
            seconds,
            peak_rss_kb: peak_rss_kb(),
        });
    }
    Ok(model)
}

fn train_neural(config: &ExperimentConfig, splits: &Splits, log: &mut Vec<EpochRecord>) -> Result<Lemmatizer> {
    let vocab = build_vocabulary(&splits.train, config.lm_vocab_cap);
    let mut model = Lemmatizer::new(config.model_config()?, vocab, config.seed)?;
    let uses_lm = model.config.variant.uses_lm();
    let mut optimizer = OptimizerState::new(&model.params, config.lr)?;
    let adam = AdamConfig::default();
    let mut lm_weight = config.lm_weight;
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));

    let mut best: Option<(f64, crate::numerics::ParameterSet)> = None;
    let mut dev_history = Vec::new();
    let mut ppl_history = Vec::new();
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let lr_used = optimizer.lr;
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut lemma, mut lm, mut tokens, mut lm_batches) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Sentence> = chunk.iter().map(|&i| splits.train[i].clone()).collect();
            let weight = if uses_lm { lm_weight } else { 0.0 };
            let (loss, mut grads) = joint_loss(&model, &batch, weight, Some(batch_seed(config.seed, epoch, b)))?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("non-finite loss {} in batch {b}", loss.total),
                });
            }
            grads.clip_global_norm(config.clip_norm);
            adam_step(&mut model.params, &grads, &mut optimizer, &adam)?;
            total += loss.total * loss.tokens as f64;
            lemma += loss.lemma * loss.tokens as f64;
            if loss.lm_sentences > 0 {
                lm += loss.lm * loss.tokens as f64;
                lm_batches += loss.tokens;
            }
            tokens += loss.tokens;
        }

        let dev_predictions = predict_neural(&model, &splits.dev, &DecodeStrategy::Greedy)?;
        let dev_acc = accuracy(&splits.dev, &dev_predictions).unwrap_or(0.0);
        let dev_ppl = if uses_lm { lm_perplexity(&model, &splits.dev)? } else { None };

        log.push(EpochRecord {
            epoch,
            train_loss: total / tokens as f64,
            lemma_loss: lemma / tokens as f64,
            lm_loss: (lm_batches > 0).then(|| lm / lm_batches as f64),
            dev_accuracy: Some(dev_acc),
            dev_perplexity: dev_ppl,
            lr: lr_used,
            lm_weight: uses_lm.then_some(lm_weight),
            seconds: start.elapsed().as_secs_f64(),
            peak_rss_kb: peak_rss_kb(),
        });
        log::info!(
            "epoch {epoch}: loss {:.4} dev {:.2}% lr {:.2e}",
            total / tokens as f64,
            dev_acc,
            lr_used
        );

        if best.as_ref().map_or(true, |(b, _)| dev_acc > *b) {
            best = Some((dev_acc, model.params.clone()));
        }
        dev_history.push(dev_acc);
        plateau_lr_schedule(&mut optimizer, &dev_history, config.lr_decay, config.schedule.patience());
        if uses_lm {
            lm_weight = match config.anneal_trigger {
                AnnealTrigger::Perplexity => match dev_ppl {
                    Some(p) => {
                        ppl_history.push(p);
                        lm_weight_schedule_with(lm_weight, &ppl_history, AnnealTrigger::Perplexity)
                    }
                    None => lm_weight,
                },
                AnnealTrigger::Accuracy => lm_weight_schedule_with(lm_weight, &dev_history, AnnealTrigger::Accuracy),
            };
        }
        if config.target_dev_accuracy.is_some_and(|t| dev_acc >= t) {
            break;
        }
        if non_improving_streak(&dev_history, true) >= config.stop_patience() {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    if let Some((_, params)) = best {
        model.load_params(params)?;
    }
    Ok(model)
}

/// Default test-time decoding for a config.
pub fn test_strategy(config: &ExperimentConfig) -> DecodeStrategy {
    DecodeStrategy::Beam(BeamConfig {
        beam_size: config.beam_size,
        max_len: None,
        length_normalize: config.length_normalize,
    })
}
