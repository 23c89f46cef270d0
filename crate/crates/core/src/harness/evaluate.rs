use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::train::{EpochRecord, TrainedModel};
use crate::context::DecodeStrategy;
use crate::corpus::{AmbiguityIndex, Sentence, TokenCategory};
use crate::error::Result;

pub const REPORT_SCHEMA: &str = "lemmaforge-report-1";

/// One evaluated token; also the CSV row layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub form: String,
    pub gold: String,
    pub pred: String,
    pub is_ambiguous: bool,
    pub is_unknown: bool,
    pub correct: bool,
}

impl Prediction {
    pub fn new(form: &str, gold: &str, pred: &str, index: &AmbiguityIndex) -> Self {
        let category = index.category(form);
        Prediction {
            form: form.to_owned(),
            gold: gold.to_owned(),
            pred: pred.to_owned(),
            is_ambiguous: category == TokenCategory::Ambiguous,
            is_unknown: category == TokenCategory::Unknown,
            correct: gold == pred,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub total: usize,
    pub ambiguous: usize,
    pub known_unambiguous: usize,
    pub unknown: usize,
}

/// Accuracies in percent; `None` marks an empty subset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy_full: Option<f64>,
    pub accuracy_ambiguous: Option<f64>,
    pub accuracy_unknown: Option<f64>,
    pub counts: CategoryCounts,
}

fn percent(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

pub fn score_predictions(predictions: &[Prediction]) -> Metrics {
    let subset = |keep: &dyn Fn(&Prediction) -> bool| {
        let (c, t) = predictions
            .iter()
            .filter(|p| keep(p))
            .fold((0, 0), |(c, t), p| (c + usize::from(p.correct), t + 1));
        (c, t)
    };
    let (full_c, full_t) = subset(&|_| true);
    let (amb_c, amb_t) = subset(&|p| p.is_ambiguous);
    let (unk_c, unk_t) = subset(&|p| p.is_unknown);
    Metrics {
        accuracy_full: percent(full_c, full_t),
        accuracy_ambiguous: percent(amb_c, amb_t),
        accuracy_unknown: percent(unk_c, unk_t),
        counts: CategoryCounts {
            total: full_t,
            ambiguous: amb_t,
            known_unambiguous: full_t - amb_t - unk_t,
            unknown: unk_t,
        },
    }
}

/// Pair gold tokens with predicted lemmas and categorize them.
pub fn collect_predictions(
    sentences: &[Sentence],
    predicted: &[Vec<String>],
    index: &AmbiguityIndex,
) -> Vec<Prediction> {
    sentences
        .iter()
        .zip(predicted)
        .flat_map(|(s, preds)| {
            s.tokens
                .iter()
                .zip(preds)
                .map(|(t, p)| Prediction::new(t.form(), t.lemma(), p, index))
        })
        .collect()
}

/// Decode `test` with `strategy` and score against gold lemmas. `index`
/// must come from the training split.
pub fn evaluate(
    model: &TrainedModel,
    test: &[Sentence],
    index: &AmbiguityIndex,
    strategy: &DecodeStrategy,
) -> Result<(Metrics, Vec<Prediction>)> {
    let predicted = model.predict(test, strategy)?;
    let predictions = collect_predictions(test, &predicted, index);
    Ok((score_predictions(&predictions), predictions))
}

/// Everything recorded about one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub metrics: Metrics,
    pub epoch_log: Vec<EpochRecord>,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub predictions: Vec<Prediction>,
}

impl MetricsReport {
    pub fn new(
        config: ExperimentConfig,
        metrics: Metrics,
        predictions: Vec<Prediction>,
        epoch_log: Vec<EpochRecord>,
        train_seconds: f64,
        eval_seconds: f64,
    ) -> Self {
        MetricsReport {
            schema: REPORT_SCHEMA.to_owned(),
            config,
            metrics,
            epoch_log,
            train_seconds,
            eval_seconds,
            predictions,
        }
    }

    /// Write `report.json` and `predictions.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = BufWriter::new(File::create(dir.join("report.json"))?);
        serde_json::to_writer_pretty(&mut json, self)?;
        json.write_all(b"\n")?;
        write_predictions_csv(File::create(dir.join("predictions.csv"))?, &self.predictions)
    }
}

pub fn write_predictions_csv<W: Write>(out: W, predictions: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in predictions {
        w.serialize(p).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv<R: std::io::Read>(input: R) -> Result<Vec<Prediction>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| crate::Error::InvalidInput(e.to_string())))
        .collect()
}
