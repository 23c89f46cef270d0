use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind};
use super::evaluate::{evaluate, Metrics};
use super::stats::{error_reduction, mean, spearman, wilcoxon_signed_rank, WilcoxonResult};
use super::train::{test_strategy, train};
use crate::corpus::{build_ambiguity_index, corpus_diagnostics, CorpusDiagnostics, Splits, DEFAULT_DIAGNOSTIC_WINDOW};
use crate::error::Result;

/// Outcome of one (dataset, variant, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub dataset: String,
    pub variant: ModelKind,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    /// Training or evaluation fault, if the cell failed.
    pub error: Option<String>,
    pub seconds: f64,
}

/// Seed-averaged accuracies of one variant on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub dataset: String,
    pub variant: ModelKind,
    pub accuracy_full: Option<f64>,
    pub accuracy_ambiguous: Option<f64>,
    pub accuracy_unknown: Option<f64>,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReduction {
    pub dataset: String,
    pub baseline: ModelKind,
    pub candidate: ModelKind,
    pub full: Option<f64>,
    pub ambiguous: Option<f64>,
    pub unknown: Option<f64>,
}

/// Paired test across datasets on full accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub baseline: ModelKind,
    pub candidate: ModelKind,
    pub wilcoxon: WilcoxonResult,
    /// Error reduction of the dataset-averaged accuracies.
    pub pooled_reduction: Option<f64>,
}

/// Correlation between a corpus diagnostic and per-dataset error reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCorrelation {
    pub baseline: ModelKind,
    pub candidate: ModelKind,
    pub diagnostic: String,
    pub spearman: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub cells: Vec<GridCell>,
    pub summaries: Vec<VariantSummary>,
    pub reductions: Vec<PairwiseReduction>,
    pub tests: Vec<PairwiseTest>,
    pub diagnostics: BTreeMap<String, CorpusDiagnostics>,
    pub correlations: Vec<DiagnosticCorrelation>,
}

fn run_cell(base: &ExperimentConfig, dataset: &str, splits: &Splits, variant: ModelKind, seed: u64) -> GridCell {
    let start = Instant::now();
    let config = ExperimentConfig {
        variant,
        seed,
        ..base.clone()
    };
    let outcome = (|| -> Result<Metrics> {
        let mut log = Vec::new();
        let model = train(&config, splits, &mut log)?;
        let index = build_ambiguity_index(&splits.train);
        Ok(evaluate(&model, &splits.test, &index, &test_strategy(&config))?.0)
    })();
    let (metrics, error) = match outcome {
        Ok(m) => (Some(m), None),
        Err(e) => {
            log::warn!("cell {dataset}/{variant}/{seed} failed: {e}");
            (None, Some(e.to_string()))
        }
    };
    GridCell {
        dataset: dataset.to_owned(),
        variant,
        seed,
        metrics,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Train and evaluate every variant with every seed on every dataset. Cells
/// run in parallel and a failing cell is recorded without stopping the
/// grid. Seeds are averaged per (dataset, variant); error reductions are
/// given per dataset, and with several datasets also as Wilcoxon tests and
/// pooled reductions, plus Spearman correlations against corpus
/// diagnostics.
pub fn compare_models(
    base: &ExperimentConfig,
    datasets: &[(String, Splits)],
    variants: &[ModelKind],
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if variants.is_empty() || seeds.is_empty() || datasets.is_empty() {
        return Err(crate::Error::Config("compare needs datasets, variants and seeds".into()));
    }
    let jobs: Vec<(usize, ModelKind, u64)> = (0..datasets.len())
        .flat_map(|d| variants.iter().flat_map(move |&v| seeds.iter().map(move |&s| (d, v, s))))
        .collect();
    let cells: Vec<GridCell> = jobs
        .par_iter()
        .map(|&(d, v, s)| run_cell(base, &datasets[d].0, &datasets[d].1, v, s))
        .collect();

    let mut summaries = Vec::new();
    for (name, _) in datasets {
        for &variant in variants {
            let ok: Vec<&Metrics> = cells
                .iter()
                .filter(|c| &c.dataset == name && c.variant == variant)
                .filter_map(|c| c.metrics.as_ref())
                .collect();
            let avg = |f: fn(&Metrics) -> Option<f64>| mean(&ok.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
            summaries.push(VariantSummary {
                dataset: name.clone(),
                variant,
                accuracy_full: avg(|m| m.accuracy_full),
                accuracy_ambiguous: avg(|m| m.accuracy_ambiguous),
                accuracy_unknown: avg(|m| m.accuracy_unknown),
                seeds: ok.len(),
            });
        }
    }
    let summary = |d: &str, v: ModelKind| summaries.iter().find(|s| s.dataset == d && s.variant == v);
    let reduce = |a: Option<f64>, b: Option<f64>| a.zip(b).and_then(|(a, b)| error_reduction(a, b));

    let mut reductions = Vec::new();
    let mut tests = Vec::new();
    let mut correlations = Vec::new();
    let diagnostics: BTreeMap<String, CorpusDiagnostics> = datasets
        .iter()
        .map(|(n, s)| Ok((n.clone(), corpus_diagnostics(&s.train, DEFAULT_DIAGNOSTIC_WINDOW)?)))
        .collect::<Result<_>>()?;

    for (i, &baseline) in variants.iter().enumerate() {
        for &candidate in &variants[i + 1..] {
            let mut base_full = Vec::new();
            let mut cand_full = Vec::new();
            let mut per_dataset = Vec::new();
            for (name, _) in datasets {
                let (a, b) = (summary(name, baseline), summary(name, candidate));
                let r = PairwiseReduction {
                    dataset: name.clone(),
                    baseline,
                    candidate,
                    full: reduce(a.and_then(|s| s.accuracy_full), b.and_then(|s| s.accuracy_full)),
                    ambiguous: reduce(a.and_then(|s| s.accuracy_ambiguous), b.and_then(|s| s.accuracy_ambiguous)),
                    unknown: reduce(a.and_then(|s| s.accuracy_unknown), b.and_then(|s| s.accuracy_unknown)),
                };
                if let (Some(x), Some(y)) = (a.and_then(|s| s.accuracy_full), b.and_then(|s| s.accuracy_full)) {
                    base_full.push(x);
                    cand_full.push(y);
                    per_dataset.push((name.clone(), r.full));
                }
                reductions.push(r);
            }
            if datasets.len() > 1 && !base_full.is_empty() {
                tests.push(PairwiseTest {
                    baseline,
                    candidate,
                    wilcoxon: wilcoxon_signed_rank(&cand_full, &base_full)?,
                    pooled_reduction: reduce(mean(&base_full), mean(&cand_full)),
                });
                let points: Vec<(&CorpusDiagnostics, f64)> = per_dataset
                    .iter()
                    .filter_map(|(n, r)| Some((&diagnostics[n], (*r)?)))
                    .collect();
                if points.len() >= 3 {
                    let red: Vec<f64> = points.iter().map(|p| p.1).collect();
                    let probes: [(&str, fn(&CorpusDiagnostics) -> f64); 3] = [
                        ("ambiguous_token_pct", |d| d.ambiguous_token_pct),
                        ("token_lemma_ratio", |d| d.token_lemma_ratio),
                        ("unique_tree_count", |d| d.unique_tree_count as f64),
                    ];
                    for (name, f) in probes {
                        let xs: Vec<f64> = points.iter().map(|p| f(p.0)).collect();
                        correlations.push(DiagnosticCorrelation {
                            baseline,
                            candidate,
                            diagnostic: name.to_owned(),
                            spearman: spearman(&xs, &red)?,
                        });
                    }
                }
            }
        }
    }

    Ok(ComparisonReport {
        schema: super::evaluate::REPORT_SCHEMA.to_owned(),
        config: base.clone(),
        cells,
        summaries,
        reductions,
        tests,
        diagnostics,
        correlations,
    })
}
