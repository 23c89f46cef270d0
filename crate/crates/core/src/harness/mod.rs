//! Training, evaluation, statistics, probing and model comparison.

mod compare;
mod config;
mod evaluate;
mod probe;
mod stats;
mod train;

pub use compare::{
    compare_models, ComparisonReport, DiagnosticCorrelation, GridCell, PairwiseReduction, PairwiseTest,
    VariantSummary,
};
pub use config::{ExperimentConfig, ModelKind};
pub use evaluate::{
    collect_predictions, evaluate, read_predictions_csv, score_predictions, write_predictions_csv, CategoryCounts,
    Metrics, MetricsReport, Prediction, REPORT_SCHEMA,
};
pub use probe::{majority_baseline, probe, token_features, ProbeConfig, ProbeResult, ProbeTask, PROBE_TASKS};
pub use stats::{
    average_ranks, error_reduction, mean, pearson, spearman, wilcoxon_signed_rank, WilcoxonResult,
    WILCOXON_EXACT_MAX,
};
pub use train::{
    accuracy, chunk_splits, load_splits, peak_rss_kb, predict_neural, test_strategy, train, EpochRecord,
    TrainedModel,
};
