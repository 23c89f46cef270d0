use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use lemmaforge::corpus::{
    build_ambiguity_index, corpus_diagnostics, load_corpus, read_manifest, LoadOptions, DEFAULT_DIAGNOSTIC_WINDOW,
};
use lemmaforge::edittree::{tree_inventory, write_inventory};
use lemmaforge::harness::{
    chunk_splits, compare_models, evaluate, load_splits, probe, test_strategy, train, ExperimentConfig, MetricsReport,
    ModelKind, ProbeConfig, TrainedModel, PROBE_TASKS,
};
use lemmaforge::{Error, Result};

#[derive(Parser)]
#[command(name = "lemmaforge", version, about = "Train, evaluate and compare lemmatizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, then evaluate it on the test split.
    Train(TrainArgs),
    /// Evaluate a saved model.
    Eval(EvalArgs),
    /// Train and evaluate a grid of variants and seeds.
    Compare(CompareArgs),
    /// Fit linear probes on a frozen neural model.
    Probe(ProbeArgs),
    /// Print corpus diagnostics as JSON.
    Diagnose(DiagnoseArgs),
    /// Induce edit trees from a corpus and write the tree inventory.
    InduceTrees(InduceArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset manifest with [train], [dev] and [test] sections.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override any config field, e.g. `--set max_epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut table = match &self.config {
            Some(path) => toml::Table::try_from(ExperimentConfig::load(path)?),
            None => toml::Table::try_from(ExperimentConfig::default()),
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        for item in &self.overrides {
            let parsed: toml::Table = item
                .parse()
                .or_else(|_| {
                    let (k, v) = item.split_once('=').unwrap_or((item, ""));
                    format!("{} = \"{}\"", k.trim(), v.trim()).parse()
                })
                .map_err(|e: toml::de::Error| Error::Config(format!("bad override `{item}`: {e}")))?;
            table.extend(parsed);
        }
        let mut config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(v) = self.variant {
            config.variant = v;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(d) = &self.data {
            config.data = Some(d.clone());
        }
        config.validate()?;
        Ok(config)
    }

    fn inputs(&self) -> Vec<&Path> {
        self.config.iter().chain(&self.data).map(PathBuf::as_path).collect()
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for the model, report and epoch log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Additional dataset manifests; each is one dataset named by its file
    /// stem.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "plain,sent,sent-lm")]
    variants: Vec<ModelKind>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Output JSON report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Tag tasks to probe; defaults to all standard tasks.
    #[arg(long = "task")]
    tasks: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DIAGNOSTIC_WINDOW)]
    window: usize,
}

#[derive(Args)]
struct InduceArgs {
    #[arg(long)]
    train: PathBuf,
    /// Inventory file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let splits = load_splits(&config)?;
    let mut epoch_log = Vec::new();
    let start = Instant::now();
    let trained = train(&config, &splits, &mut epoch_log);
    write_json(&args.out.join("epoch_log.json"), &epoch_log)?;
    let model = trained?;
    let train_seconds = start.elapsed().as_secs_f64();
    model.save(&args.out.join("model"))?;

    let start = Instant::now();
    let index = build_ambiguity_index(&splits.train);
    let (metrics, predictions) = evaluate(&model, &splits.test, &index, &test_strategy(&config))?;
    let report = MetricsReport::new(
        config,
        metrics,
        predictions,
        epoch_log,
        train_seconds,
        start.elapsed().as_secs_f64(),
    );
    report.write(&args.out)?;
    println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let mut config = args.config.resolve()?;
    if let Some(b) = args.beam_size {
        config.beam_size = b;
    }
    let splits = load_splits(&config)?;
    let model = TrainedModel::load(&args.model)?;
    let start = Instant::now();
    let index = build_ambiguity_index(&splits.train);
    let (metrics, predictions) = evaluate(&model, &splits.test, &index, &test_strategy(&config))?;
    let report = MetricsReport::new(config, metrics, predictions, Vec::new(), 0.0, start.elapsed().as_secs_f64());
    report.write(&args.out)?;
    println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let options = LoadOptions {
        lowercase_forms: config.lowercase_forms,
        fullstop_tag: config.fullstop_tag.clone(),
    };
    let mut datasets = Vec::new();
    if config.data.is_some() || config.train.is_some() {
        let name = config
            .data
            .as_ref()
            .or(config.train.as_ref())
            .and_then(|p| p.file_stem())
            .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned());
        datasets.push((name, load_splits(&config)?));
    }
    for manifest in &args.datasets {
        let base = manifest.parent().unwrap_or(Path::new("."));
        let splits = read_manifest(BufReader::new(File::open(manifest)?), base)?.load(&options)?;
        let name = manifest
            .file_stem()
            .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned());
        datasets.push((name, chunk_splits(splits, config.chunk_len)));
    }
    let report = compare_models(&config, &datasets, &args.variants, &args.seeds)?;
    write_json(&args.out, &report)?;
    for s in &report.summaries {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.2}"));
        println!(
            "{}\t{}\tfull {}\tambiguous {}\tunknown {}",
            s.dataset,
            s.variant,
            fmt(s.accuracy_full),
            fmt(s.accuracy_ambiguous),
            fmt(s.accuracy_unknown)
        );
    }
    Ok(())
}

fn run_probe(args: &ProbeArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let splits = load_splits(&config)?;
    let TrainedModel::Neural(model) = TrainedModel::load(&args.model)? else {
        return Err(Error::Config("probing needs a neural model".into()));
    };
    let tasks: Vec<String> = if args.tasks.is_empty() {
        PROBE_TASKS.iter().map(|t| t.to_string()).collect()
    } else {
        args.tasks.clone()
    };
    let probe_config = ProbeConfig {
        seed: config.seed,
        ..ProbeConfig::default()
    };
    let mut results = Vec::new();
    for task in &tasks {
        match probe(&model, task, &splits, &probe_config)? {
            Some(r) => {
                println!("{}\tprobe {:.2}\tmajority {:.2}", r.task, r.accuracy, r.majority_baseline);
                results.push(r);
            }
            None => eprintln!("note: task {task} not annotated in this corpus; skipped"),
        }
    }
    if let Some(out) = &args.out {
        write_json(out, &results)?;
    }
    Ok(())
}

fn run_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let train = load_corpus(&args.train, &LoadOptions::default())?;
    let diagnostics = corpus_diagnostics(&train, args.window)?;
    println!("{}", serde_json::to_string_pretty(&diagnostics)?);
    Ok(())
}

fn run_induce(args: &InduceArgs) -> Result<()> {
    let train = load_corpus(&args.train, &LoadOptions::default())?;
    let inventory = tree_inventory(&train)?;
    match &args.out {
        Some(path) => write_inventory(BufWriter::new(File::create(path)?), &inventory),
        None => write_inventory(std::io::stdout().lock(), &inventory),
    }
}

fn missing_inputs(command: &Command) -> Option<PathBuf> {
    let paths: Vec<&Path> = match command {
        Command::Train(a) => a.config.inputs(),
        Command::Eval(a) => [a.model.as_path()].into_iter().chain(a.config.inputs()).collect(),
        Command::Compare(a) => a.config.inputs().into_iter().chain(a.datasets.iter().map(PathBuf::as_path)).collect(),
        Command::Probe(a) => [a.model.as_path()].into_iter().chain(a.config.inputs()).collect(),
        Command::Diagnose(a) => vec![a.train.as_path()],
        Command::InduceTrees(a) => vec![a.train.as_path()],
    };
    paths.into_iter().find(|p| !p.exists()).map(Path::to_path_buf)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(path) = missing_inputs(&cli.command) {
        eprintln!("error: no such file or directory: {}", path.display());
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Compare(a) => run_compare(a),
        Command::Probe(a) => run_probe(a),
        Command::Diagnose(a) => run_diagnose(a),
        Command::InduceTrees(a) => run_induce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
