use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::context::AnnealTrigger;
use crate::edittree::TreeClassifierConfig;
use crate::error::{Error, Result};
use crate::numerics::ScheduleVariant;
use crate::transducer::{DecoderInit, ModelConfig, Variant};

/// Which lemmatizer an experiment trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Plain,
    Sent,
    SentLm,
    #[serde(rename = "edittree")]
    EditTree,
}

impl ModelKind {
    pub fn neural(self) -> Option<Variant> {
        match self {
            ModelKind::Plain => Some(Variant::Plain),
            ModelKind::Sent => Some(Variant::Sent),
            ModelKind::SentLm => Some(Variant::SentLm),
            ModelKind::EditTree => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Plain => "plain",
            ModelKind::Sent => "sent",
            ModelKind::SentLm => "sent-lm",
            ModelKind::EditTree => "edittree",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(ModelKind::Plain),
            "sent" => Ok(ModelKind::Sent),
            "sent-lm" => Ok(ModelKind::SentLm),
            "edittree" => Ok(ModelKind::EditTree),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected plain, sent, sent-lm or edittree)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every knob of a run. Serialized verbatim into reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: ModelKind,
    pub hidden: usize,
    pub sent_hidden: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub sent_layers: usize,
    pub dropout: f64,
    pub char_dim: usize,
    pub word_dim: usize,
    pub word_embeddings: bool,
    pub share_lm_heads: bool,
    pub decoder_init: DecoderInit,
    pub lr: f64,
    pub schedule: ScheduleVariant,
    /// Fraction by which the plateau rule cuts the learning rate; 0 keeps
    /// it constant.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping; defaults to the
    /// schedule's own stop rule.
    pub early_stop_patience: Option<usize>,
    /// Stop as soon as dev accuracy reaches this percentage.
    pub target_dev_accuracy: Option<f64>,
    pub clip_norm: f64,
    pub beam_size: usize,
    pub length_normalize: bool,
    pub lm_weight: f64,
    pub anneal_trigger: AnnealTrigger,
    pub lm_vocab_cap: usize,
    pub chunk_len: usize,
    pub lowercase_forms: bool,
    pub fullstop_tag: Option<String>,
    pub tree_epochs: usize,
    pub tree_lr: f64,
    pub tree_frequent_forms: usize,
    pub seed: u64,
    /// Dataset manifest with `[train]`, `[dev]`, `[test]` sections.
    pub data: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let trees = TreeClassifierConfig::default();
        ExperimentConfig {
            variant: ModelKind::SentLm,
            hidden: model.hidden,
            sent_hidden: model.sent_hidden,
            enc_layers: model.enc_layers,
            dec_layers: model.dec_layers,
            sent_layers: model.sent_layers,
            dropout: model.dropout,
            char_dim: model.char_dim,
            word_dim: model.word_dim,
            word_embeddings: model.word_embeddings,
            share_lm_heads: model.share_lm_heads,
            decoder_init: model.decoder_init,
            lr: 1e-3,
            schedule: ScheduleVariant::A,
            lr_decay: ScheduleVariant::FACTOR,
            batch_size: 25,
            max_epochs: 100,
            early_stop_patience: None,
            target_dev_accuracy: None,
            clip_norm: 5.0,
            beam_size: 10,
            length_normalize: false,
            lm_weight: 0.2,
            anneal_trigger: AnnealTrigger::Perplexity,
            lm_vocab_cap: crate::corpus::DEFAULT_LM_VOCAB_CAP,
            chunk_len: crate::corpus::DEFAULT_CHUNK_LEN,
            lowercase_forms: false,
            fullstop_tag: None,
            tree_epochs: trees.epochs,
            tree_lr: trees.lr,
            tree_frequent_forms: trees.frequent_forms,
            seed: 0,
            data: None,
            train: None,
            dev: None,
            test: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file; relative data paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.data, &mut config.train, &mut config.dev, &mut config.test]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.lr_decay) {
            return Err(Error::Config("lr_decay must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.beam_size == 0 || self.chunk_len == 0 {
            return Err(Error::Config("batch_size, beam_size and chunk_len must be positive".into()));
        }
        if !(self.lm_weight >= 0.0) {
            return Err(Error::Config("lm_weight must be non-negative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.variant.neural().is_some() {
            self.model_config()?.validate()?;
        }
        Ok(())
    }

    /// Architecture of the neural variants.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let variant = self
            .variant
            .neural()
            .ok_or_else(|| Error::Config("edittree has no neural architecture".into()))?;
        Ok(ModelConfig {
            variant,
            char_dim: self.char_dim,
            hidden: self.hidden,
            sent_hidden: self.sent_hidden,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            sent_layers: self.sent_layers,
            word_embeddings: self.word_embeddings,
            word_dim: self.word_dim,
            share_lm_heads: self.share_lm_heads,
            dropout: self.dropout,
            decoder_init: self.decoder_init,
        })
    }

    pub fn tree_config(&self) -> TreeClassifierConfig {
        TreeClassifierConfig {
            epochs: self.tree_epochs,
            lr: self.tree_lr,
            frequent_forms: self.tree_frequent_forms,
            seed: self.seed,
            ..TreeClassifierConfig::default()
        }
    }

    pub fn stop_patience(&self) -> usize {
        self.early_stop_patience.unwrap_or_else(|| self.schedule.stop_patience())
    }
}
