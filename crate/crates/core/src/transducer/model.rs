use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{BiGruParams, GruParams, ParamId, ParameterSet, Tensor};

/// Which neural lemmatizer to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Encoder-decoder over the token's characters only.
    Plain,
    /// Decoder additionally conditioned on sentence context.
    Sent,
    /// `Sent` trained with the auxiliary bidirectional word LM loss.
    SentLm,
}

impl Variant {
    pub fn uses_context(self) -> bool {
        !matches!(self, Variant::Plain)
    }

    pub fn uses_lm(self) -> bool {
        matches!(self, Variant::SentLm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Sent => "sent",
            Variant::SentLm => "sent-lm",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderInit {
    #[default]
    Zero,
    /// `tanh(W [final_fwd; final_bwd] + b)` per decoder layer.
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Character embedding size, shared by encoder and decoder tables.
    pub char_dim: usize,
    /// Recurrent size per direction of the encoder and of the decoder.
    pub hidden: usize,
    /// Sentence RNN size per direction.
    pub sent_hidden: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub sent_layers: usize,
    pub word_embeddings: bool,
    pub word_dim: usize,
    pub share_lm_heads: bool,
    pub dropout: f64,
    pub decoder_init: DecoderInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::SentLm,
            char_dim: 64,
            hidden: 150,
            sent_hidden: 150,
            enc_layers: 2,
            dec_layers: 2,
            sent_layers: 1,
            word_embeddings: false,
            word_dim: 64,
            share_lm_heads: true,
            dropout: 0.25,
            decoder_init: DecoderInit::Zero,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("char_dim", self.char_dim),
            ("hidden", self.hidden),
            ("sent_hidden", self.sent_hidden),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("sent_layers", self.sent_layers),
            ("word_dim", self.word_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Width of `s_t` fed to the decoder (0 for `Plain`).
    pub fn context_width(&self) -> usize {
        if self.variant.uses_context() {
            2 * self.sent_hidden
        } else {
            0
        }
    }

    /// Width of the word features `w_t`.
    pub fn word_feature_width(&self) -> usize {
        2 * self.hidden + if self.word_embeddings { self.word_dim } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Applied to the previous top decoder state.
    pub query: ParamId,
    /// Applied to every encoder state.
    pub key: ParamId,
    /// Scoring vector, stored as a `1 × A` matrix.
    pub score: ParamId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmHeads {
    pub fwd_w: ParamId,
    pub fwd_b: ParamId,
    pub bwd_w: ParamId,
    pub bwd_b: ParamId,
}

impl LmHeads {
    pub fn shared(&self) -> bool {
        self.fwd_w == self.bwd_w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextLayout {
    pub rnn: Vec<BiGruParams>,
    pub word_emb: Option<ParamId>,
    pub lm: Option<LmHeads>,
}

/// Handles to every tensor of a lemmatizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub enc_emb: ParamId,
    pub encoder: Vec<BiGruParams>,
    pub dec_emb: ParamId,
    pub decoder: Vec<GruParams>,
    pub attention: AttentionParams,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub dec_init: Vec<(ParamId, ParamId)>,
    pub context: Option<ContextLayout>,
}

/// A neural lemmatizer: configuration, vocabularies and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemmatizer {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParameterSet,
    pub layout: Layout,
}

impl Lemmatizer {
    /// Create with fan-in uniform weights and zero biases. Parameters are
    /// drawn in a fixed order with the LM heads last, so `Sent` and
    /// `Sent-LM` built from one seed share every common tensor.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParameterSet::new();
        let (h, d) = (config.hidden, config.char_dim);

        let enc_emb = ps.insert(
            "enc.emb",
            Tensor::fan_in_uniform(vec![vocab.chars.len(), d], &mut rng),
        )?;
        let mut encoder = Vec::with_capacity(config.enc_layers);
        for l in 0..config.enc_layers {
            let input = if l == 0 { d } else { 2 * h };
            encoder.push(BiGruParams::register(&mut ps, &format!("enc.l{l}"), input, h, &mut rng)?);
        }

        let dec_emb = ps.insert(
            "dec.emb",
            Tensor::fan_in_uniform(vec![vocab.lemma_chars.len(), d], &mut rng),
        )?;
        let mut decoder = Vec::with_capacity(config.dec_layers);
        for l in 0..config.dec_layers {
            let input = if l == 0 {
                d + 2 * h + config.context_width()
            } else {
                h
            };
            decoder.push(GruParams::register(&mut ps, &format!("dec.l{l}"), input, h, &mut rng)?);
        }

        let attention = AttentionParams {
            query: ps.insert("att.query", Tensor::fan_in_uniform(vec![h, h], &mut rng))?,
            key: ps.insert("att.key", Tensor::fan_in_uniform(vec![h, 2 * h], &mut rng))?,
            score: ps.insert("att.score", Tensor::fan_in_uniform(vec![1, h], &mut rng))?,
        };
        let out_w = ps.insert(
            "out.w",
            Tensor::fan_in_uniform(vec![vocab.lemma_chars.len(), h], &mut rng),
        )?;
        let out_b = ps.insert("out.b", Tensor::zeros(vec![vocab.lemma_chars.len()]))?;

        let mut dec_init = Vec::new();
        if config.decoder_init == DecoderInit::Learned {
            for l in 0..config.dec_layers {
                dec_init.push((
                    ps.insert(
                        &format!("dec.init{l}.w"),
                        Tensor::fan_in_uniform(vec![h, 2 * h], &mut rng),
                    )?,
                    ps.insert(&format!("dec.init{l}.b"), Tensor::zeros(vec![h]))?,
                ));
            }
        }

        let context = if config.variant.uses_context() {
            let s = config.sent_hidden;
            let mut rnn = Vec::with_capacity(config.sent_layers);
            for l in 0..config.sent_layers {
                let input = if l == 0 { config.word_feature_width() } else { 2 * s };
                rnn.push(BiGruParams::register(&mut ps, &format!("sent.l{l}"), input, s, &mut rng)?);
            }
            let word_emb = if config.word_embeddings {
                Some(ps.insert(
                    "word.emb",
                    Tensor::fan_in_uniform(vec![vocab.words.len(), config.word_dim], &mut rng),
                )?)
            } else {
                None
            };
            let lm = if config.variant.uses_lm() {
                let v = vocab.lm_words.len();
                let fwd_w = ps.insert("lm.fwd.w", Tensor::fan_in_uniform(vec![v, s], &mut rng))?;
                let fwd_b = ps.insert("lm.fwd.b", Tensor::zeros(vec![v]))?;
                let (bwd_w, bwd_b) = if config.share_lm_heads {
                    (ps.alias("lm.bwd.w", "lm.fwd.w")?, ps.alias("lm.bwd.b", "lm.fwd.b")?)
                } else {
                    (
                        ps.insert("lm.bwd.w", Tensor::fan_in_uniform(vec![v, s], &mut rng))?,
                        ps.insert("lm.bwd.b", Tensor::zeros(vec![v]))?,
                    )
                };
                Some(LmHeads {
                    fwd_w,
                    fwd_b,
                    bwd_w,
                    bwd_b,
                })
            } else {
                None
            };
            Some(ContextLayout { rnn, word_emb, lm })
        } else {
            None
        };

        let layout = Layout {
            enc_emb,
            encoder,
            dec_emb,
            decoder,
            attention,
            out_w,
            out_b,
            dec_init,
            context,
        };
        Ok(Lemmatizer {
            config,
            vocab,
            params: ps,
            layout,
        })
    }

    /// Replace the parameters with `params`, which must match this model's
    /// names, shapes and sharing exactly.
    pub fn load_params(&mut self, params: ParameterSet) -> Result<()> {
        let ours: Vec<(&str, ParamId)> = self.params.names().collect();
        let theirs: Vec<(&str, ParamId)> = params.names().collect();
        if ours != theirs {
            return Err(Error::Format(
                "checkpoint parameters do not match the model layout".into(),
            ));
        }
        for (name, id) in ours {
            if self.params.tensor(id).shape() != params.tensor(id).shape() {
                return Err(Error::Format(format!("shape mismatch for `{name}`")));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Write `model.json` (configuration and vocabularies) and
    /// `params.ckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = ModelMeta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("model.json"))?), &meta)?;
        self.params
            .write_checkpoint(BufWriter::new(File::create(dir.join("params.ckpt"))?))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ModelMeta =
            serde_json::from_reader(BufReader::new(File::open(dir.join("model.json"))?))?;
        let params =
            ParameterSet::read_checkpoint(BufReader::new(File::open(dir.join("params.ckpt"))?))?;
        let mut model = Lemmatizer::new(meta.config, meta.vocab, 0)?;
        model.load_params(params)?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    config: ModelConfig,
    vocab: Vocabulary,
}
