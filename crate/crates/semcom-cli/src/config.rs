//! Run configuration: one TOML file with sections for the corpus pipeline,
//! model architecture, training, finetuning, and evaluation. Every field
//! has a default, so a minimal config only names the corpus and output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use semcom_core::corpus::Truncation;
use semcom_core::model::ModelConfig;
use semcom_core::nn::OptimizerKind;
use semcom_core::trainer::TrainConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub finetune: FinetuneSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub raw_path: PathBuf,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    pub test_sentences: usize,
    pub train_sentences: usize,
    pub val_sentences: usize,
    #[serde(default = "default_sentence_len")]
    pub sentence_len: usize,
    #[serde(default)]
    pub prune_empty: bool,
    #[serde(default)]
    pub truncation: TruncationChoice,
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TruncationChoice {
    #[default]
    Head,
    Tail,
}

impl From<TruncationChoice> for Truncation {
    fn from(c: TruncationChoice) -> Truncation {
        match c {
            TruncationChoice::Head => Truncation::Head,
            TruncationChoice::Tail => Truncation::Tail,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_symbols_per_word")]
    pub symbols_per_word: usize,
    #[serde(default = "default_attention_heads")]
    pub attention_heads: usize,
    #[serde(default = "default_ffn_hidden")]
    pub ffn_hidden: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub awgn_bias_variance: Option<f64>,
    #[serde(default)]
    pub channel_hidden: Option<usize>,
    #[serde(default)]
    pub positional_encoding: bool,
    #[serde(default = "default_true")]
    pub causal_decoder: bool,
    #[serde(default)]
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

impl ModelSection {
    /// Assembles the full architecture config once the data pipeline has
    /// fixed the vocabulary size and sentence length.
    pub fn to_model_config(&self, vocab_size: usize, sentence_len: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            sentence_len,
            embed_dim: self.embed_dim,
            symbols_per_word: self.symbols_per_word,
            attention_heads: self.attention_heads,
            ffn_hidden: self.ffn_hidden,
            sigma: self.sigma,
            awgn_bias_variance: self.awgn_bias_variance,
            channel_hidden: self.channel_hidden,
            positional_encoding: self.positional_encoding,
            causal_decoder: self.causal_decoder,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr_reduce_factor")]
    pub lr_reduce_factor: f64,
    #[serde(default = "default_lr_patience")]
    pub lr_patience: usize,
    #[serde(default = "default_early_stop_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub optimizer: OptimizerChoice,
    #[serde(default)]
    pub grad_clip_norm: Option<f64>,
    #[serde(default)]
    pub resample_noise: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    #[default]
    Adam,
    SgdMomentum,
    Rmsprop,
}

impl From<OptimizerChoice> for OptimizerKind {
    fn from(c: OptimizerChoice) -> OptimizerKind {
        match c {
            OptimizerChoice::Adam => OptimizerKind::default(),
            OptimizerChoice::SgdMomentum => OptimizerKind::sgd_momentum(),
            OptimizerChoice::Rmsprop => OptimizerKind::rms_prop(),
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64, checkpoint: Option<PathBuf>) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            lr_reduce_factor: self.lr_reduce_factor,
            lr_patience: self.lr_patience,
            early_stop_patience: self.early_stop_patience,
            seed,
            checkpoint_path: checkpoint,
            optimizer: self.optimizer.into(),
            grad_clip_norm: self.grad_clip_norm,
            resample_noise: self.resample_noise,
        }
    }
}

/// Finetuning inherits the training section except for its own learning
/// rate and epoch budget.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    #[serde(default = "default_finetune_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_finetune_max_epochs")]
    pub max_epochs: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_u_grid")]
    pub u_grid: Vec<usize>,
    #[serde(default = "default_eta_min")]
    pub eta_min: f32,
    #[serde(default = "default_slots")]
    pub slots: usize,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_embedder_dim")]
    pub embedder_dim: usize,
    #[serde(default)]
    pub embedder_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

fn default_min_count() -> usize {
    1
}
fn default_sentence_len() -> usize {
    30
}
fn default_symbols_per_word() -> usize {
    8
}
fn default_attention_heads() -> usize {
    10
}
fn default_ffn_hidden() -> usize {
    32
}
fn default_embed_dim() -> usize {
    64
}
fn default_sigma() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_learning_rate() -> f64 {
    2e-4
}
fn default_max_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    50
}
fn default_lr_reduce_factor() -> f64 {
    0.1
}
fn default_lr_patience() -> usize {
    5
}
fn default_early_stop_patience() -> usize {
    10
}
fn default_finetune_learning_rate() -> f64 {
    1e-4
}
fn default_finetune_max_epochs() -> usize {
    50
}
fn default_u_grid() -> Vec<usize> {
    vec![0, 1, 5, 10, 50]
}
fn default_eta_min() -> f32 {
    0.1
}
fn default_slots() -> usize {
    200
}
fn default_power() -> f64 {
    10.0
}
fn default_embedder_dim() -> usize {
    256
}

/// A loaded config plus the raw bytes it came from (hashed into manifests).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw_bytes: Vec<u8>,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let raw_bytes =
        fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let text = String::from_utf8(raw_bytes.clone())
        .with_context(|| format!("config {} is not utf-8", path.display()))?;
    let config: RunConfig =
        toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))?;
    if config.corpus.min_count == 0 {
        bail!("corpus.min_count must be at least 1");
    }
    if config.corpus.sentence_len == 0 {
        bail!("corpus.sentence_len must be at least 1");
    }
    Ok(LoadedConfig { config, raw_bytes })
}
