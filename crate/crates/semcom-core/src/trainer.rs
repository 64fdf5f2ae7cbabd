//! Supervised training of the transceiver as a per-position classification
//! problem: categorical cross-entropy, a pluggable first-order optimizer,
//! plateau-driven learning-rate reduction, early stopping, and
//! best-validation checkpointing. Finetuning runs the same loop at a lower
//! default learning rate; the frozen noise layer never trains either way.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::corpus::BatchStream;
use crate::error::{Error, Result};
use crate::model::{DeepScModel, NoiseMode};
use crate::nn::{argmax_accuracy, clip_global_norm, softmax_cross_entropy, Optimizer, OptimizerKind};
use crate::rng::{derive_rng, DOMAIN_DROPOUT};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr_reduce_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub grad_clip_norm: Option<f64>,
    /// Redraw the channel noise every batch instead of using the frozen
    /// bias realization.
    #[serde(default)]
    pub resample_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            max_epochs: 100,
            batch_size: 50,
            lr_reduce_factor: 0.1,
            lr_patience: 5,
            early_stop_patience: 10,
            seed: 0,
            checkpoint_path: None,
            optimizer: OptimizerKind::default(),
            grad_clip_norm: None,
            resample_noise: false,
        }
    }
}

impl TrainConfig {
    /// Finetuning defaults: initial learning rate 1e-4, 50 epochs.
    pub fn finetune_defaults() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            max_epochs: 50,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_reduce_factor > 0.0 && self.lr_reduce_factor < 1.0) {
            return Err(Error::InvalidModelConfig {
                reason: "lr_reduce_factor must lie in (0, 1)".into(),
            });
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::InvalidModelConfig {
                reason: "callback patiences must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(None, |best, v| Some(best.map_or(v, |b: f64| b.min(v))))
    }

    /// CSV with columns epoch, train_loss, train_acc, val_loss, val_acc, lr.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.lr
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut epochs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::DatasetFormat {
                    reason: format!("history row {i} has {} fields", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::DatasetFormat {
                    reason: format!("bad number {s:?} in history row {i}"),
                })
            };
            epochs.push(EpochRecord {
                epoch: parse(fields[0])? as usize,
                train_loss: parse(fields[1])?,
                train_acc: parse(fields[2])?,
                val_loss: parse(fields[3])?,
                val_acc: parse(fields[4])?,
                lr: parse(fields[5])?,
            });
        }
        Ok(TrainHistory { epochs })
    }
}

/// Plateau bookkeeping for learning-rate reduction and early stopping.
/// Improvement means any strict decrease of the monitored validation loss.
#[derive(Debug, Clone)]
pub struct CallbackState {
    best: f64,
    lr: f64,
    factor: f64,
    lr_patience: usize,
    stop_patience: usize,
    lr_wait: usize,
    stop_wait: usize,
    reductions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallbackDecision {
    pub improved: bool,
    pub reduced: bool,
    pub stop: bool,
    /// Learning rate in effect from the next epoch on.
    pub lr: f64,
}

impl CallbackState {
    pub fn new(initial_lr: f64, factor: f64, lr_patience: usize, stop_patience: usize) -> Self {
        CallbackState {
            best: f64::INFINITY,
            lr: initial_lr,
            factor,
            lr_patience,
            stop_patience,
            lr_wait: 0,
            stop_wait: 0,
            reductions: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Feeds the end-of-epoch validation loss and returns what to do next.
    pub fn observe(&mut self, val_loss: f64) -> CallbackDecision {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.lr_wait = 0;
            self.stop_wait = 0;
        } else {
            self.lr_wait += 1;
            self.stop_wait += 1;
        }
        let mut reduced = false;
        if self.lr_wait >= self.lr_patience {
            self.lr *= self.factor;
            self.lr_wait = 0;
            self.reductions += 1;
            reduced = true;
        }
        let stop = self.stop_wait >= self.stop_patience;
        CallbackDecision {
            improved,
            reduced,
            stop,
            lr: self.lr,
        }
    }
}

/// Everything a finished run returns: the best-validation model, the
/// final-epoch model, and the per-epoch history.
pub struct TrainOutcome {
    pub model: DeepScModel<f32>,
    pub final_model: DeepScModel<f32>,
    pub history: TrainHistory,
}

/// Per-position classification accuracy between a probability tensor and a
/// one-hot label tensor; every position counts, padding included. Argmax
/// ties resolve to the lowest index.
pub fn accuracy(predictions: &Array3<f32>, labels: &Array3<f32>) -> f64 {
    assert_eq!(predictions.shape(), labels.shape(), "shape mismatch");
    let (b, l, v) = predictions.dim();
    let pred = predictions
        .to_owned()
        .into_shape_with_order((b * l, v))
        .expect("contiguous");
    let targets: Vec<usize> = labels
        .to_owned()
        .into_shape_with_order((b * l, v))
        .expect("contiguous")
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect();
    argmax_accuracy(&pred, &targets)
}

fn targets_of(inputs: &Array2<usize>) -> Vec<usize> {
    inputs.iter().copied().collect()
}

fn eval_stream(model: &DeepScModel<f32>, stream: &BatchStream<'_>, epoch: u64) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut acc_sum = 0.0;
    let mut n = 0usize;
    for batch in stream.batches(epoch) {
        let (logits, _) = model.forward_train(&batch.inputs, NoiseMode::FrozenBias, None)?;
        let (b, l, v) = logits.dim();
        let flat = logits
            .into_shape_with_order((b * l, v))
            .expect("contiguous");
        let targets = targets_of(&batch.inputs);
        let (loss, _) = softmax_cross_entropy(&flat, &targets);
        let mut probs = flat;
        crate::nn::softmax_rows(&mut probs);
        loss_sum += loss;
        acc_sum += argmax_accuracy(&probs, &targets);
        n += 1;
    }
    Ok((loss_sum / n as f64, acc_sum / n as f64))
}

/// Trains until `max_epochs` or early stop. Minimizes mean categorical
/// cross-entropy over all B·L positions per batch, evaluates the validation
/// stream after every epoch, reduces the learning rate on plateau, early
/// stops on longer plateau, and returns the best-validation parameters
/// (checkpointed to `cfg.checkpoint_path` when set).
pub fn train(
    model: DeepScModel<f32>,
    train_stream: &BatchStream<'_>,
    val_stream: &BatchStream<'_>,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn std::io::Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = model;
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut callbacks = CallbackState::new(
        cfg.learning_rate,
        cfg.lr_reduce_factor,
        cfg.lr_patience,
        cfg.early_stop_patience,
    );
    let mut history = TrainHistory::default();
    let mut best_params: Vec<f32> = model.param_vector();
    let mut best_val = f64::INFINITY;

    for epoch in 1..=cfg.max_epochs {
        let lr = callbacks.lr();
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        let mut steps = 0usize;
        for (step, batch) in train_stream.batches(epoch as u64).enumerate() {
            let noise = if cfg.resample_noise {
                NoiseMode::Resampled {
                    seed: cfg.seed ^ (epoch as u64) << 20 ^ step as u64,
                }
            } else {
                NoiseMode::FrozenBias
            };
            let mut dropout_rng = derive_rng(cfg.seed, DOMAIN_DROPOUT, epoch as u64, step as u64);
            let (logits, cache) =
                model.forward_train(&batch.inputs, noise, Some(&mut dropout_rng))?;
            let (b, l, v) = logits.dim();
            let flat = logits
                .into_shape_with_order((b * l, v))
                .expect("contiguous");
            let targets = targets_of(&batch.inputs);
            let (loss, grad_flat) = softmax_cross_entropy(&flat, &targets);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let mut probs = flat;
            crate::nn::softmax_rows(&mut probs);
            acc_sum += argmax_accuracy(&probs, &targets);
            loss_sum += loss;
            steps += 1;

            let grad = grad_flat
                .into_shape_with_order((b, l, v))
                .expect("contiguous");
            model.zero_grads();
            model.backward(&cache, &grad);
            let mut params = model.collect_params();
            if let Some(max_norm) = cfg.grad_clip_norm {
                clip_global_norm(&mut params, max_norm);
            }
            optimizer.step(&mut params, lr);
        }
        let (val_loss, val_acc) = eval_stream(&model, val_stream, epoch as u64)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: 0 });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            train_acc: acc_sum / steps as f64,
            val_loss,
            val_acc,
            lr,
        };
        if let Some(w) = progress.as_deref_mut() {
            writeln!(
                w,
                "epoch {} train_loss {:.6} train_acc {:.4} val_loss {:.6} val_acc {:.4} lr {:e}",
                record.epoch, record.train_loss, record.train_acc, record.val_loss, record.val_acc, record.lr
            )
            .map_err(|e| Error::io("<progress log>", e))?;
        }
        history.epochs.push(record);

        let decision = callbacks.observe(val_loss);
        if decision.improved {
            best_val = val_loss;
            best_params = model.param_vector();
            if let Some(path) = &cfg.checkpoint_path {
                let mut best = model.clone();
                best.set_param_vector(&best_params);
                best.save(path)?;
            }
        }
        if decision.stop {
            break;
        }
    }

    let final_model = model.clone();
    let mut best_model = model;
    best_model.set_param_vector(&best_params);
    debug_assert!(best_val.is_finite() || history.epochs.is_empty());
    Ok(TrainOutcome {
        model: best_model,
        final_model,
        history,
    })
}

/// Resumed training of an already trained model: the same loop with every
/// parameter group trainable except the frozen noise layer, at the lower
/// finetuning learning rate by default.
pub fn finetune(
    model: DeepScModel<f32>,
    train_stream: &BatchStream<'_>,
    val_stream: &BatchStream<'_>,
    cfg: &TrainConfig,
    progress: Option<&mut dyn std::io::Write>,
) -> Result<TrainOutcome> {
    train(model, train_stream, val_stream, cfg, progress)
}
