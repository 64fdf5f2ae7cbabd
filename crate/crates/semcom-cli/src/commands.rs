//! Subcommand implementations: prep, train, finetune, sweep, plot.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use semcom_core::corpus::{
    encode_with, fit_tokenizer, load_document, load_sentences, prune_empty, save_sentences,
    split_dataset, standardize, trim_vocabulary, BatchStream, Tokenizer, VectorizedDataset,
};
use semcom_core::evaluator::{evaluate_sweep, write_sweep_csv, write_trace_csv, HashProjectionEmbedder};
use semcom_core::exec::ExecMode;
use semcom_core::model::{build_model, DeepScModel};
use semcom_core::trainer::{finetune, train, TrainConfig, TrainOutcome};

use crate::config::LoadedConfig;
use crate::manifest::Manifest;
use crate::plot::{plot_csv, PlotKind};

pub const CLEAN_FILE: &str = "clean.txt";
pub const TRIMMED_FILE: &str = "trimmed.txt";
pub const TOKENIZER_FILE: &str = "tokenizer.tsv";
pub const BEST_CHECKPOINT: &str = "checkpoint-best.ckpt";
pub const FINAL_CHECKPOINT: &str = "checkpoint-final.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const TRAIN_LOG: &str = "train.log";
pub const FINETUNE_BEST: &str = "finetune-best.ckpt";
pub const FINETUNE_FINAL: &str = "finetune-final.ckpt";
pub const FINETUNE_HISTORY: &str = "finetune-history.csv";
pub const FINETUNE_LOG: &str = "finetune.log";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TRACE_FILE: &str = "sweep-trace.csv";

fn split_file(name: &str) -> String {
    format!("{name}.txt")
}

fn ids_file(name: &str) -> String {
    format!("{name}.ids")
}

/// Refuses to clobber existing outputs unless --force was given.
fn guard_outputs(out_dir: &Path, names: &[&str], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for name in names {
        let path = out_dir.join(name);
        if path.exists() {
            bail!(
                "output {} already exists; rerun with --force to overwrite",
                path.display()
            );
        }
    }
    Ok(())
}

pub fn cmd_prep(loaded: &LoadedConfig, out_dir: &Path, seed: u64, force: bool) -> Result<()> {
    let cfg = &loaded.config;
    let mut outputs = vec![CLEAN_FILE.to_string(), TRIMMED_FILE.to_string(), TOKENIZER_FILE.to_string()];
    for name in ["test", "train", "val"] {
        outputs.push(split_file(name));
        outputs.push(ids_file(name));
    }
    let output_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    guard_outputs(out_dir, &output_refs, force)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;

    let document = load_document(&cfg.corpus.raw_path)?;
    let mut clean = standardize(&document);
    if cfg.corpus.prune_empty {
        clean = prune_empty(&clean);
    }
    save_sentences(&clean, out_dir.join(CLEAN_FILE))?;

    let (vocabulary, trimmed) = trim_vocabulary(&clean, cfg.corpus.min_count);
    save_sentences(&trimmed, out_dir.join(TRIMMED_FILE))?;

    let (test, train_split, val) = split_dataset(
        &trimmed,
        cfg.corpus.test_sentences,
        cfg.corpus.train_sentences,
        cfg.corpus.val_sentences,
    )?;
    // The tokenizer is fit over the overall dataset: every retained split.
    let overall = semcom_core::corpus::CleanCorpus {
        sentences: test
            .sentences
            .iter()
            .chain(&train_split.sentences)
            .chain(&val.sentences)
            .cloned()
            .collect(),
    };
    let tokenizer = fit_tokenizer(&overall)?;
    tokenizer.save(out_dir.join(TOKENIZER_FILE))?;

    let mut manifest = Manifest::new("prep", seed, &loaded.raw_bytes);
    manifest.count("clean_sentences", clean.len() as u64);
    manifest.count("retained_words", vocabulary.words.len() as u64);
    manifest.count("vocab_size", tokenizer.vocab_size() as u64);
    for (name, split) in [("test", &test), ("train", &train_split), ("val", &val)] {
        save_sentences(split, out_dir.join(split_file(name)))?;
        let data = encode_with(
            &tokenizer,
            split,
            cfg.corpus.sentence_len,
            cfg.corpus.truncation.into(),
        )?;
        data.save(out_dir.join(ids_file(name)))?;
        manifest.count(&format!("{name}_rows"), data.rows() as u64);
    }
    for name in &outputs {
        manifest.artifact(out_dir, &out_dir.join(name))?;
    }
    manifest.write(out_dir)?;
    println!(
        "prep: {} sentences cleaned, vocab_size {}, splits {}/{}/{} written to {}",
        clean.len(),
        tokenizer.vocab_size(),
        cfg.corpus.test_sentences,
        cfg.corpus.train_sentences,
        cfg.corpus.val_sentences,
        out_dir.display()
    );
    Ok(())
}

fn load_artifacts(out_dir: &Path) -> Result<(Tokenizer, VectorizedDataset, VectorizedDataset)> {
    let tokenizer = Tokenizer::load(out_dir.join(TOKENIZER_FILE))?;
    let train_data = VectorizedDataset::load(out_dir.join(ids_file("train")))?;
    let val_data = VectorizedDataset::load(out_dir.join(ids_file("val")))?;
    Ok((tokenizer, train_data, val_data))
}

fn run_training(
    loaded: &LoadedConfig,
    out_dir: &Path,
    seed: u64,
    force: bool,
    finetuning: bool,
) -> Result<()> {
    let cfg = &loaded.config;
    let (best_name, final_name, history_name, log_name, command) = if finetuning {
        (FINETUNE_BEST, FINETUNE_FINAL, FINETUNE_HISTORY, FINETUNE_LOG, "finetune")
    } else {
        (BEST_CHECKPOINT, FINAL_CHECKPOINT, HISTORY_FILE, TRAIN_LOG, "train")
    };
    guard_outputs(out_dir, &[best_name, final_name, history_name, log_name], force)?;

    let (tokenizer, train_data, val_data) = load_artifacts(out_dir)?;
    let model = if finetuning {
        let source = out_dir.join(BEST_CHECKPOINT);
        if !source.exists() {
            bail!(
                "finetune needs a trained checkpoint at {}; run `semcom train` first",
                source.display()
            );
        }
        let model = DeepScModel::<f32>::load(&source)?;
        model.ensure_compatible(tokenizer.vocab_size(), train_data.sentence_len())?;
        model
    } else {
        let model_cfg = cfg
            .model
            .to_model_config(tokenizer.vocab_size(), train_data.sentence_len());
        build_model::<f32>(&model_cfg, seed)?
    };

    let mut train_cfg: TrainConfig = cfg
        .train
        .to_train_config(seed, Some(out_dir.join(best_name)));
    if finetuning {
        train_cfg.learning_rate = cfg.finetune.learning_rate;
        train_cfg.max_epochs = cfg.finetune.max_epochs;
    }

    let train_stream = BatchStream::new(&train_data, train_cfg.batch_size, seed)?;
    let val_stream = BatchStream::new(&val_data, train_cfg.batch_size.min(val_data.rows()), seed ^ 1)?;

    let mut log = fs::File::create(out_dir.join(log_name))
        .with_context(|| format!("cannot create {log_name}"))?;
    let outcome: TrainOutcome = if finetuning {
        finetune(model, &train_stream, &val_stream, &train_cfg, Some(&mut log))?
    } else {
        train(model, &train_stream, &val_stream, &train_cfg, Some(&mut log))?
    };

    outcome.model.save(out_dir.join(best_name))?;
    outcome.final_model.save(out_dir.join(final_name))?;
    outcome.history.save_csv(out_dir.join(history_name))?;

    let mut manifest = Manifest::new(command, seed, &loaded.raw_bytes);
    manifest.count("epochs", outcome.history.epochs.len() as u64);
    for name in [best_name, final_name, history_name, log_name] {
        manifest.artifact(out_dir, &out_dir.join(name))?;
    }
    manifest.write(out_dir)?;
    let last = outcome.history.epochs.last();
    println!(
        "{command}: {} epochs, final val_loss {:.6}, best checkpoint {}",
        outcome.history.epochs.len(),
        last.map(|e| e.val_loss).unwrap_or(f64::NAN),
        out_dir.join(best_name).display()
    );
    Ok(())
}

pub fn cmd_train(loaded: &LoadedConfig, out_dir: &Path, seed: u64, force: bool) -> Result<()> {
    run_training(loaded, out_dir, seed, force, false)
}

pub fn cmd_finetune(loaded: &LoadedConfig, out_dir: &Path, seed: u64, force: bool) -> Result<()> {
    run_training(loaded, out_dir, seed, force, true)
}

pub fn cmd_sweep(
    loaded: &LoadedConfig,
    out_dir: &Path,
    seed: u64,
    force: bool,
    checkpoint: Option<PathBuf>,
    trace: bool,
    mode: ExecMode,
) -> Result<()> {
    let cfg = &loaded.config;
    if cfg.eval.u_grid.is_empty() {
        bail!("eval.u_grid must list at least one interferer count");
    }
    let mut outputs = vec![SWEEP_FILE];
    if trace {
        outputs.push(TRACE_FILE);
    }
    guard_outputs(out_dir, &outputs, force)?;

    let tokenizer = Tokenizer::load(out_dir.join(TOKENIZER_FILE))?;
    let test_data = VectorizedDataset::load(out_dir.join(ids_file("test")))?;
    let references = load_sentences(out_dir.join(split_file("test")))?.sentences;
    let checkpoint = checkpoint.unwrap_or_else(|| out_dir.join(BEST_CHECKPOINT));
    if !checkpoint.exists() {
        bail!(
            "sweep needs a checkpoint at {}; run `semcom train` first",
            checkpoint.display()
        );
    }
    let model = DeepScModel::<f32>::load(&checkpoint)?;
    model.ensure_compatible(tokenizer.vocab_size(), test_data.sentence_len())?;

    let embedder = HashProjectionEmbedder::new(cfg.eval.embedder_dim, cfg.eval.embedder_seed);
    let (sweep, traces) = evaluate_sweep(
        &model,
        &tokenizer,
        &test_data,
        &references,
        &cfg.eval.u_grid,
        cfg.eval.eta_min,
        cfg.eval.slots,
        seed,
        cfg.eval.power,
        &embedder,
        mode,
    )?;
    write_sweep_csv(&sweep, seed, out_dir.join(SWEEP_FILE))?;
    if trace {
        write_trace_csv(&traces, out_dir.join(TRACE_FILE))?;
    }

    let mut manifest = Manifest::new("sweep", seed, &loaded.raw_bytes);
    manifest.count("u_points", sweep.len() as u64);
    manifest.count("slots", cfg.eval.slots as u64);
    for name in &outputs {
        manifest.artifact(out_dir, &out_dir.join(name))?;
    }
    manifest.write(out_dir)?;
    for (interferers, estimate) in &sweep {
        println!(
            "sweep: U={interferers:>4}  p({})={:.4}  over {} slots",
            estimate.eta_min, estimate.p, estimate.slots
        );
    }
    Ok(())
}

pub fn cmd_plot(input: &Path, output: &Path, metric: PlotKind, force: bool) -> Result<()> {
    if output.exists() && !force {
        bail!(
            "output {} already exists; rerun with --force to overwrite",
            output.display()
        );
    }
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    plot_csv(input, output, metric)?;
    println!("plot: wrote {}", output.display());
    Ok(())
}
