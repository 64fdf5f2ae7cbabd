//! Testing harness: greedy sentence recovery through a model view,
//! semantic similarity via a pluggable sentence embedder with cosine
//! scoring, and the Monte Carlo estimate of the probability of semantic
//! similarity p(η_min) swept over interferer counts.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2};

use crate::channel::{inject_rfi, total_rfi, RfiSpec};
use crate::corpus::{Tokenizer, VectorizedDataset};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::{DeepScModel, ForwardModel};
use crate::rng::{derive_rng, fnv1a64, DOMAIN_EMBEDDER};

/// Deterministic sentence-to-vector map with a fixed output dimension.
pub trait SentenceEmbedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, sentence: &str) -> Vec<f32>;
}

/// CI-friendly stub embedder: each word hashes to a fixed random Gaussian
/// direction and a sentence embeds as the sum of its word vectors (bag of
/// words). Identical sentences embed identically; unrelated sentences score
/// near zero; an empty sentence embeds to the zero vector.
pub struct HashProjectionEmbedder {
    dim: usize,
    seed: u64,
}

impl HashProjectionEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1);
        HashProjectionEmbedder { dim, seed }
    }
}

impl Default for HashProjectionEmbedder {
    fn default() -> Self {
        HashProjectionEmbedder::new(256, 0)
    }
}

impl SentenceEmbedder for HashProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, sentence: &str) -> Vec<f32> {
        let mut acc = vec![0.0f32; self.dim];
        for word in sentence.split_whitespace() {
            let mut rng = derive_rng(self.seed, DOMAIN_EMBEDDER, fnv1a64(word.as_bytes()), 0);
            for slot in acc.iter_mut() {
                *slot += crate::rng::standard_normal(&mut rng) as f32;
            }
        }
        acc
    }
}

/// Greedy sentence recovery: forward the source row, take the per-position
/// argmax (ties to the lowest index), map indices back to words, stop at the
/// first index with no word (padding included), and join with single spaces.
pub fn predict_sentence(
    view: &impl ForwardModel,
    tok: &Tokenizer,
    source: &Array2<usize>,
) -> Result<String> {
    let probs = view.forward_probs(source)?;
    let (_, seq, vocab) = probs.dim();
    let mut words: Vec<&str> = Vec::new();
    for l in 0..seq {
        let mut best = 0usize;
        let mut best_p = probs[(0, l, 0)];
        for v in 1..vocab {
            let p = probs[(0, l, v)];
            if p > best_p {
                best_p = p;
                best = v;
            }
        }
        match tok.word_for_index(best) {
            Some(word) => words.push(word),
            None => break,
        }
    }
    Ok(words.join(" "))
}

/// Cosine similarity of the two sentence embeddings; zero when either
/// embedding has zero norm (an empty recovered sentence is maximally
/// unrelated).
pub fn sentence_similarity(embedder: &dyn SentenceEmbedder, a: &str, b: &str) -> f32 {
    let va = embedder.embed(a);
    let vb = embedder.embed(b);
    cosine(&va, &vb)
}

fn cosine(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "embedding dimensions differ");
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += f64::from(x) * f64::from(y);
        na += f64::from(x) * f64::from(x);
        nb += f64::from(y) * f64::from(y);
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())) as f32
}

/// Monte Carlo estimate of the upper-tail probability of semantic
/// similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct PssEstimate {
    pub eta_min: f32,
    pub slots: usize,
    pub p: f64,
    pub similarities: Vec<f32>,
}

/// p = |{t : η_t ≥ η_min}| / N over the given similarity values.
pub fn estimate_pss(similarities: &[f32], eta_min: f32) -> Result<PssEstimate> {
    if similarities.is_empty() {
        return Err(Error::EmptySimilarities);
    }
    let hits = similarities.iter().filter(|&&s| s >= eta_min).count();
    Ok(PssEstimate {
        eta_min,
        slots: similarities.len(),
        p: hits as f64 / similarities.len() as f64,
        similarities: similarities.to_vec(),
    })
}

/// Truncates a reference sentence to its first `len` words only when longer.
fn truncate_reference(sentence: &str, len: usize) -> String {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    if words.len() > len {
        words[..len].join(" ")
    } else {
        sentence.to_string()
    }
}

/// One sweep point: interferer count and the estimate it produced.
pub type SweepResult = Vec<(usize, PssEstimate)>;

/// Per-slot evaluation record kept for the optional trace output.
#[derive(Debug, Clone)]
pub struct SlotTrace {
    pub interferers: usize,
    pub slot: u64,
    pub eta: f32,
    pub recovered: String,
}

/// Evaluates p(η_min) for every interferer count in `u_grid`.
///
/// Slot t (1-based) draws its own interference, injects it into the model,
/// recovers the sentence for test row t−1, and scores it against the raw
/// reference sentence (truncated to the model's sentence length when
/// longer). Slots are independent given the seed, so they may fan out in
/// parallel; results reduce in slot order and match the sequential path
/// exactly.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_sweep(
    model: &DeepScModel<f32>,
    tok: &Tokenizer,
    test_inputs: &VectorizedDataset,
    references: &[String],
    u_grid: &[usize],
    eta_min: f32,
    slots: usize,
    seed: u64,
    power: f64,
    embedder: &dyn SentenceEmbedder,
    mode: ExecMode,
) -> Result<(SweepResult, Vec<SlotTrace>)> {
    if references.len() != test_inputs.rows() {
        return Err(Error::MisalignedReferences {
            rows: test_inputs.rows(),
            references: references.len(),
        });
    }
    if slots == 0 || slots > test_inputs.rows() {
        return Err(Error::SlotsExceedRows {
            slots,
            rows: test_inputs.rows(),
        });
    }
    model.ensure_compatible(test_inputs.vocab_size, test_inputs.sentence_len())?;

    let sentence_len = test_inputs.sentence_len();
    let mut sweep = SweepResult::new();
    let mut traces = Vec::new();
    for &interferers in u_grid {
        let spec = RfiSpec {
            interferers,
            power,
            symbol_len: model.symbol_len(),
        };
        let per_slot: Vec<Result<(f32, String)>> = exec::map_indexed(mode, slots, |idx| {
            let slot = idx as u64 + 1;
            let interference = total_rfi(&spec, slot, seed);
            let view = inject_rfi(model, &interference)?;
            let source = test_inputs.inputs.slice(s![idx..idx + 1, ..]).to_owned();
            let recovered = predict_sentence(&view, tok, &source)?;
            let reference = truncate_reference(&references[idx], sentence_len);
            let eta = sentence_similarity(embedder, &reference, &recovered);
            Ok((eta, recovered))
        });
        let mut similarities = Vec::with_capacity(slots);
        for (idx, outcome) in per_slot.into_iter().enumerate() {
            let (eta, recovered) = outcome?;
            similarities.push(eta);
            traces.push(SlotTrace {
                interferers,
                slot: idx as u64 + 1,
                eta,
                recovered,
            });
        }
        sweep.push((interferers, estimate_pss(&similarities, eta_min)?));
    }
    Ok((sweep, traces))
}

/// Writes the sweep CSV: one row per interferer count with columns
/// U, eta_min, N, p, seed.
pub fn write_sweep_csv(sweep: &SweepResult, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("U,eta_min,N,p,seed\n");
    for (interferers, estimate) in sweep {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            interferers, estimate.eta_min, estimate.slots, estimate.p, seed
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the per-slot trace CSV with columns U, slot, eta,
/// recovered_sentence.
pub fn write_trace_csv(traces: &[SlotTrace], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::DatasetFormat {
        reason: format!("cannot open {}: {e}", path.display()),
    })?;
    w.write_record(["U", "slot", "eta", "recovered_sentence"])
        .and_then(|_| {
            for t in traces {
                w.write_record([
                    t.interferers.to_string(),
                    t.slot.to_string(),
                    t.eta.to_string(),
                    t.recovered.clone(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::DatasetFormat {
            reason: format!("cannot write {}: {e}", path.display()),
        })
}
