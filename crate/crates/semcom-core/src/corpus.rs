//! Corpus pipeline: cleaning, vocabulary trimming, tokenizer fitting,
//! fixed-length vectorization, one-hot labeling, and shuffled batch
//! streaming.
//!
//! File formats handled here:
//! - sentence files: UTF-8 plain text, one sentence per line;
//! - tokenizer files: a `vocab_size=N` header line, then one
//!   `word<TAB>index` entry per line sorted by index;
//! - dataset files: a `rows=R cols=C vocab_size=N` header line, then one
//!   row of space-separated indices per line.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::rng::{derive_rng, DOMAIN_SHUFFLE};

/// Index reserved for padding; never assigned to a word.
pub const PAD_INDEX: usize = 0;

/// Marker substituted for every word trimmed out of the vocabulary.
pub const UNK_TOKEN: &str = "unk";

// ---------------------------------------------------------------------------
// Loading and cleaning
// ---------------------------------------------------------------------------

/// A raw text document held in memory as a single blob.
#[derive(Debug, Clone)]
pub struct RawDocument {
    pub text: String,
}

/// Reads an entire UTF-8 document into memory.
pub fn load_document(path: impl AsRef<Path>) -> Result<RawDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.is_empty() {
        return Err(Error::EmptyDocument { path: path.into() });
    }
    Ok(RawDocument { text })
}

/// An ordered list of cleaned sentences: lowercase alphabetic tokens joined
/// by single spaces. Empty lines are retained as empty sentences so that
/// split arithmetic stays aligned with the source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanCorpus {
    pub sentences: Vec<String>,
}

impl CleanCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Total number of word tokens across all sentences.
    pub fn word_count(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| s.split_whitespace().count())
            .sum()
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

fn is_non_printable(c: char) -> bool {
    // Control and format characters; accented letters survive.
    c.is_control() || matches!(c.general_category(), unicode_properties::GeneralCategory::Format)
}

fn clean_sentence(line: &str) -> String {
    let line: String = line.nfc().collect();
    let mut kept: Vec<String> = Vec::new();
    for token in line.split_whitespace() {
        let token: String = token
            .to_lowercase()
            .chars()
            .filter(|&c| !is_punctuation(c) && !is_non_printable(c))
            .collect();
        if token.is_empty() || token.chars().any(char::is_numeric) {
            continue;
        }
        if !token.chars().all(char::is_alphabetic) {
            continue;
        }
        kept.push(token);
    }
    kept.join(" ")
}

/// Cleans a document into a [`CleanCorpus`]: split on newlines, then per
/// sentence: NFC-normalize, whitespace-tokenize, lowercase, strip
/// punctuation and non-printable characters from each token, drop tokens
/// containing digits, drop tokens with remaining non-alphabetic characters,
/// and re-join with single spaces.
pub fn standardize(doc: &RawDocument) -> CleanCorpus {
    standardize_with(doc, exec::default_mode())
}

pub fn standardize_with(doc: &RawDocument, mode: ExecMode) -> CleanCorpus {
    let lines: Vec<&str> = doc.text.lines().collect();
    let sentences = exec::map_slice(mode, &lines, |line| clean_sentence(line));
    CleanCorpus { sentences }
}

/// Drops empty sentences. The pipeline keeps them by default; this is the
/// opt-in prune step.
pub fn prune_empty(corpus: &CleanCorpus) -> CleanCorpus {
    CleanCorpus {
        sentences: corpus
            .sentences
            .iter()
            .filter(|s| !s.is_empty())
            .cloned()
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Vocabulary trimming
// ---------------------------------------------------------------------------

/// The set of words retained after frequency trimming.
#[derive(Debug, Clone)]
pub struct TrimmedVocabulary {
    pub words: HashSet<String>,
    pub min_count: usize,
    pub unk_token: String,
}

impl TrimmedVocabulary {
    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

/// Keeps words occurring at least `min_count` times and rewrites the corpus
/// with every out-of-vocabulary word replaced by [`UNK_TOKEN`]. Sentence
/// count and per-sentence token count are unchanged. When nothing is
/// replaced the vocabulary equals the full word set and the corpus comes
/// back verbatim.
pub fn trim_vocabulary(corpus: &CleanCorpus, min_count: usize) -> (TrimmedVocabulary, CleanCorpus) {
    assert!(min_count >= 1, "min_count must be at least 1");
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in &corpus.sentences {
        for word in sentence.split_whitespace() {
            *counts.entry(word).or_insert(0) += 1;
        }
    }
    let mut words: HashSet<String> = counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(&w, _)| w.to_string())
        .collect();

    let mut replaced_any = false;
    let sentences: Vec<String> = corpus
        .sentences
        .iter()
        .map(|sentence| {
            let tokens: Vec<&str> = sentence
                .split_whitespace()
                .map(|w| {
                    if words.contains(w) {
                        w
                    } else {
                        replaced_any = true;
                        UNK_TOKEN
                    }
                })
                .collect();
            tokens.join(" ")
        })
        .collect();
    if replaced_any {
        words.insert(UNK_TOKEN.to_string());
    }

    (
        TrimmedVocabulary {
            words,
            min_count,
            unk_token: UNK_TOKEN.to_string(),
        },
        CleanCorpus { sentences },
    )
}

/// Contiguous, order-preserving, non-overlapping slices in the order
/// test, train, validation.
pub fn split_dataset(
    corpus: &CleanCorpus,
    test_n: usize,
    train_n: usize,
    val_n: usize,
) -> Result<(CleanCorpus, CleanCorpus, CleanCorpus)> {
    let requested = test_n + train_n + val_n;
    if requested > corpus.len() {
        return Err(Error::SplitTooLarge {
            requested,
            available: corpus.len(),
        });
    }
    let slice = |range: std::ops::Range<usize>| CleanCorpus {
        sentences: corpus.sentences[range].to_vec(),
    };
    Ok((
        slice(0..test_n),
        slice(test_n..test_n + train_n),
        slice(test_n + train_n..requested),
    ))
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

/// Bidirectional word ↔ positive-integer map with index 0 reserved for
/// padding. Indices are assigned by descending corpus frequency, ties broken
/// by first occurrence, so fitting is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    word_to_index: HashMap<String, usize>,
    words_by_index: Vec<String>, // words_by_index[i] has index i + 1
}

impl Tokenizer {
    /// Number of unique indices plus one (the reserved padding index).
    pub fn vocab_size(&self) -> usize {
        self.words_by_index.len() + 1
    }

    pub fn index_for_word(&self, word: &str) -> Option<usize> {
        self.word_to_index.get(word).copied()
    }

    /// The word mapped to `index`, or `None` when no word has that index
    /// (including the reserved padding index 0).
    pub fn word_for_index(&self, index: usize) -> Option<&str> {
        if index == 0 {
            return None;
        }
        self.words_by_index.get(index - 1).map(String::as_str)
    }

    /// Writes the line-oriented tokenizer file described in the module docs.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        out.push_str(&format!("vocab_size={}\n", self.vocab_size()));
        for (i, word) in self.words_by_index.iter().enumerate() {
            out.push_str(&format!("{word}\t{}\n", i + 1));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::TokenizerFormat {
            line: 1,
            reason: "empty file".into(),
        })?;
        let vocab_size: usize = header
            .strip_prefix("vocab_size=")
            .and_then(|v| v.parse().ok())
            .ok_or(Error::TokenizerFormat {
                line: 1,
                reason: format!("expected vocab_size=N header, got {header:?}"),
            })?;
        let mut words_by_index = Vec::with_capacity(vocab_size.saturating_sub(1));
        let mut word_to_index = HashMap::new();
        for (lineno, line) in lines {
            let (word, idx) = line.split_once('\t').ok_or(Error::TokenizerFormat {
                line: lineno + 1,
                reason: "expected word<TAB>index".into(),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::TokenizerFormat {
                line: lineno + 1,
                reason: format!("bad index {idx:?}"),
            })?;
            if idx != words_by_index.len() + 1 {
                return Err(Error::TokenizerFormat {
                    line: lineno + 1,
                    reason: format!("indices must be contiguous from 1, got {idx}"),
                });
            }
            word_to_index.insert(word.to_string(), idx);
            words_by_index.push(word.to_string());
        }
        let tok = Tokenizer {
            word_to_index,
            words_by_index,
        };
        if tok.vocab_size() != vocab_size {
            return Err(Error::TokenizerFormat {
                line: 1,
                reason: format!(
                    "header claims vocab_size {vocab_size} but file has {}",
                    tok.vocab_size()
                ),
            });
        }
        Ok(tok)
    }
}

/// Fits a tokenizer over every distinct word of the corpus: indices start at
/// 1 in order of descending frequency, ties broken by first occurrence.
pub fn fit_tokenizer(corpus: &CleanCorpus) -> Result<Tokenizer> {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new(); // word -> (count, first pos)
    let mut position = 0usize;
    for sentence in &corpus.sentences {
        for word in sentence.split_whitespace() {
            let entry = counts.entry(word).or_insert((0, position));
            entry.0 += 1;
            position += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));

    let mut word_to_index = HashMap::with_capacity(ranked.len());
    let mut words_by_index = Vec::with_capacity(ranked.len());
    for (i, (word, _)) in ranked.into_iter().enumerate() {
        word_to_index.insert(word.to_string(), i + 1);
        words_by_index.push(word.to_string());
    }
    Ok(Tokenizer {
        word_to_index,
        words_by_index,
    })
}

// ---------------------------------------------------------------------------
// Vectorization and labeling
// ---------------------------------------------------------------------------

/// Which end of an over-long sentence is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Keep the first `len` tokens (sentence beginnings survive).
    #[default]
    Head,
    /// Keep the last `len` tokens.
    Tail,
}

/// Integer sentence matrix of shape (num_sentences × sentence_len), zero
/// padded on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedDataset {
    pub inputs: Array2<usize>,
    pub vocab_size: usize,
}

impl VectorizedDataset {
    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn sentence_len(&self) -> usize {
        self.inputs.ncols()
    }

    /// Writes the header + space-separated-row text layout.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(
                w,
                "rows={} cols={} vocab_size={}",
                self.rows(),
                self.sentence_len(),
                self.vocab_size
            )?;
            for row in self.inputs.rows() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::DatasetFormat {
            reason: "empty file".into(),
        })?;
        let mut rows = None;
        let mut cols = None;
        let mut vocab = None;
        for part in header.split_whitespace() {
            let (key, value) = part.split_once('=').ok_or(Error::DatasetFormat {
                reason: format!("bad header field {part:?}"),
            })?;
            let value: usize = value.parse().map_err(|_| Error::DatasetFormat {
                reason: format!("bad header value {part:?}"),
            })?;
            match key {
                "rows" => rows = Some(value),
                "cols" => cols = Some(value),
                "vocab_size" => vocab = Some(value),
                _ => {
                    return Err(Error::DatasetFormat {
                        reason: format!("unknown header field {key:?}"),
                    })
                }
            }
        }
        let (rows, cols, vocab_size) = match (rows, cols, vocab) {
            (Some(r), Some(c), Some(v)) => (r, c, v),
            _ => {
                return Err(Error::DatasetFormat {
                    reason: "header must define rows, cols, vocab_size".into(),
                })
            }
        };
        let mut data = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate() {
            for field in line.split_whitespace() {
                let v: usize = field.parse().map_err(|_| Error::DatasetFormat {
                    reason: format!("bad index {field:?} on data row {}", i + 1),
                })?;
                data.push(v);
            }
        }
        if data.len() != rows * cols {
            return Err(Error::DatasetFormat {
                reason: format!(
                    "expected {} values for {rows}x{cols}, found {}",
                    rows * cols,
                    data.len()
                ),
            });
        }
        let inputs = Array2::from_shape_vec((rows, cols), data).expect("shape checked above");
        Ok(VectorizedDataset { inputs, vocab_size })
    }
}

/// Maps each sentence to its index sequence, zero padded or truncated to
/// exactly `len` tokens. Every word must already be in the tokenizer; an
/// unknown word signals a pipeline-order bug and is reported by name.
pub fn encode(tok: &Tokenizer, corpus: &CleanCorpus, len: usize) -> Result<VectorizedDataset> {
    encode_with(tok, corpus, len, Truncation::Head)
}

pub fn encode_with(
    tok: &Tokenizer,
    corpus: &CleanCorpus,
    len: usize,
    truncation: Truncation,
) -> Result<VectorizedDataset> {
    assert!(len >= 1, "sentence length must be at least 1");
    let mut inputs = Array2::zeros((corpus.len(), len));
    for (row, sentence) in corpus.sentences.iter().enumerate() {
        let mut indices = Vec::new();
        for word in sentence.split_whitespace() {
            let idx = tok.index_for_word(word).ok_or_else(|| Error::UnknownWord {
                word: word.to_string(),
            })?;
            indices.push(idx);
        }
        let kept: &[usize] = if indices.len() > len {
            match truncation {
                Truncation::Head => &indices[..len],
                Truncation::Tail => &indices[indices.len() - len..],
            }
        } else {
            &indices
        };
        for (col, &idx) in kept.iter().enumerate() {
            inputs[(row, col)] = idx;
        }
    }
    Ok(VectorizedDataset {
        inputs,
        vocab_size: tok.vocab_size(),
    })
}

/// One-hot labels: `Y[b, l, v] = 1` iff `X[b, l] = v`.
pub fn one_hot_labels(inputs: &Array2<usize>, vocab_size: usize) -> Result<Array3<f32>> {
    let (rows, cols) = inputs.dim();
    let mut labels = Array3::zeros((rows, cols, vocab_size));
    for ((b, l), &idx) in inputs.indexed_iter() {
        if idx >= vocab_size {
            return Err(Error::IndexOutOfRange {
                index: idx,
                vocab_size,
            });
        }
        labels[(b, l, idx)] = 1.0;
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// Batch streaming
// ---------------------------------------------------------------------------

/// One training batch: inputs (B × L) and lazily built one-hot labels
/// (B × L × vocab_size).
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub inputs: Array2<usize>,
    pub labels: Array3<f32>,
}

impl LabeledBatch {
    pub fn batch_size(&self) -> usize {
        self.inputs.nrows()
    }
}

/// Streams shuffled `LabeledBatch`es. The row order is reshuffled
/// deterministically from `(seed, epoch)` at every epoch boundary, labels
/// are built per batch, and a final partial batch is dropped so every step
/// sees exactly `batch_size` rows.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    data: &'a VectorizedDataset,
    batch_size: usize,
    seed: u64,
}

impl<'a> BatchStream<'a> {
    pub fn new(data: &'a VectorizedDataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > data.rows() {
            return Err(Error::BatchTooLarge {
                batch_size,
                rows: data.rows(),
            });
        }
        Ok(BatchStream {
            data,
            batch_size,
            seed,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.rows() / self.batch_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// The row permutation used for `epoch`.
    pub fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.data.rows()).collect();
        let mut rng = derive_rng(self.seed, DOMAIN_SHUFFLE, epoch, 0);
        order.shuffle(&mut rng);
        order
    }

    pub fn batches(&self, epoch: u64) -> impl Iterator<Item = LabeledBatch> + '_ {
        let order = self.permutation(epoch);
        let batch_size = self.batch_size;
        let steps = self.steps_per_epoch();
        (0..steps).map(move |step| {
            let rows = &order[step * batch_size..(step + 1) * batch_size];
            let mut inputs = Array2::zeros((batch_size, self.data.sentence_len()));
            for (i, &r) in rows.iter().enumerate() {
                inputs.row_mut(i).assign(&self.data.inputs.row(r));
            }
            let labels = one_hot_labels(&inputs, self.data.vocab_size)
                .expect("dataset indices validated at encode time");
            LabeledBatch { inputs, labels }
        })
    }
}

// ---------------------------------------------------------------------------
// Sentence-file persistence
// ---------------------------------------------------------------------------

/// Writes one sentence per line (empty sentences become empty lines).
pub fn save_sentences(corpus: &CleanCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = corpus.sentences.join("\n");
    if !corpus.sentences.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_sentences(path: impl AsRef<Path>) -> Result<CleanCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(CleanCorpus {
        sentences: text.lines().map(str::to_string).collect(),
    })
}
