//! Property tests for the corpus pipeline: round trips, brute-force
//! oracles, one-hot structure, shuffle permutation, and cleaning
//! idempotence.

use std::collections::HashMap;

use proptest::prelude::*;
use semcom_core::corpus::{
    encode, fit_tokenizer, one_hot_labels, standardize, trim_vocabulary, BatchStream, CleanCorpus,
    RawDocument, UNK_TOKEN,
};

fn small_word() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-e]{1,3}").unwrap()
}

fn sentence(max_words: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(small_word(), 0..=max_words).prop_map(|ws| ws.join(" "))
}

fn corpus(max_sentences: usize, max_words: usize) -> impl Strategy<Value = CleanCorpus> {
    proptest::collection::vec(sentence(max_words), 1..=max_sentences)
        .prop_map(|sentences| CleanCorpus { sentences })
}

/// Independent word-frequency counter used as the trimming oracle.
fn brute_force_counts(corpus: &CleanCorpus) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for s in &corpus.sentences {
        for w in s.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

proptest! {
    /// Decoding an encoded sentence of known words through word_for_index
    /// and stripping trailing padding reproduces the sentence exactly.
    #[test]
    fn encode_round_trips_through_word_for_index(c in corpus(12, 8)) {
        prop_assume!(c.word_count() > 0);
        let tok = fit_tokenizer(&c).unwrap();
        let max_len = c.sentences.iter().map(|s| s.split_whitespace().count()).max().unwrap();
        let data = encode(&tok, &c, max_len.max(1)).unwrap();
        for (row, sentence) in data.inputs.rows().into_iter().zip(&c.sentences) {
            let decoded: Vec<&str> = row
                .iter()
                .take_while(|&&idx| idx != 0)
                .map(|&idx| tok.word_for_index(idx).unwrap())
                .collect();
            prop_assert_eq!(decoded.join(" "), sentence.clone());
        }
    }

    /// trim_vocabulary agrees with a brute-force frequency counter on which
    /// words survive and which become unk.
    #[test]
    fn trim_matches_brute_force_counter(c in corpus(20, 10), min_count in 1usize..5) {
        let counts = brute_force_counts(&c);
        let (vocab, trimmed) = trim_vocabulary(&c, min_count);
        for (word, count) in &counts {
            prop_assert_eq!(
                vocab.contains(word),
                *count >= min_count || (word == UNK_TOKEN && vocab.contains(UNK_TOKEN)),
                "word {} count {}", word, count
            );
        }
        for (orig, kept) in c.sentences.iter().zip(&trimmed.sentences) {
            let orig_words: Vec<&str> = orig.split_whitespace().collect();
            let kept_words: Vec<&str> = kept.split_whitespace().collect();
            prop_assert_eq!(orig_words.len(), kept_words.len());
            for (o, k) in orig_words.iter().zip(&kept_words) {
                if counts[*o] >= min_count {
                    prop_assert_eq!(o, k);
                } else {
                    prop_assert_eq!(*k, UNK_TOKEN);
                }
            }
        }
    }

    /// Tokenizer indices are contiguous from 1 and ordered by frequency with
    /// first-occurrence tie break; vocab_size is the word count plus one.
    #[test]
    fn tokenizer_indices_are_contiguous_frequency_ranked(c in corpus(16, 8)) {
        prop_assume!(c.word_count() > 0);
        let counts = brute_force_counts(&c);
        let tok = fit_tokenizer(&c).unwrap();
        prop_assert_eq!(tok.vocab_size(), counts.len() + 1);
        let mut last_count = usize::MAX;
        for idx in 1..tok.vocab_size() {
            let word = tok.word_for_index(idx).unwrap();
            let count = counts[word];
            prop_assert!(count <= last_count, "frequency must be non-increasing");
            last_count = count;
            prop_assert_eq!(tok.index_for_word(word), Some(idx));
        }
    }

    /// Every label slice sums to one with the one at the input index.
    #[test]
    fn one_hot_slices_are_valid(c in corpus(6, 6)) {
        prop_assume!(c.word_count() > 0);
        let tok = fit_tokenizer(&c).unwrap();
        let data = encode(&tok, &c, 6).unwrap();
        let labels = one_hot_labels(&data.inputs, data.vocab_size).unwrap();
        for ((b, l), &idx) in data.inputs.indexed_iter() {
            let mut sum = 0.0f32;
            for v in 0..data.vocab_size {
                sum += labels[(b, l, v)];
            }
            prop_assert_eq!(sum, 1.0);
            prop_assert_eq!(labels[(b, l, idx)], 1.0);
        }
    }

    /// The multiset of rows served per epoch never changes: shuffling is a
    /// permutation.
    #[test]
    fn epoch_shuffle_is_a_permutation(seed in 0u64..1000, epoch in 0u64..50) {
        let c = CleanCorpus {
            sentences: (0..9).map(|i| format!("w{i}")).collect(),
        };
        let tok = fit_tokenizer(&c).unwrap();
        let data = encode(&tok, &c, 2).unwrap();
        let stream = BatchStream::new(&data, 3, seed).unwrap();
        let mut perm = stream.permutation(epoch);
        perm.sort_unstable();
        let identity: Vec<usize> = (0..9).collect();
        prop_assert_eq!(perm, identity);
    }

    /// standardize(standardize(d)) == standardize(d) for arbitrary input.
    #[test]
    fn standardize_is_idempotent(text in "\\PC{0,120}") {
        let once = standardize(&RawDocument { text });
        let twice = standardize(&RawDocument {
            text: once.sentences.join("\n"),
        });
        // Joining on newlines loses nothing: cleaned sentences contain no
        // newlines, and empty sentences stay empty lines.
        prop_assert_eq!(once.sentences.len().max(1), twice.sentences.len().max(1));
        for (a, b) in once.sentences.iter().zip(&twice.sentences) {
            prop_assert_eq!(a, b);
        }
    }

    /// Clean corpora satisfy the cleanliness invariants.
    #[test]
    fn standardized_output_is_clean(text in "\\PC{0,120}") {
        let clean = standardize(&RawDocument { text });
        for s in &clean.sentences {
            for token in s.split_whitespace() {
                prop_assert!(token.chars().all(char::is_alphabetic), "token {token:?}");
                prop_assert_eq!(token.to_lowercase(), token);
            }
            prop_assert!(!s.contains("  "), "double space in {s:?}");
        }
    }
}
