//! Sweep-level behavior: determinism, slot isolation, parallel/sequential
//! equivalence, estimator oracles, and alignment errors.

use ndarray::Array2;
use proptest::prelude::*;
use semcom_core::corpus::{encode, fit_tokenizer, CleanCorpus, VectorizedDataset};
use semcom_core::error::Error;
use semcom_core::evaluator::{estimate_pss, evaluate_sweep, HashProjectionEmbedder};
use semcom_core::exec::ExecMode;
use semcom_core::model::{build_model, DeepScModel, ModelConfig};

fn setup() -> (DeepScModel<f32>, semcom_core::corpus::Tokenizer, VectorizedDataset, Vec<String>) {
    let corpus = CleanCorpus {
        sentences: vec![
            "the committee approves the proposal".into(),
            "the council rejects the amendment".into(),
            "the parliament debates the budget".into(),
            "the delegation supports the resolution".into(),
            "the committee questions the budget".into(),
            "the council adopts the proposal".into(),
        ],
    };
    let tok = fit_tokenizer(&corpus).unwrap();
    let data = encode(&tok, &corpus, 8).unwrap();
    let mut cfg = ModelConfig::new(tok.vocab_size(), 8, 16, 4, 2, 16);
    cfg.sigma = 0.05;
    let model = build_model(&cfg, 77).unwrap();
    (model, tok, data, corpus.sentences)
}

#[test]
fn sweep_is_bitwise_deterministic() {
    let (model, tok, data, refs) = setup();
    let embedder = HashProjectionEmbedder::new(64, 1);
    let run = || {
        evaluate_sweep(
            &model, &tok, &data, &refs, &[0, 2, 10], 0.1, 6, 99, 10.0, &embedder,
            ExecMode::Sequential,
        )
        .unwrap()
        .0
    };
    let a = run();
    let b = run();
    assert_eq!(a.len(), b.len());
    for ((ua, ea), (ub, eb)) in a.iter().zip(&b) {
        assert_eq!(ua, ub);
        assert_eq!(ea, eb);
    }
}

#[test]
fn parallel_sweep_equals_sequential() {
    let (model, tok, data, refs) = setup();
    let embedder = HashProjectionEmbedder::new(64, 1);
    let run = |mode| {
        evaluate_sweep(
            &model, &tok, &data, &refs, &[0, 1, 5], 0.1, 6, 3, 10.0, &embedder, mode,
        )
        .unwrap()
        .0
    };
    let seq = run(ExecMode::Sequential);
    let par = run(ExecMode::Parallel);
    for ((ua, ea), (ub, eb)) in seq.iter().zip(&par) {
        assert_eq!(ua, ub);
        assert_eq!(ea.similarities, eb.similarities);
        assert_eq!(ea.p, eb.p);
    }
}

#[test]
fn slot_isolation_sweeping_other_u_first_changes_nothing() {
    // Evaluating U=50 before U=0 must give the same U=0 estimate as
    // evaluating U=0 alone: no RNG or model state leaks between points.
    let (model, tok, data, refs) = setup();
    let embedder = HashProjectionEmbedder::new(64, 2);
    let alone = evaluate_sweep(
        &model, &tok, &data, &refs, &[0], 0.1, 6, 5, 10.0, &embedder, ExecMode::Sequential,
    )
    .unwrap()
    .0;
    let after_heavy = evaluate_sweep(
        &model, &tok, &data, &refs, &[50, 0], 0.1, 6, 5, 10.0, &embedder, ExecMode::Sequential,
    )
    .unwrap()
    .0;
    assert_eq!(alone[0].1.similarities, after_heavy[1].1.similarities);
    assert_eq!(alone[0].1.p, after_heavy[1].1.p);
}

#[test]
fn sweep_rejects_misaligned_references_and_oversized_slot_counts() {
    let (model, tok, data, refs) = setup();
    let embedder = HashProjectionEmbedder::new(16, 0);
    let short_refs = refs[..3].to_vec();
    assert!(matches!(
        evaluate_sweep(
            &model, &tok, &data, &short_refs, &[0], 0.1, 3, 0, 10.0, &embedder,
            ExecMode::Sequential,
        ),
        Err(Error::MisalignedReferences { .. })
    ));
    assert!(matches!(
        evaluate_sweep(
            &model, &tok, &data, &refs, &[0], 0.1, 100, 0, 10.0, &embedder,
            ExecMode::Sequential,
        ),
        Err(Error::SlotsExceedRows { .. })
    ));
}

#[test]
fn sweep_rejects_mismatched_model_artifacts() {
    let (model, tok, _, _) = setup();
    let embedder = HashProjectionEmbedder::new(16, 0);
    let other_corpus = CleanCorpus {
        sentences: vec!["x y".into(), "y x".into()],
    };
    let other_tok = fit_tokenizer(&other_corpus).unwrap();
    let other_data = encode(&other_tok, &other_corpus, 8).unwrap();
    let refs = other_corpus.sentences.clone();
    assert!(matches!(
        evaluate_sweep(
            &model, &tok, &other_data, &refs, &[0], 0.1, 2, 0, 10.0, &embedder,
            ExecMode::Sequential,
        ),
        Err(Error::ConfigMismatch { .. })
    ));
}

#[test]
fn untrained_model_with_heavy_interference_has_low_similarity_spread() {
    // Not a trend assertion (that's the acceptance suite's job on a trained
    // model); only that heavy interference produces finite similarities in
    // range for every slot.
    let (model, tok, data, refs) = setup();
    let embedder = HashProjectionEmbedder::new(64, 3);
    let (sweep, traces) = evaluate_sweep(
        &model, &tok, &data, &refs, &[50], 0.1, 6, 11, 10.0, &embedder, ExecMode::Sequential,
    )
    .unwrap();
    assert_eq!(traces.len(), 6);
    for (_, est) in &sweep {
        for &s in &est.similarities {
            assert!((-1.0..=1.0).contains(&s), "similarity out of range: {s}");
        }
    }
}

proptest! {
    /// estimate_pss equals a brute-force indicator count on randomized
    /// similarity lists, is monotone in the threshold, and hits 1 at -1.
    #[test]
    fn pss_matches_brute_force(sims in proptest::collection::vec(-1.0f32..=1.0, 1..200),
                               eta in -1.0f32..=1.0) {
        let est = estimate_pss(&sims, eta).unwrap();
        let brute = sims.iter().filter(|&&s| s >= eta).count() as f64 / sims.len() as f64;
        prop_assert_eq!(est.p, brute);
        prop_assert_eq!(estimate_pss(&sims, -1.0).unwrap().p, 1.0);
        let looser = estimate_pss(&sims, (eta - 0.25).max(-1.0)).unwrap().p;
        prop_assert!(looser >= est.p);
    }
}
