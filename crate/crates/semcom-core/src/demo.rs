//! Deterministic synthetic corpus generation for desk-scale runs.
//!
//! Real corpora are large; desk runs, tests, and the bundled quickstart use
//! a seeded generator instead. Sentences are drawn from small word pools so
//! the trimmed vocabulary stays well under 256 words.

use rand::Rng;

use crate::rng::derive_rng;

const SUBJECTS: &[&str] = &[
    "the committee",
    "the parliament",
    "the council",
    "the delegation",
    "the president",
    "the union",
    "the member",
    "the rapporteur",
    "the commission",
    "the assembly",
];

const VERBS: &[&str] = &[
    "approves",
    "rejects",
    "debates",
    "examines",
    "supports",
    "questions",
    "adopts",
    "reviews",
    "defers",
    "welcomes",
];

const OBJECTS: &[&str] = &[
    "the proposal",
    "the amendment",
    "the report",
    "the budget",
    "the resolution",
    "the agenda",
    "the motion",
    "the directive",
    "the statement",
    "the treaty",
];

const TAILS: &[&str] = &[
    "without delay",
    "after the vote",
    "in plenary session",
    "on regional policy",
    "with great care",
    "before the recess",
    "during the sitting",
    "under this rule",
    "for the record",
    "by a large majority",
];

/// Generates `sentences` cleaned sentences (lowercase words, single spaces),
/// one per line, deterministically from `seed`.
pub fn demo_corpus(sentences: usize, seed: u64) -> String {
    let mut rng = derive_rng(seed, *b"democorp", 0, 0);
    let mut out = String::new();
    for _ in 0..sentences {
        let s = SUBJECTS[rng.gen_range(0..SUBJECTS.len())];
        let v = VERBS[rng.gen_range(0..VERBS.len())];
        let o = OBJECTS[rng.gen_range(0..OBJECTS.len())];
        out.push_str(s);
        out.push(' ');
        out.push_str(v);
        out.push(' ');
        out.push_str(o);
        if rng.gen_bool(0.7) {
            out.push(' ');
            out.push_str(TAILS[rng.gen_range(0..TAILS.len())]);
        }
        out.push('\n');
    }
    out
}
