//! Shared fixtures for the benchmarks.

use btot_core::synth::{generate_corpus, DocLength, GenKind, SynthConfig};
use btot_core::{Corpus, ModelKind, ModelSpec, ModelState, NyScheme};

/// Fixed synthetic corpus with `d` documents of mean length `len`.
pub fn corpus(v: usize, d: usize, len: f64) -> Corpus {
    let mut sc = SynthConfig::new(5, v, d);
    sc.doc_len = DocLength::Poisson(len);
    sc.kind = GenKind::Wbtot(NyScheme::Sqrt);
    generate_corpus(&sc, None, 1).expect("valid synth config").0
}

pub fn state(kind: ModelKind, k: usize, v: usize) -> ModelState {
    ModelState::init(&ModelSpec::new(kind, k), v, 3).expect("valid model spec")
}
