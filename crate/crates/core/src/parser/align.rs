//! Soft word-to-concept alignment.
//!
//! Each word vector w is compared against every concept c in Ĉ (the
//! vocabulary plus the optional no-content concept):
//!
//! ```text
//! P(c) = softmax_c(β · wᵀ W c)        v = Σ_c P(c) · c
//! ```

use nalgebra::{DMatrix, DVector};

use super::tokenize;
use crate::embedding::{self, Embedding};
use crate::vocab::ConceptVocabulary;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedWord {
    pub word: String,
    /// True when the word had no embedding and fell back to the no-content
    /// concept (or the zero vector when the vocabulary has none).
    pub unknown: bool,
    /// P(c) over the vocabulary entries, followed by the no-content concept
    /// when present.
    pub distribution: Vec<f64>,
    pub vector: Embedding,
}

/// Soft-aligns every word of `utterance`. `alignment` defaults to identity.
pub fn align_words(
    utterance: &str,
    vocab: &ConceptVocabulary,
    alignment: Option<&DMatrix<f64>>,
    temperature: f64,
) -> Vec<AlignedWord> {
    tokenize(utterance)
        .into_iter()
        .map(|word| align_word(&word, vocab, alignment, temperature))
        .collect()
}

pub fn align_word(
    word: &str,
    vocab: &ConceptVocabulary,
    alignment: Option<&DMatrix<f64>>,
    temperature: f64,
) -> AlignedWord {
    let d = vocab.dim();
    let (w, unknown) = match vocab.word_vector(word) {
        Some(v) => (v, false),
        None => (
            vocab.null_concept().cloned().unwrap_or_else(|| embedding::zeros(d)),
            true,
        ),
    };
    // wᵀ W c = (Wᵀ w) · c
    let projected: Embedding = match alignment {
        Some(m) => (m.transpose() * DVector::from_column_slice(&w)).as_slice().to_vec(),
        None => w,
    };
    let concepts: Vec<&Embedding> = vocab
        .entries()
        .iter()
        .map(|c| &c.embedding)
        .chain(vocab.null_concept())
        .collect();
    let logits: Vec<f64> = concepts.iter().map(|c| embedding::dot(&projected, c)).collect();
    let distribution = embedding::softmax_scaled(&logits, temperature);
    let mut vector = embedding::zeros(d);
    for (p, c) in distribution.iter().zip(&concepts) {
        embedding::add_scaled(&mut vector, *p, c);
    }
    AlignedWord {
        word: word.to_string(),
        unknown,
        distribution,
        vector,
    }
}
