//! Sentiment view: lexicon polarity statistics of the caption and the OCR
//! text combined with pooled token states.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{Tape, Var};
use crate::data::PolarityLexicon;
use crate::nn::FeedForward;
use crate::params::{BoundParams, ParamStore};
use crate::tensor::Matrix;

/// `(mean, min, max, hit-fraction)` of per-word polarities, misses counted
/// as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SentimentSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub hit_fraction: f64,
}

impl SentimentSummary {
    pub const WIDTH: usize = 4;

    pub const ZERO: SentimentSummary = SentimentSummary {
        mean: 0.0,
        min: 0.0,
        max: 0.0,
        hit_fraction: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.mean, self.min, self.max, self.hit_fraction]
    }
}

pub fn sentiment_polarity<S: AsRef<str>>(words: &[S], lexicon: &dyn PolarityLexicon) -> SentimentSummary {
    if words.is_empty() {
        return SentimentSummary::ZERO;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for w in words {
        let p = match lexicon.polarity(w.as_ref()) {
            Some(p) => {
                hits += 1;
                p
            }
            None => 0.0,
        };
        sum += p;
        min = min.min(p);
        max = max.max(p);
    }
    let n = words.len() as f64;
    SentimentSummary {
        mean: sum / n,
        min,
        max,
        hit_fraction: hits as f64 / n,
    }
}

/// Perceptron over `s_t ⊕ s_o ⊕ mean(h_1..n)`.
#[derive(Debug, Clone)]
pub struct SentimentView {
    pub mlp: FeedForward,
    pub dim: usize,
}

impl SentimentView {
    pub fn new(store: &mut ParamStore, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let d_in = 2 * SentimentSummary::WIDTH + dim;
        Self {
            mlp: FeedForward::new(store, "sentiment.mlp", d_in, dim, dim, rng),
            dim,
        }
    }

    /// `token_states` are the text content rows (summary row excluded).
    /// Without OCR the feature is a constant zero row.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        text: SentimentSummary,
        ocr: Option<SentimentSummary>,
        token_states: Var,
    ) -> Var {
        let Some(ocr) = ocr else {
            return tape.leaf(Matrix::zeros(1, self.dim));
        };
        let mut stats = text.to_array().to_vec();
        stats.extend(ocr.to_array());
        let stats = tape.leaf(Matrix::row_vector(stats));
        let pooled = tape.mean_rows(token_states);
        let input = tape.concat_cols(&[stats, pooled]);
        self.mlp.forward(tape, p, input)
    }
}
