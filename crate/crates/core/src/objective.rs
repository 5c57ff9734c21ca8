//! Training objective: bidirectional supervised contrastive loss over the
//! text and image summary states, binary cross-entropy, and their weighted
//! sum.

use serde::{Deserialize, Serialize};

use crate::autograd::{binary_cross_entropy, log_sum_exp_parts, Tape, Var};
use crate::error::{MiclError, Result};
use crate::tensor::{cosine, Matrix};

/// Summary states of a batch with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEmbeddings {
    pub e_t: Matrix,
    pub e_v: Matrix,
    pub labels: Vec<u8>,
}

impl BatchEmbeddings {
    pub fn new(e_t: Matrix, e_v: Matrix, labels: Vec<u8>) -> Result<Self> {
        if e_t.shape() != e_v.shape() || e_t.rows() != labels.len() {
            return Err(MiclError::Shape(format!(
                "text {:?}, image {:?} and {} labels disagree",
                e_t.shape(),
                e_v.shape(),
                labels.len()
            )));
        }
        if labels.len() < 2 {
            return Err(MiclError::Shape("contrastive batches need at least two samples".into()));
        }
        if !e_t.is_finite() || !e_v.is_finite() {
            return Err(MiclError::Numerical("non-finite batch embedding".into()));
        }
        Ok(Self { e_t, e_v, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    TextToImage,
    ImageToText,
}

/// One anchor's term, computed directly from pairwise cosines.
pub fn contrastive_direction(
    anchor: usize,
    batch: &BatchEmbeddings,
    direction: Direction,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(MiclError::Config(format!("temperature {tau} must be positive")));
    }
    let (a, b) = match direction {
        Direction::TextToImage => (&batch.e_t, &batch.e_v),
        Direction::ImageToText => (&batch.e_v, &batch.e_t),
    };
    let logits: Vec<f64> = (0..batch.len())
        .map(|j| cosine(a.row(anchor), b.row(j)).unwrap_or(0.0) / tau)
        .collect();
    let (max, tail) = log_sum_exp_parts(&logits);
    let positives: Vec<usize> = (0..batch.len())
        .filter(|&i| batch.labels[i] == batch.labels[anchor])
        .collect();
    Ok(positives.iter().map(|&i| (max - logits[i]) + tail).sum::<f64>() / positives.len() as f64)
}

/// `1/|S_P(k)|` for every same-label pair `(k, i)`, zero elsewhere.
pub fn positive_weights(labels: &[u8]) -> Matrix {
    let b = labels.len();
    let mut m = Matrix::zeros(b, b);
    for k in 0..b {
        let count = labels.iter().filter(|&&l| l == labels[k]).count() as f64;
        for i in 0..b {
            if labels[i] == labels[k] {
                m.set(k, i, 1.0 / count);
            }
        }
    }
    m
}

/// Mean over anchors of `½ (text→image + image→text)` on the tape. `e_t`
/// and `e_v` are `B × d`.
pub fn contrastive_loss(tape: &mut Tape, e_t: Var, e_v: Var, labels: &[u8], tau: f64) -> Var {
    let b = labels.len();
    assert!(b >= 2, "contrastive loss needs at least two samples");
    let a = tape.normalize_rows(e_t);
    let v = tape.normalize_rows(e_v);
    let sim = tape.matmul_t(a, v);
    let sim = tape.scale(sim, 1.0 / tau);
    let sim_t = tape.transpose(sim);
    let weights = tape.leaf(positive_weights(labels));
    let mut terms = Vec::with_capacity(2);
    for s in [sim, sim_t] {
        let log_p = tape.log_softmax_rows(s);
        let picked = tape.mul(log_p, weights);
        terms.push(tape.sum(picked));
    }
    let both = tape.add(terms[0], terms[1]);
    tape.scale(both, -0.5 / b as f64)
}

/// Value-only contrastive loss.
pub fn contrastive_value(batch: &BatchEmbeddings, tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(MiclError::Config(format!("temperature {tau} must be positive")));
    }
    let mut tape = Tape::new();
    let t = tape.leaf(batch.e_t.clone());
    let v = tape.leaf(batch.e_v.clone());
    let l = contrastive_loss(&mut tape, t, v, &batch.labels, tau);
    Ok(tape.scalar_value(l))
}

/// `−(y ln ŷ + (1−y) ln(1−ŷ))` with `ŷ` clamped away from 0 and 1.
pub fn cross_entropy(label: u8, probability: f64) -> f64 {
    binary_cross_entropy(f64::from(label), probability)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_cl: f64,
    pub l_total: f64,
    pub lambda: f64,
}

pub fn total_loss(l_ce: f64, l_cl: f64, lambda: f64) -> Result<LossBreakdown> {
    if lambda < 0.0 {
        return Err(MiclError::Config(format!("lambda {lambda} must be non-negative")));
    }
    Ok(LossBreakdown {
        l_ce,
        l_cl,
        l_total: l_ce + lambda * l_cl,
        lambda,
    })
}
