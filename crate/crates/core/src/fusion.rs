//! Evidential credibility of each view, credibility-weighted fusion and the
//! sarcasm classifier.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{softplus, Tape, Unary, Var};
use crate::nn::{Attention, Linear};
use crate::params::{BoundParams, ParamStore};
use crate::tensor::Matrix;
use crate::views::ViewKind;

/// Non-negative two-class evidence of one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evidence {
    pub e0: f64,
    pub e1: f64,
}

impl Evidence {
    /// Maps raw head logits to evidence with `ln(1 + e^z)`.
    pub fn from_logits(z0: f64, z1: f64) -> Self {
        Self {
            e0: softplus(z0),
            e1: softplus(z1),
        }
    }

    pub fn total(self) -> f64 {
        self.e0 + self.e1
    }

    /// Dirichlet strength `S = (e0 + 1) + (e1 + 1)`.
    pub fn strength(self) -> f64 {
        self.e0 + self.e1 + 2.0
    }

    pub fn credibility(self) -> Credibility {
        let s = self.strength();
        Credibility {
            c: self.total() / s,
            u: 2.0 / s,
            belief: [self.e0 / s, self.e1 / s],
        }
    }
}

/// Subjective-logic opinion of a binary view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Credibility {
    pub c: f64,
    pub u: f64,
    pub belief: [f64; 2],
}

/// Linear head to two logits followed by softplus.
#[derive(Debug, Clone)]
pub struct EvidenceHead {
    pub linear: Linear,
}

impl EvidenceHead {
    pub fn new(store: &mut ParamStore, view: ViewKind, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            linear: Linear::new(store, &format!("evidence.{}", view.as_str()), dim, 2, rng),
        }
    }

    /// Returns the `1 × 2` evidence and the `1 × 1` credibility.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, feature: Var) -> (Var, Var) {
        let logits = self.linear.forward(tape, p, feature);
        let evidence = tape.softplus(logits);
        let ones = tape.leaf(Matrix::filled(2, 1, 1.0));
        let total = tape.matmul(evidence, ones);
        (evidence, tape.unary(total, Unary::Credibility))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FusionOutput {
    /// `1 × d` fused vector.
    pub fused: Var,
    /// `3 × 3` attention weights over the views.
    pub weights: Var,
}

/// Self-attention over the credibility-scaled view rows, mean-pooled.
#[derive(Debug, Clone)]
pub struct FusionLayer {
    pub attention: Attention,
}

impl FusionLayer {
    pub fn new(store: &mut ParamStore, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            attention: Attention::new(store, "fusion.att", dim, rng),
        }
    }

    /// `views` are `1 × d` rows; `credibilities` are `1 × 1` scalars in the
    /// same order.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, views: &[Var], credibilities: &[Var]) -> FusionOutput {
        assert_eq!(views.len(), credibilities.len(), "one credibility per view");
        let stacked = tape.concat_rows(views);
        let c = tape.concat_rows(credibilities);
        let scaled = tape.scale_rows(stacked, c);
        let att = self.attention.self_attend(tape, p, scaled);
        FusionOutput {
            fused: tape.mean_rows(att.output),
            weights: att.weights,
        }
    }
}

/// `ŷ = σ(W x + b)`.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub linear: Linear,
}

impl Classifier {
    pub fn new(store: &mut ParamStore, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            linear: Linear::new(store, "classifier", dim, 1, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, fused: Var) -> Var {
        let logit = self.linear.forward(tape, p, fused);
        tape.sigmoid(logit)
    }
}

/// Hard label for a probability.
pub fn predict_label(probability: f64) -> u8 {
    u8::from(probability >= 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::sigmoid;
    use rand::{Rng, SeedableRng};

    #[test]
    fn softplus_evidence_values() {
        let e = Evidence::from_logits(0.0, 0.0);
        assert_eq!(e.e0, 2f64.ln());
        assert_eq!(e.e1, 2f64.ln());
        let e = Evidence::from_logits(10.0, -10.0);
        assert!((e.e0 - 10.000_045_4).abs() < 1e-7);
        assert!((e.e1 - 0.000_045_4).abs() < 1e-7);
    }

    #[test]
    fn credibility_spot_values() {
        let c = Evidence { e0: 0.0, e1: 0.0 }.credibility();
        assert_eq!((c.c, c.u), (0.0, 1.0));
        assert_eq!(Evidence { e0: 1.0, e1: 1.0 }.credibility().c, 0.5);
        assert_eq!(Evidence { e0: 8.0, e1: 0.0 }.credibility().c, 0.8);
        let ln2 = 2f64.ln();
        let c = Evidence { e0: ln2, e1: ln2 }.credibility().c;
        assert!((c - 0.409_4).abs() < 1e-4, "{c}");
    }

    #[test]
    fn credibility_depends_only_on_total() {
        let a = Evidence { e0: 3.0, e1: 1.0 }.credibility();
        let b = Evidence { e0: 0.5, e1: 3.5 }.credibility();
        assert_eq!(a.c, b.c);
        assert_ne!(a.belief, b.belief);
    }

    #[test]
    fn classifier_midpoint_and_ln3() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(800.0) == 1.0);
        assert_eq!(predict_label(0.5), 1);
        assert_eq!(predict_label(0.4999), 0);
    }

    #[test]
    fn zero_head_on_tape_gives_ln2_evidence() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = EvidenceHead::new(&mut store, ViewKind::Sentiment, 4, &mut rng);
        *store.get_mut(head.linear.w) = Matrix::zeros(4, 2);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let f = tape.leaf(Matrix::filled(1, 4, 3.0));
        let (e, c) = head.forward(&mut tape, &p, f);
        assert_eq!(tape.value(e).data(), &[2f64.ln(), 2f64.ln()]);
        let expected = Evidence::from_logits(0.0, 0.0).credibility().c;
        assert_eq!(tape.scalar_value(c), expected);
    }

    fn fusion(d: usize, zero_bias: bool) -> (ParamStore, FusionLayer) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = FusionLayer::new(&mut store, d, &mut rng);
        if !zero_bias {
            *store.get_mut(f.attention.output.b) = Matrix::filled(1, d, 0.25);
        }
        (store, f)
    }

    fn fuse(store: &ParamStore, layer: &FusionLayer, views: &[Matrix], c: &[f64]) -> Matrix {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let v: Vec<Var> = views.iter().map(|m| tape.leaf(m.clone())).collect();
        let c: Vec<Var> = c.iter().map(|&x| tape.leaf(Matrix::scalar(x))).collect();
        let out = layer.forward(&mut tape, &p, &v, &c);
        tape.value(out.fused).clone()
    }

    fn random_row(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::row_vector((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_credibility_gives_bias_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let views: Vec<Matrix> = (0..3).map(|_| random_row(8, &mut rng)).collect();
        let (store, layer) = fusion(8, true);
        assert_eq!(fuse(&store, &layer, &views, &[0.0; 3]), Matrix::zeros(1, 8));
        let (store, layer) = fusion(8, false);
        assert_eq!(fuse(&store, &layer, &views, &[0.0; 3]), Matrix::filled(1, 8, 0.25));
    }

    #[test]
    fn permuting_views_leaves_fused_vector_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (store, layer) = fusion(8, false);
        let views: Vec<Matrix> = (0..3).map(|_| random_row(8, &mut rng)).collect();
        let c = [0.2, 0.5, 0.9];
        let a = fuse(&store, &layer, &views, &c);
        let permuted = [views[2].clone(), views[0].clone(), views[1].clone()];
        let b = fuse(&store, &layer, &permuted, &[c[2], c[0], c[1]]);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_a_credibility_changes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (store, layer) = fusion(8, false);
        let views: Vec<Matrix> = (0..3).map(|_| random_row(8, &mut rng)).collect();
        let a = fuse(&store, &layer, &views, &[0.3, 0.3, 0.3]);
        let b = fuse(&store, &layer, &views, &[0.6, 0.3, 0.3]);
        assert!(a.zip_map(&b, |x, y| (x - y).abs()).max_abs() > 1e-6);
    }
}
