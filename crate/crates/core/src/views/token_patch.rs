//! Token-patch view: hybrid attention between text token states and image
//! patch states.

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::nn::{Attention, Linear};
use crate::params::{BoundParams, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct TokenPatchOutput {
    /// Projected `1 × d` view feature.
    pub feature: Var,
    /// `1 × 3d` concatenation of the three summary rows.
    pub summaries: Var,
    /// Attention weights of the joint, text-query and image-query passes.
    pub weights: [Var; 3],
}

/// One cross-attention layer used in three configurations, followed by a
/// `3d → d` projection.
#[derive(Debug, Clone)]
pub struct TokenPatchView {
    pub cross: Attention,
    pub projection: Linear,
}

impl TokenPatchView {
    pub fn new(store: &mut ParamStore, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            cross: Attention::new(store, "token_patch.cross", dim, rng),
            projection: Linear::new(store, "token_patch.proj", 3 * dim, dim, rng),
        }
    }

    /// `h_t` is `(n+1) × d`, `h_v` is `(n_V+1) × d`, both with summary row 0.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, h_t: Var, h_v: Var) -> TokenPatchOutput {
        let joint = tape.concat_rows(&[h_t, h_v]);
        let f_tv = self.cross.self_attend(tape, p, joint);
        let f_t = self.cross.attend(tape, p, h_t, h_v, h_v);
        let f_v = self.cross.attend(tape, p, h_v, h_t, h_t);
        let rows = [f_tv.output, f_t.output, f_v.output].map(|f| tape.row(f, 0));
        let summaries = tape.concat_cols(&rows);
        let feature = self.projection.forward(tape, p, summaries);
        TokenPatchOutput {
            feature,
            summaries,
            weights: [f_tv.weights, f_t.weights, f_v.weights],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn shapes_follow_concatenation() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let view = TokenPatchView::new(&mut store, 32, &mut rng);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let ht = tape.leaf(random(9, 32, &mut rng));
        let hv = tape.leaf(random(17, 32, &mut rng));
        let out = view.forward(&mut tape, &p, ht, hv);
        assert_eq!(tape.shape(out.weights[0]), (26, 26));
        assert_eq!(tape.shape(out.weights[1]), (9, 17));
        assert_eq!(tape.shape(out.weights[2]), (17, 9));
        assert_eq!(tape.shape(out.summaries), (1, 96));
        assert_eq!(tape.shape(out.feature), (1, 32));
    }

    #[test]
    fn query_direction_matters() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let view = TokenPatchView::new(&mut store, 4, &mut rng);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let ht = tape.leaf(random(3, 4, &mut rng));
        let hv = tape.leaf(random(3, 4, &mut rng));
        let out = view.forward(&mut tape, &p, ht, hv);
        let s = tape.value(out.summaries);
        assert_ne!(&s.data()[4..8], &s.data()[8..12]);
    }

    #[test]
    fn zero_inputs_give_projected_bias() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let view = TokenPatchView::new(&mut store, 4, &mut rng);
        for id in [
            view.cross.query.b,
            view.cross.key.b,
            view.cross.value.b,
            view.cross.output.b,
        ] {
            assert_eq!(store.get(id), &Matrix::zeros(1, 4));
        }
        *store.get_mut(view.projection.b) = Matrix::row_vector(vec![0.1, -0.2, 0.3, 0.0]);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let ht = tape.leaf(Matrix::zeros(2, 4));
        let hv = tape.leaf(Matrix::zeros(5, 4));
        let out = view.forward(&mut tape, &p, ht, hv);
        assert_eq!(tape.value(out.summaries), &Matrix::zeros(1, 12));
        assert_eq!(tape.value(out.feature).data(), &[0.1, -0.2, 0.3, 0.0]);
    }
}
