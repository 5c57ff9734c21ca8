//! Trainable building blocks shared by the encoders, views and fusion.

use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::params::{BoundParams, ParamId, ParamStore};

/// `y = x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w: store.add_uniform(format!("{name}.w"), d_in, d_out, d_in, rng),
            b: store.add_zeros(format!("{name}.b"), 1, d_out),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Var {
        let xw = tape.matmul(x, p.var(self.w));
        tape.add_row(xw, p.var(self.b))
    }
}

/// Single-head scaled dot-product attention with a residual connection on
/// the query side and no positional term.
#[derive(Debug, Clone)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub dim: usize,
}

/// Result of one attention application.
#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    /// `Lq × d`, residual included.
    pub output: Var,
    /// `Lq × Lk` row-stochastic weights.
    pub weights: Var,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            dim,
        }
    }

    /// Queries from `query` attend over `keys`/`values`.
    pub fn attend(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        query: Var,
        keys: Var,
        values: Var,
    ) -> AttentionOutput {
        let q = self.query.forward(tape, p, query);
        let k = self.key.forward(tape, p, keys);
        let v = self.value.forward(tape, p, values);
        let scores = tape.matmul_t(q, k);
        let scaled = tape.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let weights = tape.softmax_rows(scaled);
        let mixed = tape.matmul(weights, v);
        let projected = self.output.forward(tape, p, mixed);
        let output = tape.add(query, projected);
        AttentionOutput { output, weights }
    }

    pub fn self_attend(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> AttentionOutput {
        self.attend(tape, p, x, x, x)
    }
}

/// Two-layer perceptron with a tanh hidden layer.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub hidden: Linear,
    pub out: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), d_in, d_hidden, rng),
            out: Linear::new(store, &format!("{name}.out"), d_hidden, d_out, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Var {
        let h = self.hidden.forward(tape, p, x);
        let h = tape.tanh(h);
        self.out.forward(tape, p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::{Rng, SeedableRng};

    fn layer(d: usize, seed: u64) -> (ParamStore, Attention) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Attention::new(&mut store, "att", d, &mut rng);
        (store, a)
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn single_row_attends_to_itself() {
        let (store, att) = layer(4, 1);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.leaf(Matrix::row_vector(vec![0.5, -1.0, 2.0, 0.0]));
        let out = att.self_attend(&mut tape, &p, x);
        assert_eq!(tape.value(out.weights), &Matrix::scalar(1.0));
    }

    #[test]
    fn single_key_gives_unit_weights() {
        let (store, att) = layer(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let q = tape.leaf(random(5, 4, &mut rng));
        let kv = tape.leaf(random(1, 4, &mut rng));
        let out = att.attend(&mut tape, &p, q, kv, kv);
        assert_eq!(tape.value(out.weights), &Matrix::filled(5, 1, 1.0));
    }

    #[test]
    fn identical_keys_return_residual_plus_value() {
        let (store, att) = layer(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q_val = random(1, 4, &mut rng);
        let row = random(1, 4, &mut rng);
        let kv_val = Matrix::from_rows(&[row.row(0).to_vec(), row.row(0).to_vec(), row.row(0).to_vec()]).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let q = tape.leaf(q_val.clone());
        let kv = tape.leaf(kv_val);
        let out = att.attend(&mut tape, &p, q, kv, kv);
        let value = |lin: &Linear, x: &Matrix| {
            let mut y = x.matmul(store.get(lin.w));
            y.add_assign(store.get(lin.b));
            y
        };
        let mut expected = value(&att.output, &value(&att.value, &row));
        expected.add_assign(&q_val);
        for (a, b) in tape.value(out.output).data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_duplicate_rows_swaps_outputs() {
        let (store, att) = layer(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let base = random(2, 4, &mut rng);
        let dup = base.row(0).to_vec();
        let x = Matrix::from_rows(&[dup.clone(), base.row(1).to_vec(), dup]).unwrap();
        let permuted = Matrix::from_rows(&[x.row(2).to_vec(), x.row(1).to_vec(), x.row(0).to_vec()]).unwrap();
        let run = |m: &Matrix| {
            let mut tape = Tape::new();
            let p = store.bind(&mut tape);
            let v = tape.leaf(m.clone());
            let out = att.self_attend(&mut tape, &p, v);
            tape.value(out.output).clone()
        };
        let (a, b) = (run(&x), run(&permuted));
        for (r, pr) in [(0, 2), (1, 1), (2, 0)] {
            for (u, v) in a.row(r).iter().zip(b.row(pr)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let (store, att) = layer(6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let q = tape.leaf(random(4, 6, &mut rng));
        let k = tape.leaf(random(7, 6, &mut rng));
        let out = att.attend(&mut tape, &p, q, k, k);
        let w = tape.value(out.weights);
        for r in 0..4 {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
