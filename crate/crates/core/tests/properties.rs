use micl::autograd::Tape;
use micl::checkpoint::Checkpoint;
use micl::data::augment::assign_by_ratio;
use micl::fusion::Evidence;
use micl::model::{MiclModel, ModelConfig};
use micl::objective::{contrastive_value, BatchEmbeddings};
use micl::training::Metrics;
use micl::views::{build_text_graph, build_visual_graph, WindowEdges};
use micl::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn sized_matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Two `B × d` embedding matrices with labels.
fn batch() -> impl Strategy<Value = (Matrix, Matrix, Vec<u8>)> {
    (2usize..=8, 1usize..=16).prop_flat_map(|(b, d)| {
        (
            matrix(b, d),
            matrix(b, d),
            prop::collection::vec(0u8..2, b),
        )
    })
}

fn nonzero_rows(m: &Matrix) -> bool {
    (0..m.rows()).all(|r| m.row(r).iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn credibility_identities(e0 in 0.0f64..1e6, e1 in 0.0f64..1e6) {
        let e = Evidence { e0, e1 };
        let c = e.credibility();
        prop_assert!((c.c - (e0 + e1) / (e0 + e1 + 2.0)).abs() <= 1e-12);
        prop_assert!((c.c + c.u - 1.0).abs() <= 1e-12);
        prop_assert!((c.belief[0] + c.belief[1] + c.u - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..1.0).contains(&c.c));
    }

    #[test]
    fn credibility_grows_with_evidence(e0 in 0.0f64..100.0, e1 in 0.0f64..100.0, extra in 0.01f64..10.0) {
        let base = Evidence { e0, e1 }.credibility().c;
        let more = Evidence { e0: e0 + extra, e1 }.credibility().c;
        prop_assert!(more > base);
    }

    #[test]
    fn logits_give_non_negative_evidence(z0 in -50.0f64..50.0, z1 in -50.0f64..50.0) {
        let e = Evidence::from_logits(z0, z1);
        prop_assert!(e.e0 >= 0.0 && e.e1 >= 0.0);
    }

    #[test]
    fn softmax_rows_are_distributions(m in sized_matrix(6, 8)) {
        let mut tape = Tape::new();
        let x = tape.leaf(m);
        let s = tape.softmax_rows(x);
        let s = tape.value(s);
        for r in 0..s.rows() {
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(s.row(r).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn masked_softmax_respects_mask(m in matrix(5, 5), bits in prop::collection::vec(any::<bool>(), 25)) {
        let mask: Vec<bool> = bits.iter().enumerate().map(|(k, &b)| b || k % 6 == 0).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(m);
        let s = tape.masked_softmax_rows(x, &mask);
        let s = tape.value(s);
        for r in 0..5 {
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for c in 0..5 {
                if !mask[r * 5 + c] {
                    prop_assert_eq!(s.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn visual_graph_is_symmetric_with_loops(m in sized_matrix(10, 6), threshold in -0.95f64..0.95) {
        let g = build_visual_graph(m, threshold).unwrap();
        prop_assert!(g.is_symmetric());
        prop_assert!(g.has_self_loops());
    }

    #[test]
    fn raising_the_threshold_drops_edges(m in sized_matrix(10, 6), lo in -0.9f64..0.0, hi in 0.0f64..0.9) {
        let loose = build_visual_graph(m.clone(), lo).unwrap();
        let tight = build_visual_graph(m, hi).unwrap();
        for (t, l) in tight.adjacency.iter().zip(&loose.adjacency) {
            prop_assert!(!t || *l);
        }
    }

    #[test]
    fn window_graph_links_near_tokens(n in 1usize..20) {
        let ids: Vec<u32> = (0..n as u32).collect();
        let g = build_text_graph(Matrix::zeros(n, 2), &ids, &WindowEdges::default()).unwrap();
        prop_assert!(g.is_symmetric() && g.has_self_loops());
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(g.connected(i, j), i.abs_diff(j) <= 2);
            }
        }
    }

    #[test]
    fn contrastive_ignores_positive_rescaling(
        (t, v, labels) in batch(),
        k in prop::collection::vec(0.01f64..100.0, 16),
    ) {
        prop_assume!(nonzero_rows(&t) && nonzero_rows(&v));
        let base = contrastive_value(&BatchEmbeddings::new(t.clone(), v.clone(), labels.clone()).unwrap(), 0.07).unwrap();
        let (mut t2, mut v2) = (t, v);
        for r in 0..t2.rows() {
            t2.row_mut(r).iter_mut().for_each(|x| *x *= k[r]);
            v2.row_mut(r).iter_mut().for_each(|x| *x *= k[8 + r]);
        }
        let scaled = contrastive_value(&BatchEmbeddings::new(t2, v2, labels).unwrap(), 0.07).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-10);
    }

    #[test]
    fn contrastive_is_permutation_invariant((t, v, labels) in batch(), shift in 1usize..8) {
        prop_assume!(nonzero_rows(&t) && nonzero_rows(&v));
        let b = labels.len();
        let order: Vec<usize> = (0..b).map(|i| (i + shift) % b).collect();
        let permute = |m: &Matrix| Matrix::from_rows(&order.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let labels2: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        let a = contrastive_value(&BatchEmbeddings::new(t.clone(), v.clone(), labels).unwrap(), 0.07).unwrap();
        let p = contrastive_value(&BatchEmbeddings::new(permute(&t), permute(&v), labels2).unwrap(), 0.07).unwrap();
        prop_assert!((a - p).abs() <= 1e-10);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn full_ratio_blocks_are_exact(blocks in 0usize..20, rest in 0usize..10, seed in any::<u64>()) {
        let ratio = [3, 3, 2, 2];
        let n = blocks * 10 + rest;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = assign_by_ratio(n, &ratio, &mut rng).unwrap();
        prop_assert_eq!(picks.len(), n);
        let mut counts = [0usize; 4];
        for &p in &picks[..blocks * 10] {
            counts[p] += 1;
        }
        prop_assert_eq!(counts, ratio.map(|r| r * blocks));
    }

    #[test]
    fn metrics_are_consistent(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)) {
        let (labels, predicted): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = Metrics::from_predictions(&labels, &predicted);
        let c = m.confusion;
        prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, labels.len());
        let hits = labels.iter().zip(&predicted).filter(|(a, b)| a == b).count();
        prop_assert!((m.accuracy - hits as f64 / labels.len() as f64).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>()) {
        let config = ModelConfig { dim: 4, ..ModelConfig::default() };
        let (_, store) = MiclModel::new(config.clone(), seed).unwrap();
        let ck = Checkpoint::capture(&config, &store).unwrap();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        let (_, restored) = back.restore().unwrap();
        for ((na, a), (nb, b)) in store.iter().zip(restored.iter()) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(a, b);
        }
    }
}
