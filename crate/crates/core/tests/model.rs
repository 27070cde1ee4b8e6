mod common;

use gkae_core::model::{graph_encode, koopman_advance, GkaeHyper, GkaeParams};
use gkae_core::swarmgraph::GraphSnapshot;
use gkae_core::train::{epsilon_pred, total_loss, TrainConfig};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn norm(a: &Array1<f64>) -> f64 {
    a.dot(a).sqrt()
}

fn arb_koopman() -> impl Strategy<Value = (Array2<f64>, Array1<f64>, Array1<f64>)> {
    (1usize..10).prop_flat_map(|b| {
        (
            prop::collection::vec(-1.0f64..1.0, b * b),
            prop::collection::vec(-2.0f64..2.0, b),
            prop::collection::vec(-2.0f64..2.0, b),
        )
            .prop_map(move |(k, g1, g2)| {
                // Scale so the spectral radius stays near one.
                let k = Array2::from_shape_vec((b, b), k).unwrap() / (b as f64).sqrt();
                (k, Array1::from(g1), Array1::from(g2))
            })
    })
}

fn permute_nodes(snap: &GraphSnapshot, perm: &[usize]) -> GraphSnapshot {
    // Node perm[i] of the new snapshot is node i of the old one.
    let l = perm.len();
    let mut features = vec![[0.0; 3]; l];
    let mut adjacency = vec![vec![false; l]; l];
    for i in 0..l {
        features[perm[i]] = snap.features[i];
        for j in 0..l {
            adjacency[perm[i]][perm[j]] = snap.adjacency[i][j];
        }
    }
    GraphSnapshot { t: snap.t, features, adjacency }
}

fn random_snapshot(l: usize, feats: &[f64], links: &[bool]) -> GraphSnapshot {
    let mut adjacency = vec![vec![false; l]; l];
    let mut n = 0;
    for i in 0..l {
        for j in i + 1..l {
            adjacency[i][j] = links[n];
            adjacency[j][i] = links[n];
            n += 1;
        }
    }
    GraphSnapshot { t: 0, features: (0..l).map(|i| [feats[3 * i], feats[3 * i + 1], feats[3 * i + 2]]).collect(), adjacency }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn advance_is_linear((k, g1, g2) in arb_koopman(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, steps in 0usize..25) {
        let lhs = koopman_advance(&(&g1 * alpha + &g2 * beta).view(), &k, steps);
        let a1 = koopman_advance(&g1.view(), &k, steps);
        let a2 = koopman_advance(&g2.view(), &k, steps);
        let rhs = &a1 * alpha + &a2 * beta;
        let scale = alpha.abs() * norm(&a1) + beta.abs() * norm(&a2);
        prop_assert!(norm(&(&lhs - &rhs)) <= 1e-9 * scale.max(1e-300));
    }

    #[test]
    fn advance_composes((k, g, _) in arb_koopman(), a in 0usize..15, b in 0usize..15) {
        let two = koopman_advance(&koopman_advance(&g.view(), &k, a).view(), &k, b);
        let one = koopman_advance(&g.view(), &k, a + b);
        prop_assert!(norm(&(&two - &one)) <= 1e-9 * norm(&one).max(1e-300));
    }

    #[test]
    fn graph_encoding_is_node_equivariant(
        feats in prop::collection::vec(0.0f64..1.0, 15),
        links in prop::collection::vec(any::<bool>(), 10),
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        seed in 0u64..100,
    ) {
        let params = GkaeParams::init(&GkaeHyper::new(5, 4), seed).unwrap();
        let snap = random_snapshot(5, &feats, &links);
        let moved = permute_nodes(&snap, &perm);
        let z = graph_encode(&snap.feature_matrix(), &snap.adjacency, &params).unwrap();
        let zp = graph_encode(&moved.feature_matrix(), &moved.adjacency, &params).unwrap();
        let e = params.hyper.embedding_dim();
        for i in 0..5 {
            for c in 0..e {
                prop_assert!((z[i * e + c] - zp[perm[i] * e + c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn loss_is_invariant_under_consistent_relabeling(
        feats in prop::collection::vec(0.0f64..1.0, 12 * 4),
        links in prop::collection::vec(any::<bool>(), 6 * 4),
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        seed in 0u64..100,
    ) {
        let params = GkaeParams::init(&GkaeHyper::with_widths(4, 3, &[6, 6, 4], &[9, 9]), seed).unwrap();
        let window: Vec<GraphSnapshot> = (0..4)
            .map(|t| random_snapshot(4, &feats[12 * t..12 * (t + 1)], &links[6 * t..6 * (t + 1)]))
            .collect();
        let moved: Vec<GraphSnapshot> = window.iter().map(|s| permute_nodes(s, &perm)).collect();

        // The latent encoder reads the stacked per-node embedding, so its
        // input columns and the decoder's output rows move with the nodes.
        let e = params.hyper.embedding_dim();
        let mut relabeled = params.clone();
        let last = relabeled.decoder.len() - 1;
        for i in 0..4 {
            for c in 0..e {
                let (src, dst) = (i * e + c, perm[i] * e + c);
                relabeled.encoder[0].weight.column_mut(dst).assign(&params.encoder[0].weight.column(src));
                relabeled.decoder[last].weight.row_mut(dst).assign(&params.decoder[last].weight.row(src));
                relabeled.decoder[last].bias[dst] = params.decoder[last].bias[src];
            }
        }
        let cfg = TrainConfig { s_p: 3, b: 3, ..TrainConfig::default() };
        let a = total_loss(&window, &params, &cfg).unwrap();
        let b = total_loss(&moved, &relabeled, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}

#[test]
fn epsilon_of_a_constant_predictor_on_a_line() {
    // One UAV moving by (dx, dy) per step; the model always predicts the start.
    let (dx, dy) = (0.003, -0.002);
    let start = [0.2, 0.6, 0.9];
    let snaps: Vec<GraphSnapshot> = (0..100)
        .map(|t| GraphSnapshot {
            t,
            features: vec![[start[0] + t as f64 * dx, start[1] + t as f64 * dy, start[2]]],
            adjacency: vec![vec![false]],
        })
        .collect();
    let mut params = GkaeParams::zeros(&GkaeHyper::with_widths(1, 2, &[4, 4, 3], &[5, 5])).unwrap();
    params.graph_decoder.bias = Array1::from(start.to_vec());
    for p in [2usize, 10, 80] {
        let pf = p as f64;
        let expected = (dx * dx + dy * dy) * pf * (2.0 * pf - 1.0) / 18.0;
        let got = epsilon_pred(&params, &snaps, p).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected, "p={p}: {got} vs {expected}");
    }
    assert!(epsilon_pred(&params, &snaps, 101).is_err());
    assert!(epsilon_pred(&params, &snaps, 1).is_err());
}

#[test]
fn perfect_predictor_has_zero_epsilon() {
    let point = [0.4, 0.4, 0.9];
    let snaps: Vec<GraphSnapshot> =
        (0..10).map(|t| GraphSnapshot { t, features: vec![point; 3], adjacency: vec![vec![false; 3]; 3] }).collect();
    let mut params = GkaeParams::zeros(&GkaeHyper::with_widths(3, 2, &[4, 4, 3], &[5, 5])).unwrap();
    params.graph_decoder.bias = Array1::from(point.to_vec());
    assert_eq!(epsilon_pred(&params, &snaps, 10).unwrap(), 0.0);
}
