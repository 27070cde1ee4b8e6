//! Test-only reference implementation of the model forward pass with plain
//! loops over `Vec<f64>`, independent of the ndarray code paths.

#![allow(dead_code)]

use gkae_core::model::layers::Dense;
use gkae_core::model::{GkaeHyper, GkaeParams};
use gkae_core::swarmgraph::GraphSnapshot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn affine(layer: &Dense, x: &[f64]) -> Vec<f64> {
    let (out, inp) = layer.weight.dim();
    assert_eq!(inp, x.len());
    (0..out)
        .map(|i| layer.bias[i] + (0..inp).map(|j| layer.weight[[i, j]] * x[j]).sum::<f64>())
        .collect()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn mlp(layers: &[Dense], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        h = affine(layer, &h);
        if i + 1 < layers.len() {
            h = h.into_iter().map(f64::tanh).collect();
        }
    }
    h
}

pub fn encode_z(snap: &GraphSnapshot, p: &GkaeParams) -> Vec<f64> {
    let l = snap.features.len();
    let mut h: Vec<Vec<f64>> = snap.features.iter().map(|r| r.to_vec()).collect();
    for layer in &p.sage {
        let d = h[0].len();
        let mut next = Vec::with_capacity(l);
        for k in 0..l {
            let nbrs: Vec<usize> = (0..l).filter(|&j| snap.adjacency[k][j]).collect();
            let mut agg = vec![0.0; d];
            for &j in &nbrs {
                for c in 0..d {
                    agg[c] += h[j][c] / nbrs.len() as f64;
                }
            }
            let mut cat = h[k].clone();
            cat.extend(agg);
            next.push(affine(layer, &cat).into_iter().map(elu).collect());
        }
        h = next;
    }
    h.concat()
}

pub fn encode_g(z: &[f64], p: &GkaeParams) -> Vec<f64> {
    mlp(&p.encoder, z)
}

pub fn decode_z(g: &[f64], p: &GkaeParams) -> Vec<f64> {
    mlp(&p.decoder, g)
}

pub fn decode_x(z: &[f64], p: &GkaeParams) -> Vec<f64> {
    let e = p.graph_decoder.weight.ncols();
    z.chunks(e).flat_map(|block| affine(&p.graph_decoder, block)).collect()
}

pub fn advance(g: &[f64], p: &GkaeParams, k: usize) -> Vec<f64> {
    let b = g.len();
    let mut out = g.to_vec();
    for _ in 0..k {
        out = (0..b).map(|i| (0..b).map(|j| p.koopman[[i, j]] * out[j]).sum()).collect();
    }
    out
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rec_loss(window: &[GraphSnapshot], p: &GkaeParams) -> f64 {
    window
        .iter()
        .map(|s| {
            let z = encode_z(s, p);
            let x: Vec<f64> = s.features.iter().flat_map(|r| r.iter().copied()).collect();
            sq(&x, &decode_x(&z, p)) + sq(&z, &decode_z(&encode_g(&z, p), p))
        })
        .sum()
}

pub fn pred_loss(window: &[GraphSnapshot], p: &GkaeParams, s_p: usize) -> f64 {
    let g1 = encode_g(&encode_z(&window[0], p), p);
    (2..=s_p)
        .map(|t| {
            let gt = encode_g(&encode_z(&window[t - 1], p), p);
            sq(&decode_z(&gt, p), &decode_z(&advance(&g1, p, t - 1), p))
        })
        .sum()
}

/// Tiny model: L = 2, b = 2, narrow layers, random non-zero biases.
pub fn tiny_params(seed: u64) -> GkaeParams {
    let hyper = GkaeHyper::with_widths(2, 2, &[4, 4, 3], &[5, 5]);
    let mut params = GkaeParams::init(&hyper, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (name, t) in params.tensors_mut() {
        if name.ends_with("bias") {
            for v in t.iter_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        if name == "koopman" {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
    }
    params
}

/// A short random window over two UAVs; the middle snapshot has no edge.
pub fn tiny_window(len: usize, seed: u64) -> Vec<GraphSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|t| {
            let linked = t % 3 != 1;
            GraphSnapshot {
                t,
                features: (0..2).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.9]).collect(),
                adjacency: vec![vec![false, linked], vec![linked, false]],
            }
        })
        .collect()
}
