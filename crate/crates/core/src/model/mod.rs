//! Graph Koopman autoencoder.
//!
//! ```text
//! x(t) --SAGE x3--> z(t) --encoder--> g(t) --K^k--> g(t+k) --decoder--> z --graph decoder--> x
//! ```
//!
//! The graph encoder maps each UAV's normalized coordinates to an embedding
//! and stacks the embeddings into `z`; the latent encoder/decoder pair lifts
//! `z` into the space where the Koopman matrix `K` advances time linearly.

pub mod layers;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::swarmgraph::GraphSnapshot;
use layers::{sage_layer_forward, stack_forward, Dense};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Standard deviation of the noise added to the identity when initializing `K`.
pub const KOOPMAN_INIT_STD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkaeHyper {
    #[serde(rename = "L")]
    pub num_uavs: usize,
    /// Per-node widths through the SAGE stack, input first.
    pub sage_widths: Vec<usize>,
    /// Latent encoder widths from `L * embedding` down to `b`; the decoder mirrors them.
    pub latent_widths: Vec<usize>,
    /// Koopman dimension.
    pub b: usize,
}

impl GkaeHyper {
    pub fn new(num_uavs: usize, b: usize) -> Self {
        Self::with_widths(num_uavs, b, &[32, 32, 8], &[64, 64])
    }

    /// `sage_hidden` lists the three SAGE output widths; `latent_hidden` the two
    /// hidden widths of the latent encoder.
    pub fn with_widths(num_uavs: usize, b: usize, sage_hidden: &[usize], latent_hidden: &[usize]) -> Self {
        let mut sage_widths = vec![3];
        sage_widths.extend_from_slice(sage_hidden);
        let embed = sage_widths.last().copied().unwrap_or(3);
        let mut latent_widths = vec![num_uavs * embed];
        latent_widths.extend_from_slice(latent_hidden);
        latent_widths.push(b);
        Self { num_uavs, sage_widths, latent_widths, b }
    }

    pub fn embedding_dim(&self) -> usize {
        *self.sage_widths.last().expect("validated")
    }

    pub fn latent_input_dim(&self) -> usize {
        self.num_uavs * self.embedding_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_uavs == 0 || self.b == 0 {
            return Err(invalid("L and b must be positive"));
        }
        if self.sage_widths.len() != 4 || self.sage_widths[0] != 3 {
            return Err(invalid("the graph encoder has exactly 3 SAGE layers over 3 input features"));
        }
        if self.latent_widths.len() != 4 {
            return Err(invalid("the latent encoder has exactly 3 fully-connected layers"));
        }
        if self.latent_widths[0] != self.latent_input_dim() {
            return Err(Error::Dimension {
                context: "latent encoder input",
                expected: self.latent_input_dim(),
                got: self.latent_widths[0],
            });
        }
        if self.latent_widths[3] != self.b {
            return Err(Error::Dimension { context: "Koopman dimension", expected: self.b, got: self.latent_widths[3] });
        }
        if self.sage_widths.iter().chain(&self.latent_widths).any(|&w| w == 0) {
            return Err(invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

/// All trainable weights. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct GkaeParams {
    pub hyper: GkaeHyper,
    /// Layer `i` maps `2 * sage_widths[i]` (self || neighbor mean) to `sage_widths[i + 1]`.
    pub sage: Vec<Dense>,
    /// Shared per-node map from an embedding block back to 3 coordinates.
    pub graph_decoder: Dense,
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    /// b x b, no bias.
    pub koopman: Array2<f64>,
}

impl GkaeParams {
    pub fn zeros(hyper: &GkaeHyper) -> Result<Self> {
        hyper.validate()?;
        let sage = hyper.sage_widths.windows(2).map(|w| Dense::zeros(2 * w[0], w[1])).collect();
        let encoder = hyper.latent_widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        let decoder = hyper.latent_widths.windows(2).rev().map(|w| Dense::zeros(w[1], w[0])).collect();
        Ok(Self {
            hyper: hyper.clone(),
            sage,
            graph_decoder: Dense::zeros(hyper.embedding_dim(), 3),
            encoder,
            decoder,
            koopman: Array2::zeros((hyper.b, hyper.b)),
        })
    }

    /// Uniform fan-in weights, zero biases, `K = I + N(0, 0.01^2)`.
    pub fn init(hyper: &GkaeHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sage = hyper.sage_widths.windows(2).map(|w| Dense::uniform(2 * w[0], w[1], &mut rng)).collect();
        let graph_decoder = Dense::uniform(hyper.embedding_dim(), 3, &mut rng);
        let encoder = hyper.latent_widths.windows(2).map(|w| Dense::uniform(w[0], w[1], &mut rng)).collect();
        let decoder = hyper.latent_widths.windows(2).rev().map(|w| Dense::uniform(w[1], w[0], &mut rng)).collect();
        let noise = Normal::new(0.0, KOOPMAN_INIT_STD).expect("valid std");
        let koopman = Array2::from_shape_fn((hyper.b, hyper.b), |(i, j)| {
            let n = noise.sample(&mut rng);
            if i == j {
                1.0 + n
            } else {
                n
            }
        });
        Ok(Self { hyper: hyper.clone(), sage, graph_decoder, encoder, decoder, koopman })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.hyper).expect("hyper already validated")
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        fn dense<'a>(prefix: String, d: &'a Dense, out: &mut Vec<(String, &'a [f64])>) {
            out.push((format!("{prefix}.weight"), d.weight.as_slice().expect("standard layout")));
            out.push((format!("{prefix}.bias"), d.bias.as_slice().expect("standard layout")));
        }
        for (i, d) in self.sage.iter().enumerate() {
            dense(format!("sage.{i}"), d, &mut out);
        }
        dense("graph_decoder".into(), &self.graph_decoder, &mut out);
        for (i, d) in self.encoder.iter().enumerate() {
            dense(format!("encoder.{i}"), d, &mut out);
        }
        for (i, d) in self.decoder.iter().enumerate() {
            dense(format!("decoder.{i}"), d, &mut out);
        }
        out.push(("koopman".into(), self.koopman.as_slice().expect("standard layout")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        fn dense<'a>(prefix: String, d: &'a mut Dense, out: &mut Vec<(String, &'a mut [f64])>) {
            out.push((format!("{prefix}.weight"), d.weight.as_slice_mut().expect("standard layout")));
            out.push((format!("{prefix}.bias"), d.bias.as_slice_mut().expect("standard layout")));
        }
        for (i, d) in self.sage.iter_mut().enumerate() {
            dense(format!("sage.{i}"), d, &mut out);
        }
        dense("graph_decoder".into(), &mut self.graph_decoder, &mut out);
        for (i, d) in self.encoder.iter_mut().enumerate() {
            dense(format!("encoder.{i}"), d, &mut out);
        }
        for (i, d) in self.decoder.iter_mut().enumerate() {
            dense(format!("decoder.{i}"), d, &mut out);
        }
        out.push(("koopman".into(), self.koopman.as_slice_mut().expect("standard layout")));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn save<W: Write>(&self, writer: W, seed: u64) -> Result<()> {
        let weights: BTreeMap<String, Vec<f64>> =
            self.tensors().into_iter().map(|(name, t)| (name, t.to_vec())).collect();
        let file = CheckpointFile { version: CHECKPOINT_VERSION, hyper: self.hyper.clone(), seed, weights };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    /// Returns the parameters and the seed they were trained with.
    pub fn load<R: Read>(mut reader: R) -> Result<(Self, u64)> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let probe: VersionProbe =
            serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("checkpoint header: {e}")))?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: probe.version, expected: CHECKPOINT_VERSION });
        }
        let mut file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut params = Self::zeros(&file.hyper)?;
        for (name, slot) in params.tensors_mut() {
            let values = file
                .weights
                .remove(&name)
                .ok_or_else(|| Error::Malformed(format!("checkpoint is missing `{name}`")))?;
            if values.len() != slot.len() {
                return Err(Error::Malformed(format!("`{name}` has {} values, expected {}", values.len(), slot.len())));
            }
            slot.copy_from_slice(&values);
        }
        if let Some(extra) = file.weights.keys().next() {
            return Err(Error::Malformed(format!("unexpected tensor `{extra}`")));
        }
        Ok((params, file.seed))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    hyper: GkaeHyper,
    seed: u64,
    weights: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// Stacked node embeddings `z` and their Koopman observables `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub z: Array1<f64>,
    pub g: Array1<f64>,
}

fn check_adjacency(adjacency: &[Vec<bool>], nodes: usize) -> Result<Vec<Vec<usize>>> {
    if adjacency.len() != nodes {
        return Err(Error::Dimension { context: "adjacency rows", expected: nodes, got: adjacency.len() });
    }
    let mut lists = Vec::with_capacity(nodes);
    for (k, row) in adjacency.iter().enumerate() {
        if row.len() != nodes {
            return Err(Error::Dimension { context: "adjacency columns", expected: nodes, got: row.len() });
        }
        if row[k] || (0..nodes).any(|l| row[l] != adjacency[l][k]) {
            return Err(invalid("adjacency must be symmetric with zero diagonal"));
        }
        lists.push(row.iter().enumerate().filter_map(|(l, &a)| a.then_some(l)).collect());
    }
    Ok(lists)
}

/// One SAGE layer with neighbor-mean aggregation and ELU.
pub fn sage_forward(layer: &Dense, features: &Array2<f64>, adjacency: &[Vec<bool>]) -> Result<Array2<f64>> {
    if layer.input_dim() != 2 * features.ncols() {
        return Err(Error::Dimension { context: "SAGE layer input", expected: layer.input_dim() / 2, got: features.ncols() });
    }
    let lists = check_adjacency(adjacency, features.nrows())?;
    Ok(sage_layer_forward(layer, features, &[lists], features.nrows()).out)
}

/// Runs the SAGE stack and stacks the per-node embeddings.
pub fn graph_encode(features: &Array2<f64>, adjacency: &[Vec<bool>], params: &GkaeParams) -> Result<Array1<f64>> {
    let hyper = &params.hyper;
    if features.dim() != (hyper.num_uavs, 3) {
        return Err(Error::Dimension { context: "graph features", expected: hyper.num_uavs * 3, got: features.len() });
    }
    let lists = check_adjacency(adjacency, hyper.num_uavs)?;
    let graphs = [lists];
    let mut h = features.clone();
    for layer in &params.sage {
        h = sage_layer_forward(layer, &h, &graphs, hyper.num_uavs).out;
    }
    Ok(Array1::from_iter(h.iter().copied()))
}

fn check_len(v: &ArrayView1<f64>, expected: usize, context: &'static str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension { context, expected, got: v.len() });
    }
    Ok(())
}

fn stack_apply(layers: &[Dense], v: &ArrayView1<f64>) -> Array1<f64> {
    let x = v.to_owned().insert_axis(Axis(0));
    stack_forward(layers, x).output().row(0).to_owned()
}

/// Latent encoder: stacked embeddings to Koopman observables.
pub fn kae_encode(z: &ArrayView1<f64>, params: &GkaeParams) -> Result<Array1<f64>> {
    check_len(z, params.hyper.latent_input_dim(), "latent encoder input")?;
    Ok(stack_apply(&params.encoder, z))
}

/// Latent decoder: Koopman observables back to stacked embeddings.
pub fn kae_decode(g: &ArrayView1<f64>, params: &GkaeParams) -> Result<Array1<f64>> {
    check_len(g, params.hyper.b, "latent decoder input")?;
    Ok(stack_apply(&params.decoder, g))
}

/// Applies the shared per-node decoder to every embedding block of `z`.
pub fn graph_decode(z: &ArrayView1<f64>, params: &GkaeParams) -> Result<Array2<f64>> {
    let hyper = &params.hyper;
    check_len(z, hyper.latent_input_dim(), "graph decoder input")?;
    let blocks = z.to_owned().into_shape_with_order((hyper.num_uavs, hyper.embedding_dim())).expect("length checked");
    Ok(params.graph_decoder.affine(&blocks.view()))
}

/// `K^k g` by repeated multiplication.
pub fn koopman_advance(g: &ArrayView1<f64>, koopman: &Array2<f64>, k: usize) -> Array1<f64> {
    let mut out = g.to_owned();
    for _ in 0..k {
        out = koopman.dot(&out);
    }
    out
}

pub fn encode_snapshot(snapshot: &GraphSnapshot, params: &GkaeParams) -> Result<LatentState> {
    let z = graph_encode(&snapshot.feature_matrix(), &snapshot.adjacency, params)?;
    let g = kae_encode(&z.view(), params)?;
    Ok(LatentState { z, g })
}

/// Predicted normalized features for `t = 2..=p`, starting from `snapshot` as
/// `t = 1`. Only the first snapshot's adjacency is used.
pub fn rollout(snapshot: &GraphSnapshot, params: &GkaeParams, p: usize) -> Result<Vec<Array2<f64>>> {
    if p < 2 {
        return Err(invalid("rollout horizon must be at least 2"));
    }
    let g1 = encode_snapshot(snapshot, params)?.g;
    let mut g = g1;
    let mut out = Vec::with_capacity(p - 1);
    for _ in 2..=p {
        g = params.koopman.dot(&g);
        let z = kae_decode(&g.view(), params)?;
        out.push(graph_decode(&z.view(), params)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_hyper() -> GkaeHyper {
        GkaeHyper::with_widths(2, 2, &[4, 4, 3], &[5, 5])
    }

    fn identity_layer(d: usize) -> Dense {
        // W = [I | I]
        let mut layer = Dense::zeros(2 * d, d);
        for i in 0..d {
            layer.weight[[i, i]] = 1.0;
            layer.weight[[i, d + i]] = 1.0;
        }
        layer
    }

    #[test]
    fn default_hyper_is_valid() {
        let h = GkaeHyper::new(4, 10);
        h.validate().unwrap();
        assert_eq!(h.sage_widths, vec![3, 32, 32, 8]);
        assert_eq!(h.latent_widths, vec![32, 64, 64, 10]);
    }

    #[test]
    fn sage_zero_weights() {
        let layer = Dense::zeros(6, 4);
        let out = sage_forward(&layer, &array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], &[vec![false, true], vec![true, false]])
            .unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sage_two_mutual_neighbors() {
        // Positive entries so ELU is the identity on the pre-activation.
        let a = [0.1, 0.2, 0.3];
        let b = [0.5, 0.7, 1.1];
        let feats = array![[a[0], a[1], a[2]], [b[0], b[1], b[2]]];
        let out = sage_forward(&identity_layer(3), &feats, &[vec![false, true], vec![true, false]]).unwrap();
        for node in 0..2 {
            for c in 0..3 {
                assert!((out[[node, c]] - (a[c] + b[c])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sage_isolated_node_keeps_its_features() {
        let feats = array![[0.1, 0.2, 0.3]];
        let out = sage_forward(&identity_layer(3), &feats, &[vec![false]]).unwrap();
        assert_eq!(out, feats);
    }

    #[test]
    fn sage_dimension_mismatch() {
        assert!(sage_forward(&Dense::zeros(4, 4), &array![[1.0, 2.0, 3.0]], &[vec![false]]).is_err());
    }

    #[test]
    fn pipeline_shapes() {
        for (l, b) in [(1, 1), (2, 2), (4, 10), (5, 3)] {
            let params = GkaeParams::init(&GkaeHyper::new(l, b), 3).unwrap();
            let feats = Array2::from_elem((l, 3), 0.3);
            let adj: Vec<Vec<bool>> = (0..l).map(|k| (0..l).map(|j| j != k).collect()).collect();
            let z = graph_encode(&feats, &adj, &params).unwrap();
            assert_eq!(z.len(), l * 8);
            let g = kae_encode(&z.view(), &params).unwrap();
            assert_eq!(g.len(), b);
            let z_hat = kae_decode(&g.view(), &params).unwrap();
            assert_eq!(z_hat.len(), l * 8);
            assert_eq!(graph_decode(&z_hat.view(), &params).unwrap().dim(), (l, 3));
        }
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let params = GkaeParams::zeros(&tiny_hyper()).unwrap();
        let z = graph_encode(&Array2::zeros((2, 3)), &[vec![false, true], vec![true, false]], &params).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let feats = array![[0.3, 0.4, 0.9], [0.6, 0.1, 0.9]];
        let z = graph_encode(&feats, &[vec![false, true], vec![true, false]], &params).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(kae_encode(&z.view(), &params).unwrap().iter().all(|&v| v == 0.0));
        assert!(kae_decode(&array![1.0, -2.0].view(), &params).unwrap().iter().all(|&v| v == 0.0));
        assert!(graph_decode(&z.view(), &params).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn koopman_advance_cases() {
        let g = array![0.3, -1.2];
        let eye = Array2::eye(2);
        for k in 0..5 {
            assert_eq!(koopman_advance(&g.view(), &eye, k), g);
        }
        let rot = |t: f64| array![[t.cos(), -t.sin()], [t.sin(), t.cos()]];
        let out = koopman_advance(&g.view(), &rot(std::f64::consts::FRAC_PI_4), 4);
        let expected = rot(std::f64::consts::PI).dot(&g);
        assert!((&out - &expected).iter().all(|d| d.abs() < 1e-12));
        assert_eq!(koopman_advance(&g.view(), &rot(0.3), 0), g);
    }

    #[test]
    fn rollout_is_the_composition() {
        let params = GkaeParams::init(&GkaeHyper::new(3, 4), 5).unwrap();
        let snap = GraphSnapshot {
            t: 0,
            features: vec![[0.2, 0.3, 0.9], [0.5, 0.5, 0.9], [0.8, 0.1, 0.9]],
            adjacency: vec![vec![false, true, false], vec![true, false, true], vec![false, true, false]],
        };
        let preds = rollout(&snap, &params, 6).unwrap();
        assert_eq!(preds.len(), 5);
        let g1 = encode_snapshot(&snap, &params).unwrap().g;
        for (i, pred) in preds.iter().enumerate() {
            let t = i + 2;
            let g = koopman_advance(&g1.view(), &params.koopman, t - 1);
            let expected = graph_decode(&kae_decode(&g.view(), &params).unwrap().view(), &params).unwrap();
            assert!((pred - &expected).iter().all(|d| d.abs() < 1e-12));
        }
        assert!(rollout(&snap, &params, 1).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let params = GkaeParams::init(&GkaeHyper::new(4, 10), 11).unwrap();
        let mut buf = Vec::new();
        params.save(&mut buf, 11).unwrap();
        let (back, seed) = GkaeParams::load(buf.as_slice()).unwrap();
        assert_eq!(seed, 11);
        assert_eq!(back, params);
        for ((_, a), (_, b)) in back.tensors().iter().zip(params.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn checkpoint_errors() {
        let params = GkaeParams::init(&tiny_hyper(), 1).unwrap();
        let mut buf = Vec::new();
        params.save(&mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(matches!(
            GkaeParams::load(text.replacen("\"version\":1", "\"version\":2", 1).as_bytes()),
            Err(Error::Version { found: 2, .. })
        ));
        assert!(matches!(
            GkaeParams::load(text.replacen("\"koopman\"", "\"koopmann\"", 1).as_bytes()),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn init_is_near_identity_koopman_and_deterministic() {
        let h = GkaeHyper::new(4, 10);
        let a = GkaeParams::init(&h, 9).unwrap();
        assert_eq!(a, GkaeParams::init(&h, 9).unwrap());
        assert_ne!(a, GkaeParams::init(&h, 10).unwrap());
        let dev = &a.koopman - &Array2::<f64>::eye(10);
        assert!(dev.iter().all(|d| d.abs() < 0.06));
        assert!(a.all_finite());
    }
}
