//! Dense and mean-aggregation SAGE layers with explicit backward passes.
//!
//! Row-major batches throughout: one row per sample (or per graph node).

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative in terms of the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }
}

/// Affine map `y = W x + b` with `W` stored as (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    /// Weights uniform in +-1/sqrt(fan_in), zero bias.
    pub fn uniform(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || rng.random_range(-bound..bound));
        Self { weight, bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Pre-activation for a batch of rows.
    pub fn affine(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
    pub fn backward(&self, x: &ArrayView2<f64>, d_pre: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.weight += &d_pre.t().dot(x);
        grad.bias += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.weight)
    }
}

fn activate(pre: &Array2<f64>, act: Activation) -> Array2<f64> {
    pre.mapv(|x| act.apply(x))
}

fn activation_backward(pre: &Array2<f64>, out: &Array2<f64>, d_out: &Array2<f64>, act: Activation) -> Array2<f64> {
    let mut d_pre = d_out.clone();
    if act != Activation::Identity {
        Zip::from(&mut d_pre).and(pre).and(out).for_each(|d, &x, &y| *d *= act.derivative(x, y));
    }
    d_pre
}

/// Activations of a fully-connected stack, kept for the backward pass.
pub struct StackTrace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
    acts: Vec<Activation>,
}

impl StackTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("non-empty stack")
    }
}

/// Activation of layer `i` in an `n`-layer stack: tanh on hidden layers,
/// identity on the last one.
pub fn stack_activation(i: usize, n: usize) -> Activation {
    if i + 1 == n {
        Activation::Identity
    } else {
        Activation::Tanh
    }
}

pub fn stack_forward(layers: &[Dense], x: Array2<f64>) -> StackTrace {
    let n = layers.len();
    let mut trace = StackTrace {
        inputs: Vec::with_capacity(n),
        pre: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
        acts: Vec::with_capacity(n),
    };
    let mut current = x;
    for (i, layer) in layers.iter().enumerate() {
        let act = stack_activation(i, n);
        let pre = layer.affine(&current.view());
        let out = activate(&pre, act);
        trace.inputs.push(current);
        trace.pre.push(pre);
        trace.acts.push(act);
        current = out.clone();
        trace.outputs.push(out);
    }
    trace
}

pub fn stack_backward(layers: &[Dense], trace: &StackTrace, d_out: Array2<f64>, grads: &mut [Dense]) -> Array2<f64> {
    let mut d = d_out;
    for i in (0..layers.len()).rev() {
        let d_pre = activation_backward(&trace.pre[i], &trace.outputs[i], &d, trace.acts[i]);
        d = layers[i].backward(&trace.inputs[i].view(), &d_pre, &mut grads[i]);
    }
    d
}

/// Mean of neighbor rows for a batch of graphs stacked block-wise
/// (`nodes` rows per graph). Isolated nodes aggregate to zero.
pub fn mean_aggregate(h: &Array2<f64>, graphs: &[Vec<Vec<usize>>], nodes: usize) -> Array2<f64> {
    let mut m = Array2::zeros(h.raw_dim());
    for (g, nbrs) in graphs.iter().enumerate() {
        let base = g * nodes;
        for (k, set) in nbrs.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let inv = 1.0 / set.len() as f64;
            let mut row = m.row_mut(base + k);
            for &l in set {
                row.scaled_add(inv, &h.row(base + l));
            }
        }
    }
    m
}

fn mean_aggregate_backward(d_m: ArrayView2<f64>, graphs: &[Vec<Vec<usize>>], nodes: usize, d_h: &mut Array2<f64>) {
    for (g, nbrs) in graphs.iter().enumerate() {
        let base = g * nodes;
        for (k, set) in nbrs.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let inv = 1.0 / set.len() as f64;
            for &l in set {
                d_h.row_mut(base + l).scaled_add(inv, &d_m.row(base + k));
            }
        }
    }
}

/// Cached quantities of one SAGE layer over a stacked batch of graphs.
pub struct SageTrace {
    concat: Array2<f64>,
    pre: Array2<f64>,
    pub out: Array2<f64>,
}

/// `elu(W [h_k || mean_{l in N(k)} h_l] + b)` for every node of every graph.
pub fn sage_layer_forward(layer: &Dense, h: &Array2<f64>, graphs: &[Vec<Vec<usize>>], nodes: usize) -> SageTrace {
    let m = mean_aggregate(h, graphs, nodes);
    let concat = concatenate(Axis(1), &[h.view(), m.view()]).expect("matching row counts");
    let pre = layer.affine(&concat.view());
    let out = activate(&pre, Activation::Elu);
    SageTrace { concat, pre, out }
}

pub fn sage_layer_backward(
    layer: &Dense,
    trace: &SageTrace,
    d_out: &Array2<f64>,
    graphs: &[Vec<Vec<usize>>],
    nodes: usize,
    grad: &mut Dense,
) -> Array2<f64> {
    let d_pre = activation_backward(&trace.pre, &trace.out, d_out, Activation::Elu);
    let d_concat = layer.backward(&trace.concat.view(), &d_pre, grad);
    let width = d_concat.ncols() / 2;
    let mut d_h = d_concat.slice(s![.., ..width]).to_owned();
    mean_aggregate_backward(d_concat.slice(s![.., width..]), graphs, nodes, &mut d_h);
    d_h
}
