//! Batched forward pass and reverse-mode gradients of the training loss.
//!
//! Snapshots shared by overlapping windows are encoded once per batch; their
//! reconstruction terms are weighted by how many windows contain them. The
//! returned loss and gradients are means over the windows of the batch.

use std::ops::Range;

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};
use crate::model::layers::{sage_layer_backward, sage_layer_forward, stack_backward, stack_forward, SageTrace};
use crate::model::GkaeParams;
use crate::swarmgraph::GraphSnapshot;

use super::loss::LossParts;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub pred: f64,
    /// Linearity window: number of leading snapshots in the prediction term.
    pub s_p: usize,
}

fn reshape(a: Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    a.as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, cols))
        .expect("element count preserved")
}

/// Loss and gradient with respect to every parameter for a batch of windows
/// (index ranges into `snapshots`).
pub fn batch_gradients(
    snapshots: &[GraphSnapshot],
    windows: &[Range<usize>],
    params: &GkaeParams,
    weights: &LossWeights,
) -> Result<(LossParts, GkaeParams)> {
    let hyper = &params.hyper;
    let (l, e, b) = (hyper.num_uavs, hyper.embedding_dim(), hyper.b);
    if windows.is_empty() {
        return Err(Error::TooShort { context: "batch", needed: 1, have: 0 });
    }
    for w in windows {
        if w.end > snapshots.len() || w.len() < weights.s_p.max(1) {
            return Err(Error::TooShort { context: "training window", needed: weights.s_p.max(1), have: w.len() });
        }
    }

    // Unique snapshots in first-seen order, with window multiplicity.
    let lo = windows.iter().map(|w| w.start).min().expect("non-empty");
    let hi = windows.iter().map(|w| w.end).max().expect("non-empty");
    let mut slot = vec![usize::MAX; hi - lo];
    let mut unique = Vec::new();
    let mut mult = Vec::new();
    for w in windows {
        for i in w.clone() {
            if slot[i - lo] == usize::MAX {
                slot[i - lo] = unique.len();
                unique.push(i);
                mult.push(0.0);
            }
            mult[slot[i - lo]] += 1.0;
        }
    }
    let n_u = unique.len();
    let slot_of = |i: usize| slot[i - lo];

    let mut x0 = Array2::zeros((n_u * l, 3));
    let mut graphs = Vec::with_capacity(n_u);
    for (j, &i) in unique.iter().enumerate() {
        let snap = &snapshots[i];
        if snap.num_nodes() != l || snap.adjacency.len() != l {
            return Err(Error::Dimension { context: "snapshot nodes", expected: l, got: snap.num_nodes() });
        }
        for (k, row) in snap.features.iter().enumerate() {
            for c in 0..3 {
                x0[[j * l + k, c]] = row[c];
            }
        }
        graphs.push(snap.neighbor_lists());
    }

    // Forward.
    let mut sage_traces = Vec::with_capacity(params.sage.len());
    for layer in &params.sage {
        let input = sage_traces.last().map_or(&x0, |t: &SageTrace| &t.out);
        let trace = sage_layer_forward(layer, input, &graphs, l);
        sage_traces.push(trace);
    }
    let h = &sage_traces.last().expect("3 SAGE layers").out;
    let z = reshape(h.clone(), n_u, l * e);
    let enc = stack_forward(&params.encoder, z.clone());
    let g = enc.output();
    let dec_z = stack_forward(&params.decoder, g.clone());
    let z_hat = dec_z.output();
    let x_hat = params.graph_decoder.affine(&h.view());

    let n_w = windows.len();
    let steps = weights.s_p.saturating_sub(1);
    let mut q = Vec::with_capacity(steps + 1);
    q.push(Array2::from_shape_fn((n_w, b), |(w, c)| g[[slot_of(windows[w].start), c]]));
    for k in 1..=steps {
        let next = q[k - 1].dot(&params.koopman.t());
        q.push(next);
    }
    let dec_y = if steps > 0 {
        let views: Vec<_> = q[1..].iter().map(|a| a.view()).collect();
        Some(stack_forward(&params.decoder, concatenate(Axis(0), &views).expect("same width")))
    } else {
        None
    };

    // Loss and output gradients.
    let scale = 1.0 / n_w as f64;
    let mut d_x_hat = Array2::zeros(x_hat.raw_dim());
    let mut d_z = Array2::zeros(z.raw_dim());
    let mut d_z_hat = Array2::zeros(z.raw_dim());
    let (mut rec, mut pred) = (0.0, 0.0);
    for j in 0..n_u {
        let m = mult[j];
        for r in j * l..(j + 1) * l {
            for c in 0..3 {
                let diff = x_hat[[r, c]] - x0[[r, c]];
                rec += m * diff * diff;
                d_x_hat[[r, c]] = 2.0 * scale * weights.rec * m * diff;
            }
        }
        for c in 0..l * e {
            let diff = z[[j, c]] - z_hat[[j, c]];
            rec += m * diff * diff;
            d_z[[j, c]] = 2.0 * scale * weights.rec * m * diff;
            d_z_hat[[j, c]] = -2.0 * scale * weights.rec * m * diff;
        }
    }
    let mut d_y = None;
    if let Some(dec_y) = &dec_y {
        let y = dec_y.output();
        let mut dy = Array2::zeros(y.raw_dim());
        for k in 1..=steps {
            for (w, window) in windows.iter().enumerate() {
                let u = slot_of(window.start + k);
                let r = (k - 1) * n_w + w;
                for c in 0..l * e {
                    let diff = z_hat[[u, c]] - y[[r, c]];
                    pred += diff * diff;
                    d_z_hat[[u, c]] += 2.0 * scale * weights.pred * diff;
                    dy[[r, c]] = -2.0 * scale * weights.pred * diff;
                }
            }
        }
        d_y = Some(dy);
    }
    let parts = LossParts {
        rec: scale * rec,
        pred: scale * pred,
        total: scale * (weights.rec * rec + weights.pred * pred),
    };

    // Backward.
    let mut grads = params.zeros_like();
    let mut d_g = stack_backward(&params.decoder, &dec_z, d_z_hat, &mut grads.decoder);
    if let (Some(dec_y), Some(dy)) = (&dec_y, d_y) {
        let d_r = stack_backward(&params.decoder, dec_y, dy, &mut grads.decoder);
        let mut carry = Array2::<f64>::zeros((n_w, b));
        for k in (1..=steps).rev() {
            carry += &d_r.slice(s![(k - 1) * n_w..k * n_w, ..]);
            grads.koopman += &carry.t().dot(&q[k - 1]);
            carry = carry.dot(&params.koopman);
        }
        for (w, window) in windows.iter().enumerate() {
            let u = slot_of(window.start);
            let mut row = d_g.row_mut(u);
            row += &carry.row(w);
        }
    }
    d_z += &stack_backward(&params.encoder, &enc, d_g, &mut grads.encoder);
    let mut d_h = reshape(d_z, n_u * l, e);
    d_h += &params.graph_decoder.backward(&h.view(), &d_x_hat, &mut grads.graph_decoder);
    for i in (0..params.sage.len()).rev() {
        d_h = sage_layer_backward(&params.sage[i], &sage_traces[i], &d_h, &graphs, l, &mut grads.sage[i]);
    }

    Ok((parts, grads))
}
