//! Reconstruction and prediction losses, evaluated snapshot by snapshot.
//!
//! These are the reference definitions; [`super::grad`] evaluates the same
//! quantities batched and differentiates them.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::model::{encode_snapshot, graph_decode, kae_decode, koopman_advance, GkaeParams};
use crate::swarmgraph::GraphSnapshot;

use super::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub rec: f64,
    pub pred: f64,
}

fn sq_dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum over the window of the graph (`x`) and latent (`z`) reconstruction errors.
pub fn loss_rec(window: &[GraphSnapshot], params: &GkaeParams) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::TooShort { context: "reconstruction window", needed: 1, have: 0 });
    }
    let mut total = 0.0;
    for snap in window {
        let latent = encode_snapshot(snap, params)?;
        let x_hat = graph_decode(&latent.z.view(), params)?;
        for (row, pred) in snap.features.iter().zip(x_hat.rows()) {
            total += row.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let z_hat = kae_decode(&latent.g.view(), params)?;
        total += sq_dist(&latent.z, &z_hat);
    }
    Ok(total)
}

/// Distance, in decoded latent space, between encoding each step and
/// advancing the first step's observables with `K` over `s_p` snapshots.
pub fn loss_pred(window: &[GraphSnapshot], params: &GkaeParams, s_p: usize) -> Result<f64> {
    if window.len() < s_p || s_p == 0 {
        return Err(Error::TooShort { context: "prediction window", needed: s_p.max(1), have: window.len() });
    }
    let g1 = encode_snapshot(&window[0], params)?.g;
    let mut total = 0.0;
    for t in 2..=s_p {
        let g_t = encode_snapshot(&window[t - 1], params)?.g;
        let advanced = koopman_advance(&g1.view(), &params.koopman, t - 1);
        total += sq_dist(&kae_decode(&g_t.view(), params)?, &kae_decode(&advanced.view(), params)?);
    }
    Ok(total)
}

pub fn loss_parts(window: &[GraphSnapshot], params: &GkaeParams, config: &TrainConfig) -> Result<LossParts> {
    let rec = loss_rec(window, params)?;
    let pred = loss_pred(window, params, config.s_p)?;
    Ok(LossParts { total: config.beta1_loss * rec + config.beta2_loss * pred, rec, pred })
}

/// Weighted sum of the reconstruction and prediction losses.
pub fn total_loss(window: &[GraphSnapshot], params: &GkaeParams, config: &TrainConfig) -> Result<f64> {
    Ok(loss_parts(window, params, config)?.total)
}
