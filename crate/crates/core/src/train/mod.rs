//! Training of the graph Koopman autoencoder and the held-out prediction metric.

pub mod adam;
pub mod grad;
pub mod loss;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{rollout, GkaeHyper, GkaeParams};
use crate::swarmgraph::{GraphSnapshot, TrajectoryDataset};

pub use adam::{Adam, AdamConfig};
pub use grad::{batch_gradients, LossWeights};
pub use loss::{loss_parts, loss_pred, loss_rec, total_loss, LossParts};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the reconstruction loss.
    pub beta1_loss: f64,
    /// Weight of the prediction loss.
    pub beta2_loss: f64,
    /// Linearity window (snapshots per training window).
    #[serde(rename = "S_p")]
    pub s_p: usize,
    /// Koopman dimension.
    pub b: usize,
    /// Windows per gradient step.
    pub batch: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Leading fraction of the trajectory used for training; the rest is held out.
    pub train_fraction: f64,
    /// Output widths of the three SAGE layers.
    pub sage_hidden: Vec<usize>,
    /// Hidden widths of the latent encoder (mirrored by the decoder).
    pub latent_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-3,
            beta1_loss: 1.0,
            beta2_loss: 1.0,
            s_p: 20,
            b: 10,
            batch: 32,
            seed: 0,
            adam: AdamConfig::default(),
            train_fraction: 0.8,
            sage_hidden: vec![32, 32, 8],
            latent_hidden: vec![64, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_p < 2 {
            return Err(invalid("S_p must be at least 2"));
        }
        if self.epochs == 0 || self.batch == 0 || self.b == 0 {
            return Err(invalid("epochs, batch and b must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.beta1_loss >= 0.0) || !(self.beta2_loss >= 0.0) {
            return Err(invalid("learning rate must be positive and loss weights non-negative"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { rec: self.beta1_loss, pred: self.beta2_loss, s_p: self.s_p }
    }

    pub fn hyper(&self, num_uavs: usize) -> GkaeHyper {
        GkaeHyper::with_widths(num_uavs, self.b, &self.sage_hidden, &self.latent_hidden)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub rec: f64,
    pub pred: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonError {
    pub p: usize,
    pub eps_pred: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<EpochLoss>,
    pub eps_pred: Vec<HorizonError>,
    pub wall_clock_s: f64,
}

impl TrainReport {
    /// `epoch,total,rec,pred`, one row per epoch (1-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.losses {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn loss_at(&self, epoch: usize) -> Option<&EpochLoss> {
        self.losses.get(epoch.checked_sub(1)?)
    }
}

/// Loss and exact gradients of the weighted loss for one window.
pub fn gradients(window: &[GraphSnapshot], params: &GkaeParams, config: &TrainConfig) -> Result<(LossParts, GkaeParams)> {
    batch_gradients(window, &[0..window.len()], params, &config.loss_weights())
}

/// Per-coordinate mean squared error of the latent rollout started at
/// `snapshots[0]`, over `t = 2..=p`, in normalized units.
pub fn epsilon_pred(params: &GkaeParams, snapshots: &[GraphSnapshot], p: usize) -> Result<f64> {
    if p < 2 {
        return Err(invalid("prediction horizon must be at least 2"));
    }
    if snapshots.len() < p {
        return Err(Error::TooShort { context: "prediction horizon", needed: p, have: snapshots.len() });
    }
    let preds = rollout(&snapshots[0], params, p)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (pred, truth) in preds.iter().zip(&snapshots[1..p]) {
        for (row, pred_row) in truth.features.iter().zip(pred.rows()) {
            for (a, b) in row.iter().zip(pred_row) {
                sum += (a - b) * (a - b);
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

/// Trains on the leading `train_fraction` of the dataset and reports the
/// prediction error on the held-out tail for each horizon.
pub fn train(dataset: &TrajectoryDataset, config: &TrainConfig, horizons: &[usize]) -> Result<(GkaeParams, TrainReport)> {
    train_with_progress(dataset, config, horizons, |_| {})
}

pub fn train_with_progress(
    dataset: &TrajectoryDataset,
    config: &TrainConfig,
    horizons: &[usize],
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<(GkaeParams, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    let split = dataset.split_index(config.train_fraction);
    let (train_part, held_out) = dataset.snapshots.split_at(split);
    if train_part.len() < config.s_p + 1 {
        return Err(Error::TooShort { context: "training snapshots", needed: config.s_p + 1, have: train_part.len() });
    }
    if let Some(&p) = horizons.iter().find(|&&p| p > held_out.len()) {
        return Err(Error::TooShort { context: "held-out snapshots", needed: p, have: held_out.len() });
    }

    let mut params = GkaeParams::init(&config.hyper(dataset.num_uavs()), config.seed)?;
    let mut adam = Adam::new(&params, config.learning_rate, config.adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let weights = config.loss_weights();

    let mut starts: Vec<usize> = (0..=train_part.len() - config.s_p).collect();
    let n_windows = starts.len() as f64;
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        starts.shuffle(&mut shuffle_rng);
        let mut acc = LossParts::default();
        for chunk in starts.chunks(config.batch) {
            let windows: Vec<_> = chunk.iter().map(|&s| s..s + config.s_p).collect();
            let (parts, grads) = batch_gradients(train_part, &windows, &params, &weights)?;
            let n = chunk.len() as f64;
            acc.total += parts.total * n;
            acc.rec += parts.rec * n;
            acc.pred += parts.pred * n;
            adam.step(&mut params, &grads);
        }
        let row = EpochLoss { epoch, total: acc.total / n_windows, rec: acc.rec / n_windows, pred: acc.pred / n_windows };
        if !(row.total.is_finite() && params.all_finite()) {
            return Err(Error::NonFinite(format!("training diverged at epoch {epoch}")));
        }
        on_epoch(&row);
        losses.push(row);
    }

    let eps_pred = horizons
        .iter()
        .map(|&p| Ok(HorizonError { p, eps_pred: epsilon_pred(&params, held_out, p)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok((params, TrainReport { losses, eps_pred, wall_clock_s: started.elapsed().as_secs_f64() }))
}
