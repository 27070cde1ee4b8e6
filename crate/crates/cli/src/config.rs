//! Scenario configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gkae_core::channel::{ChannelParams, GroundLayout};
use gkae_core::dynamics::SwarmParams;
use gkae_core::lpd::LpdConfig;
use gkae_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// How the ground network is laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundSettings {
    #[serde(rename = "N")]
    pub n: usize,
    /// Side of the square holding the nodes, m.
    pub side: f64,
    /// South-west corner of the square, m.
    pub origin: [f64; 2],
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpdSettings {
    #[serde(rename = "P_max")]
    pub p_max: f64,
    #[serde(rename = "C_tilde")]
    pub c_tilde: usize,
    #[serde(rename = "P_det")]
    pub p_det: f64,
    pub ground: GroundSettings,
}

/// Thresholds checked by `evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gates {
    pub eps_pred_max: f64,
    pub min_feasibility_rate: f64,
    pub max_components: usize,
}

impl Default for Gates {
    fn default() -> Self {
        Self { eps_pred_max: 0.01, min_feasibility_rate: 1.0, max_components: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub swarm: SwarmParams,
    /// Simulated time steps (the trajectory has `steps + 1` snapshots).
    pub steps: usize,
    /// Draw initial turning angles uniformly instead of the reference value.
    pub random_headings: bool,
    pub channel: ChannelParams,
    pub lpd: LpdSettings,
    pub train: TrainConfig,
    /// Prediction horizons reported on the held-out data.
    pub horizons: Vec<usize>,
    pub output_dir: PathBuf,
    pub gates: Gates,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let swarm = SwarmParams::table_i();
        // Ground square centred in the swarm area.
        let side = 500.0;
        let origin = [(swarm.area.0 - side) / 2.0, (swarm.area.1 - side) / 2.0];
        Self {
            swarm,
            steps: 2000,
            random_headings: false,
            channel: ChannelParams::default(),
            lpd: LpdSettings {
                p_max: 0.1,
                c_tilde: 5,
                p_det: 0.5e-6,
                ground: GroundSettings { n: 25, side, origin, seed: 0 },
            },
            train: TrainConfig::default(),
            horizons: vec![40, 80],
            output_dir: PathBuf::from("out"),
            gates: Gates::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies one seed to the swarm, the training run and the ground layout.
    pub fn set_seed(&mut self, seed: u64) {
        self.swarm.seed = seed;
        self.train.seed = seed;
        self.lpd.ground.seed = seed;
    }

    pub fn snapshots(&self) -> usize {
        self.steps + 1
    }

    /// First held-out snapshot index, as used by training.
    pub fn split_index(&self) -> usize {
        ((self.snapshots() as f64) * self.train.train_fraction).floor() as usize
    }

    pub fn held_out(&self) -> usize {
        self.snapshots() - self.split_index()
    }

    pub fn layout(&self) -> Result<GroundLayout> {
        self.layout_with(self.lpd.ground.n, self.lpd.ground.seed)
    }

    pub fn layout_with(&self, n: usize, seed: u64) -> Result<GroundLayout> {
        let g = &self.lpd.ground;
        Ok(GroundLayout::random(n, g.side, g.origin, seed)?)
    }

    pub fn lpd_config(&self) -> Result<LpdConfig> {
        Ok(LpdConfig {
            p_max: self.lpd.p_max,
            c_tilde: self.lpd.c_tilde,
            p_det: self.lpd.p_det,
            channel: self.channel.clone(),
            layout: self.layout()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.swarm.validate().context("swarm")?;
        self.channel.validate().context("channel")?;
        self.train.validate().context("train")?;
        self.lpd_config()?.validate().context("lpd")?;
        if self.steps == 0 {
            bail!("steps must be positive");
        }
        if self.split_index() < self.train.s_p + 1 {
            bail!("{} training snapshots cannot fill a window of S_p = {}", self.split_index(), self.train.s_p);
        }
        if self.horizons.is_empty() {
            bail!("at least one prediction horizon is required");
        }
        for &p in &self.horizons {
            if p < 2 || p > self.held_out() {
                bail!("horizon {p} must lie in [2, {}] (held-out snapshots)", self.held_out());
            }
        }
        let g = &self.gates;
        if !(g.eps_pred_max > 0.0) || !(0.0..=1.0).contains(&g.min_feasibility_rate) || g.max_components == 0 {
            bail!("gate thresholds out of range");
        }
        Ok(())
    }
}
