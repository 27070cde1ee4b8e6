//! Graph snapshots of a swarm: normalized node coordinates plus the
//! distance-threshold adjacency, and the on-disk dataset container.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{neighbors, SwarmParams, Trajectory, UavState};
use crate::error::{invalid, Error, Result};

pub const DATASET_VERSION: u32 = 1;

/// Fraction of each axis range added on both sides of the nominal area.
pub const AREA_MARGIN: f64 = 0.1;

/// Tolerated excursion past [0, 1] before a snapshot is rejected.
pub const OVERFLOW_TOLERANCE: f64 = 0.05;

/// Per-axis affine map from meters to dimensionless coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub offset: [f64; 3],
    pub scale: [f64; 3],
}

impl Normalizer {
    pub fn new(offset: [f64; 3], scale: [f64; 3]) -> Result<Self> {
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || offset.iter().any(|o| !o.is_finite()) {
            return Err(invalid("normalizer scale must be positive and finite"));
        }
        Ok(Self { offset, scale })
    }

    /// Nominal ranges [0, width] x [0, height] x [0, altitude], each widened
    /// by the fixed margin.
    pub fn for_swarm(params: &SwarmParams) -> Result<Self> {
        let extent = [params.area.0, params.area.1, params.altitude];
        Self::new(extent.map(|e| -AREA_MARGIN * e), extent.map(|e| (1.0 + 2.0 * AREA_MARGIN) * e))
    }

    pub fn normalize(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (p[i] - self.offset[i]) / self.scale[i])
    }

    pub fn denormalize(&self, f: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| f[i] * self.scale[i] + self.offset[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub t: usize,
    /// One normalized (x, y, h) row per UAV, in UAV id order.
    pub features: Vec<[f64; 3]>,
    pub adjacency: Vec<Vec<bool>>,
}

impl GraphSnapshot {
    pub fn num_nodes(&self) -> usize {
        self.features.len()
    }

    pub fn feature_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.features.len(), 3), |(k, c)| self.features[k][c])
    }

    /// Neighbor index lists recovered from the adjacency.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        self.adjacency
            .iter()
            .map(|row| row.iter().enumerate().filter_map(|(l, &a)| a.then_some(l)).collect())
            .collect()
    }
}

/// Normalized features and raw-distance adjacency for one swarm snapshot.
pub fn build_snapshot(t: usize, states: &[UavState], d_tilde: f64, normalizer: &Normalizer) -> Result<GraphSnapshot> {
    let positions: Vec<[f64; 3]> = states.iter().map(UavState::position).collect();
    let mut features = Vec::with_capacity(states.len());
    for (uav, p) in positions.iter().enumerate() {
        let f = normalizer.normalize(*p);
        for (axis, &value) in f.iter().enumerate() {
            if !(value >= -OVERFLOW_TOLERANCE && value <= 1.0 + OVERFLOW_TOLERANCE) {
                return Err(Error::NormalizationOverflow { t, uav, axis, value });
            }
        }
        features.push(f);
    }
    let n = states.len();
    let mut adjacency = vec![vec![false; n]; n];
    for (k, set) in neighbors(&positions, d_tilde).into_iter().enumerate() {
        for l in set {
            adjacency[k][l] = true;
        }
    }
    Ok(GraphSnapshot { t, features, adjacency })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub snapshots: Vec<GraphSnapshot>,
    pub normalizer: Normalizer,
    pub source_params: SwarmParams,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    normalizer: Normalizer,
    params: SwarmParams,
    snapshots: Vec<GraphSnapshot>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

/// One snapshot per timestep, normalized by the fixed swarm area.
pub fn make_dataset(trajectory: &Trajectory, d_tilde: f64) -> Result<TrajectoryDataset> {
    if trajectory.states.is_empty() {
        return Err(invalid("empty trajectory"));
    }
    let normalizer = Normalizer::for_swarm(&trajectory.params)?;
    let snapshots = trajectory
        .states
        .iter()
        .enumerate()
        .map(|(t, states)| build_snapshot(t, states, d_tilde, &normalizer))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset { snapshots, normalizer, source_params: trajectory.params.clone() })
}

impl TrajectoryDataset {
    pub fn num_uavs(&self) -> usize {
        self.source_params.num_uavs
    }

    /// Index of the first held-out snapshot for a contiguous train/validation split.
    pub fn split_index(&self, train_fraction: f64) -> usize {
        ((self.snapshots.len() as f64) * train_fraction).floor() as usize
    }

    /// Meter coordinates of a normalized feature row set.
    pub fn denormalize_rows(&self, rows: &[[f64; 3]]) -> Vec<[f64; 3]> {
        rows.iter().map(|r| self.normalizer.denormalize(*r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_uavs();
        for s in &self.snapshots {
            if s.features.len() != l || s.adjacency.len() != l || s.adjacency.iter().any(|r| r.len() != l) {
                return Err(Error::Malformed(format!("snapshot {} does not have {l} nodes", s.t)));
            }
            for k in 0..l {
                if s.adjacency[k][k] || (0..l).any(|j| s.adjacency[k][j] != s.adjacency[j][k]) {
                    return Err(Error::Malformed(format!("snapshot {} adjacency not symmetric/irreflexive", s.t)));
                }
            }
        }
        Ok(())
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let file = DatasetFile {
            version: DATASET_VERSION,
            normalizer: self.normalizer,
            params: self.source_params.clone(),
            snapshots: self.snapshots.clone(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let probe: VersionProbe =
            serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("dataset header: {e}")))?;
        if probe.version != DATASET_VERSION {
            return Err(Error::Version { found: probe.version, expected: DATASET_VERSION });
        }
        let file: DatasetFile = serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
        let dataset = Self { snapshots: file.snapshots, normalizer: file.normalizer, source_params: file.params };
        dataset.validate()?;
        Ok(dataset)
    }
}
