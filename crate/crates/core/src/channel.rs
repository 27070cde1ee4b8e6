//! Terrestrial link budget and air-ground received power.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Thermal noise density at 290 K.
pub const NOISE_DENSITY_DBM_PER_HZ: f64 = -174.0;
/// Receiver bandwidth used by the default configuration.
pub const DEFAULT_BANDWIDTH_HZ: f64 = 1e5;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Noise power in watts for a density (dBm/Hz) integrated over `bandwidth_hz`.
pub fn noise_power_from_density(dbm_per_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(dbm_per_hz) * bandwidth_hz
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// nu = 1 on every link.
    DeterministicUnit,
    /// Unit-mean exponential power gain (Rayleigh amplitude).
    RayleighPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Terrestrial path-loss exponent.
    pub eta: f64,
    /// Air-ground path-loss exponent.
    pub eta_prime: f64,
    /// Noise power, W.
    pub noise_power: f64,
    /// Link SNR threshold, dB.
    pub gamma_tilde_db: f64,
    pub fading: Fading,
}

impl ChannelParams {
    /// eta = 5, eta' = 2, 10 dB SNR threshold, -174 dBm/Hz over `bandwidth_hz`.
    pub fn table_ii(bandwidth_hz: f64) -> Self {
        Self {
            eta: 5.0,
            eta_prime: 2.0,
            noise_power: noise_power_from_density(NOISE_DENSITY_DBM_PER_HZ, bandwidth_hz),
            gamma_tilde_db: 10.0,
            fading: Fading::DeterministicUnit,
        }
    }

    pub fn gamma_linear(&self) -> f64 {
        db_to_linear(self.gamma_tilde_db)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta_prime > 0.0) {
            return Err(invalid("path-loss exponents must be positive"));
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(invalid("noise power must be positive"));
        }
        if !self.gamma_tilde_db.is_finite() {
            return Err(invalid("SNR threshold must be finite"));
        }
        Ok(())
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::table_ii(DEFAULT_BANDWIDTH_HZ)
    }
}

/// Ground nodes at zero altitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundLayout {
    #[serde(rename = "N")]
    pub n: usize,
    pub positions: Vec<[f64; 3]>,
}

impl GroundLayout {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        let layout = Self { n: positions.len(), positions };
        layout.validate()?;
        Ok(layout)
    }

    /// `n` nodes uniform in the square `[origin, origin + side]^2`.
    pub fn random(n: usize, side: f64, origin: [f64; 2], seed: u64) -> Result<Self> {
        if !(side > 0.0) {
            return Err(invalid("ground area side must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| {
                [
                    origin[0] + rng.random_range(0.0..side),
                    origin[1] + rng.random_range(0.0..side),
                    0.0,
                ]
            })
            .collect();
        Self::new(positions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != self.positions.len() {
            return Err(Error::Dimension { context: "ground layout", expected: self.n, got: self.positions.len() });
        }
        if let Some(i) = self.positions.iter().position(|p| p[2] != 0.0 || !p[0].is_finite() || !p[1].is_finite()) {
            return Err(invalid(format!("ground node {i} must be finite and at zero altitude")));
        }
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.distance(i, j) == 0.0 {
                    return Err(Error::ZeroDistance(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.positions[i], &self.positions[j])
    }

    /// Pairwise distances; zero on the diagonal.
    pub fn distance_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.distance(i, j))
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Received SNR (linear) at distance `d` for transmit power `p` and fading gain `nu`.
pub fn snr(p: f64, d: f64, nu: f64, params: &ChannelParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid("SNR undefined at zero distance"));
    }
    if p < 0.0 || nu < 0.0 {
        return Err(invalid("power and fading gain must be non-negative"));
    }
    Ok(p * d.powf(-params.eta) * nu / params.noise_power)
}

/// Line-of-sight received power at a UAV, W.
pub fn uav_received_power(p: f64, d: f64, eta_prime: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid("received power undefined at zero distance"));
    }
    if p < 0.0 {
        return Err(invalid("power must be non-negative"));
    }
    Ok(p * d.powf(-eta_prime))
}

/// Symmetric N x N unit-mean exponential gains, reproducible from `seed`.
pub fn draw_fading(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gains = Array2::ones((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let nu: f64 = Exp1.sample(&mut rng);
            gains[[i, j]] = nu;
            gains[[j, i]] = nu;
        }
    }
    gains
}

/// For every node `i`, the nodes `j != i` whose SNR from `i` meets the threshold.
pub fn link_sets(
    layout: &GroundLayout,
    p: f64,
    params: &ChannelParams,
    fading_draws: Option<&Array2<f64>>,
) -> Result<Vec<Vec<usize>>> {
    let n = layout.n;
    if let Some(draws) = fading_draws {
        if draws.dim() != (n, n) {
            return Err(Error::Dimension { context: "fading draws", expected: n, got: draws.nrows() });
        }
    } else if params.fading != Fading::DeterministicUnit {
        return Err(invalid("rayleigh fading needs explicit draws"));
    }
    let gamma = params.gamma_linear();
    let mut sets = vec![Vec::new(); n];
    for (i, set) in sets.iter_mut().enumerate() {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = layout.distance(i, j);
            if d == 0.0 {
                return Err(Error::ZeroDistance(i, j));
            }
            let nu = fading_draws.map_or(1.0, |f| f[[i, j]]);
            if snr(p, d, nu, params)? >= gamma {
                set.push(j);
            }
        }
    }
    Ok(sets)
}
