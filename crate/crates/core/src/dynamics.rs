//! Coupled fixed-wing UAV swarm under constant wind.
//!
//! Each UAV flies at constant forward speed along its turning angle `phi`;
//! the angle is nudged by the mean angle of the UAVs within `D_tilde`
//! (scaled by `coupling_gain`). All right-hand sides use the state at `t-1`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Initial turning angle for every UAV in the reference scenario, radians.
pub const TABLE_I_INITIAL_HEADING: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    /// Unwrapped turning angle, radians.
    pub phi: f64,
}

impl UavState {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.h]
    }
}

/// Physical constants of one swarm. Serialized field names are part of the
/// on-disk format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmParams {
    #[serde(rename = "L")]
    pub num_uavs: usize,
    /// Per-UAV forward speed, m/s.
    pub v: Vec<f64>,
    /// Wind speed, m/s.
    pub v_w: f64,
    /// Wind direction, rad.
    pub theta_w: f64,
    /// Time step, s.
    pub dt: f64,
    /// Neighbor distance threshold, m.
    #[serde(rename = "D_tilde")]
    pub d_tilde: f64,
    pub coupling_gain: f64,
    /// (width, height) of the operating area in meters, anchored at the origin.
    pub area: (f64, f64),
    /// Constant flight altitude, m.
    pub altitude: f64,
    pub seed: u64,
}

impl SwarmParams {
    /// Four UAVs at 20 m/s, 0.1 s steps, a 5 km square and a 10 km neighbor radius.
    pub fn table_i() -> Self {
        Self {
            num_uavs: 4,
            v: vec![20.0; 4],
            v_w: 1e-3,
            theta_w: 1e-8,
            dt: 0.1,
            d_tilde: 1e4,
            coupling_gain: 0.1,
            area: (5000.0, 5000.0),
            altitude: 200.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_uavs == 0 {
            return Err(invalid("L must be at least 1"));
        }
        if self.v.len() != self.num_uavs {
            return Err(Error::Dimension {
                context: "per-UAV speeds",
                expected: self.num_uavs,
                got: self.v.len(),
            });
        }
        if self.v.iter().any(|v| !v.is_finite() || *v < 0.0) || !(self.v_w >= 0.0) {
            return Err(invalid("speeds must be finite and non-negative"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt must be positive"));
        }
        if !(self.d_tilde > 0.0) {
            return Err(invalid("D_tilde must be positive"));
        }
        if !self.coupling_gain.is_finite() || !self.theta_w.is_finite() {
            return Err(invalid("coupling_gain and theta_w must be finite"));
        }
        if !(self.area.0 > 0.0 && self.area.1 > 0.0) {
            return Err(invalid("area dimensions must be positive"));
        }
        if !(self.altitude > 0.0) || !self.altitude.is_finite() {
            return Err(invalid("altitude must be positive"));
        }
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let params: Self = serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?;
        params.validate()?;
        Ok(params)
    }
}

/// How initial turning angles are chosen when no explicit state is given.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeadingInit {
    Fixed(f64),
    /// Uniform in [-pi, pi).
    Uniform,
}

/// Initial swarm state: positions uniform in the area, constant altitude.
pub fn initial_states(params: &SwarmParams, headings: HeadingInit, rng: &mut impl Rng) -> Vec<UavState> {
    (0..params.num_uavs)
        .map(|id| {
            let x = rng.random_range(0.0..params.area.0);
            let y = rng.random_range(0.0..params.area.1);
            let phi = match headings {
                HeadingInit::Fixed(phi) => phi,
                HeadingInit::Uniform => rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            };
            UavState { id, x, y, h: params.altitude, phi }
        })
        .collect()
}

/// [`initial_states`] drawn from a generator seeded with `params.seed`.
pub fn seeded_initial_states(params: &SwarmParams, headings: HeadingInit) -> Vec<UavState> {
    initial_states(params, headings, &mut ChaCha8Rng::seed_from_u64(params.seed))
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Index sets of UAVs within `d_tilde` of each UAV (3D Euclidean, inclusive),
/// each sorted ascending and never containing the UAV itself.
pub fn neighbors(positions: &[[f64; 3]], d_tilde: f64) -> Vec<Vec<usize>> {
    let n = positions.len();
    let mut sets = vec![Vec::new(); n];
    for k in 0..n {
        for l in (k + 1)..n {
            if distance(&positions[k], &positions[l]) <= d_tilde {
                sets[k].push(l);
                sets[l].push(k);
            }
        }
    }
    for set in &mut sets {
        set.sort_unstable();
    }
    sets
}

/// Mean turning angle over each UAV's neighbors; zero for an isolated UAV.
pub fn aggregate_turn(phis: &[f64], neighbor_sets: &[Vec<usize>]) -> Vec<f64> {
    assert_eq!(phis.len(), neighbor_sets.len(), "one neighbor set per UAV");
    neighbor_sets
        .iter()
        .map(|set| {
            if set.is_empty() {
                0.0
            } else {
                set.iter().map(|&k| phis[k]).sum::<f64>() / set.len() as f64
            }
        })
        .collect()
}

/// One application of the swarm update.
pub fn step(states: &[UavState], params: &SwarmParams) -> Vec<UavState> {
    let positions: Vec<[f64; 3]> = states.iter().map(UavState::position).collect();
    let phis: Vec<f64> = states.iter().map(|s| s.phi).collect();
    let sets = neighbors(&positions, params.d_tilde);
    let agg = aggregate_turn(&phis, &sets);
    let (wind_x, wind_y) = (params.v_w * params.theta_w.cos(), params.v_w * params.theta_w.sin());

    states
        .iter()
        .zip(agg)
        .map(|(s, phi_agg)| {
            let v = params.v[s.id];
            UavState {
                id: s.id,
                x: s.x + params.dt * (v * s.phi.cos() + wind_x),
                y: s.y + params.dt * (v * s.phi.sin() + wind_y),
                h: s.h,
                phi: s.phi + params.coupling_gain * phi_agg,
            }
        })
        .collect()
}

/// Time-ordered swarm states; `states[0]` is the initial snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: SwarmParams,
    pub states: Vec<Vec<UavState>>,
}

/// Runs `steps` updates. Without `init`, positions are drawn from `params.seed`
/// and every UAV starts at the reference turning angle.
pub fn simulate(params: &SwarmParams, steps: usize, init: Option<&[UavState]>) -> Result<Trajectory> {
    params.validate()?;
    if steps == 0 {
        return Err(invalid("simulation needs at least one step"));
    }
    let first = match init {
        Some(init) => {
            check_init(init, params)?;
            init.to_vec()
        }
        None => seeded_initial_states(params, HeadingInit::Fixed(TABLE_I_INITIAL_HEADING)),
    };

    let mut states = Vec::with_capacity(steps + 1);
    states.push(first);
    for t in 1..=steps {
        let next = step(&states[t - 1], params);
        if let Some(bad) = next.iter().find(|s| !(s.x.is_finite() && s.y.is_finite() && s.phi.is_finite())) {
            return Err(Error::NonFinite(format!("UAV {} at step {t}", bad.id)));
        }
        states.push(next);
    }
    Ok(Trajectory { params: params.clone(), states })
}

fn check_init(init: &[UavState], params: &SwarmParams) -> Result<()> {
    if init.len() != params.num_uavs {
        return Err(Error::Dimension {
            context: "initial states",
            expected: params.num_uavs,
            got: init.len(),
        });
    }
    for (i, s) in init.iter().enumerate() {
        if s.id != i {
            return Err(invalid(format!("initial state {i} carries id {}", s.id)));
        }
        if s.h != init[0].h {
            return Err(invalid("all UAVs must share one altitude"));
        }
        if !(s.x.is_finite() && s.y.is_finite() && s.h.is_finite() && s.phi.is_finite()) {
            return Err(Error::NonFinite(format!("initial state {i}")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRow {
    t: usize,
    uav_id: usize,
    x: f64,
    y: f64,
    h: f64,
    phi: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Writes `t,uav_id,x,y,h,phi` rows, one per UAV per step.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for (t, snapshot) in self.states.iter().enumerate() {
            for s in snapshot {
                out.serialize(TrajectoryRow { t, uav_id: s.id, x: s.x, y: s.y, h: s.h, phi: s.phi })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, params: SwarmParams) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let mut states: Vec<Vec<UavState>> = Vec::new();
        for row in input.deserialize() {
            let row: TrajectoryRow = row?;
            if row.t == states.len() {
                states.push(Vec::with_capacity(params.num_uavs));
            }
            let snapshot = states
                .get_mut(row.t)
                .filter(|s| s.len() == row.uav_id)
                .ok_or_else(|| Error::Malformed(format!("out-of-order row t={} uav={}", row.t, row.uav_id)))?;
            snapshot.push(UavState { id: row.uav_id, x: row.x, y: row.y, h: row.h, phi: row.phi });
        }
        if states.len() < 2 || states.iter().any(|s| s.len() != params.num_uavs) {
            return Err(Error::Malformed("trajectory rows do not match L".into()));
        }
        Ok(Self { params, states })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(points: &[(f64, f64)]) -> Vec<[f64; 3]> {
        points.iter().map(|&(x, y)| [x, y, 100.0]).collect()
    }

    #[test]
    fn single_uav_has_no_neighbors() {
        assert_eq!(neighbors(&at(&[(3.0, 4.0)]), 10.0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn neighbors_on_a_line() {
        let sets = neighbors(&at(&[(0.0, 0.0), (50.0, 0.0), (200.0, 0.0)]), 100.0);
        assert_eq!(sets, vec![vec![1], vec![0], vec![]]);
    }

    #[test]
    fn reference_radius_covers_the_whole_area() {
        let p = SwarmParams::table_i();
        let sets = neighbors(&at(&[(0.0, 0.0), (5000.0, 5000.0), (0.0, 5000.0), (2500.0, 10.0)]), p.d_tilde);
        assert!(sets.iter().all(|s| s.len() == 3));
    }

    #[test]
    fn aggregate_turn_cases() {
        assert_eq!(aggregate_turn(&[0.25, -0.25], &[vec![1], vec![0]]), vec![-0.25, 0.25]);
        assert_eq!(aggregate_turn(&[0.3, 1.0], &[vec![], vec![]]), vec![0.0, 0.0]);
        let a = 0.7;
        let complete = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        assert_eq!(aggregate_turn(&[a, a, a], &complete), vec![a, a, a]);
    }

    #[test]
    fn step_straight_east() {
        let mut p = SwarmParams::table_i();
        p.num_uavs = 1;
        p.v = vec![20.0];
        p.v_w = 0.0;
        let s = UavState { id: 0, x: 10.0, y: 5.0, h: 200.0, phi: 0.0 };
        let next = step(&[s], &p);
        assert_eq!(next[0].x - 10.0, 2.0);
        assert_eq!(next[0].y, 5.0);
        assert_eq!(next[0].h, 200.0);
    }

    #[test]
    fn step_couples_headings() {
        let mut p = SwarmParams::table_i();
        p.num_uavs = 2;
        p.v = vec![20.0; 2];
        let init = [
            UavState { id: 0, x: 0.0, y: 0.0, h: 200.0, phi: 0.25 },
            UavState { id: 1, x: 100.0, y: 0.0, h: 200.0, phi: -0.25 },
        ];
        let next = step(&init, &p);
        assert!((next[0].phi - 0.225).abs() < 1e-15);
        assert!((next[1].phi + 0.225).abs() < 1e-15);
    }

    #[test]
    fn reference_step_length() {
        let p = SwarmParams::table_i();
        let traj = simulate(&p, 1, None).unwrap();
        for (a, b) in traj.states[0].iter().zip(&traj.states[1]) {
            let d = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            assert!((d - 2.0).abs() <= 1e-4 + 1e-12);
        }
    }

    #[test]
    fn simulate_rejects_zero_steps() {
        assert!(simulate(&SwarmParams::table_i(), 0, None).is_err());
    }

    #[test]
    fn simulate_one_is_one_step() {
        let p = SwarmParams::table_i();
        let traj = simulate(&p, 1, None).unwrap();
        assert_eq!(traj.states.len(), 2);
        assert_eq!(traj.states[1], step(&traj.states[0], &p));
    }

    #[test]
    fn params_json_field_names() {
        let json = serde_json::to_value(SwarmParams::table_i()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["D_tilde", "L", "altitude", "area", "coupling_gain", "dt", "seed", "theta_w", "v", "v_w"]
        );
        let back: SwarmParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, SwarmParams::table_i());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = SwarmParams::table_i();
        p.dt = 0.0;
        assert!(p.validate().is_err());
        let mut p = SwarmParams::table_i();
        p.v.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let traj = simulate(&SwarmParams::table_i(), 25, None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,uav_id,x,y,h,phi\n"));
        let back = Trajectory::read_csv(buf.as_slice(), traj.params.clone()).unwrap();
        assert_eq!(back, traj);
    }
}
