//! Uniform transmit-power planning against predicted UAV positions.
//!
//! With one power level shared by every ground node, each constraint is
//! monotone in that level: connectivity needs at least `P_low`, covertness
//! and the hardware cap allow at most `P_high`. The max received power at the
//! UAVs grows with the power, so the optimum is `P_low` whenever
//! `P_low <= P_high`.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{self, distance, ChannelParams, Fading, GroundLayout};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpdConfig {
    /// Transmit power cap, W.
    #[serde(rename = "P_max")]
    pub p_max: f64,
    /// Minimum links per node.
    #[serde(rename = "C_tilde")]
    pub c_tilde: usize,
    /// Detection threshold for received power at a UAV, W.
    #[serde(rename = "P_det")]
    pub p_det: f64,
    pub channel: ChannelParams,
    pub layout: GroundLayout,
}

impl LpdConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.layout.validate()?;
        if !(self.p_max > 0.0) || !(self.p_det > 0.0) {
            return Err(invalid("P_max and P_det must be positive"));
        }
        if self.c_tilde + 1 > self.layout.n {
            return Err(invalid(format!("C_tilde = {} needs more than {} nodes", self.c_tilde, self.layout.n)));
        }
        Ok(())
    }
}

/// UAV positions (meters) at one planned time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavFrame {
    pub t: usize,
    pub positions: Vec<[f64; 3]>,
}

/// Planning evaluates links at unit fading gain whatever the channel's fading model.
fn planning_channel(channel: &ChannelParams) -> ChannelParams {
    ChannelParams { fading: Fading::DeterministicUnit, ..channel.clone() }
}

/// Least uniform power giving every node at least `c_tilde` links at unit fading.
pub fn min_connectivity_power(layout: &GroundLayout, c_tilde: usize, channel: &ChannelParams) -> Result<f64> {
    if layout.n <= c_tilde {
        return Err(invalid(format!("{} nodes cannot each have {c_tilde} links", layout.n)));
    }
    if c_tilde == 0 {
        return Ok(0.0);
    }
    let gamma = channel.gamma_linear();
    let mut binding = Vec::with_capacity(layout.n);
    for i in 0..layout.n {
        let mut d: Vec<f64> = (0..layout.n).filter(|&j| j != i).map(|j| layout.distance(i, j)).collect();
        d.sort_by(f64::total_cmp);
        let d_c = d[c_tilde - 1];
        if d_c == 0.0 {
            return Err(Error::ZeroDistance(i, i));
        }
        binding.push(d_c);
    }
    let p = binding
        .iter()
        .map(|d| gamma * channel.noise_power * d.powf(channel.eta))
        .fold(0.0, f64::max);
    let connected = |p: f64| -> Result<bool> {
        for &d in &binding {
            if channel::snr(p, d, 1.0, channel)? < gamma {
                return Ok(false);
            }
        }
        Ok(true)
    };
    // The closed form can miss the exact threshold by a few ulps either way.
    tighten(p, connected, true).ok_or_else(|| Error::NonFinite("connectivity power did not converge".into()))
}

/// Moves `p` by ulps to the boundary of `ok`: the least passing value when
/// `ok` holds above the boundary (`lower`), the greatest one otherwise.
fn tighten(mut p: f64, ok: impl Fn(f64) -> Result<bool>, lower: bool) -> Option<f64> {
    let toward = |p: f64| if lower { p.next_down() } else { p.next_up() };
    let away = |p: f64| if lower { p.next_up() } else { p.next_down() };
    for _ in 0..64 {
        if ok(p).ok()? {
            for _ in 0..64 {
                let q = toward(p);
                if !ok(q).ok()? {
                    return Some(p);
                }
                p = q;
            }
            return None;
        }
        p = away(p);
    }
    None
}

fn min_uav_distance(uavs: &[[f64; 3]], layout: &GroundLayout) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (l, u) in uavs.iter().enumerate() {
        for (n, w) in layout.positions.iter().enumerate() {
            let d = distance(u, w);
            if d == 0.0 {
                return Err(Error::ZeroDistance(l, n));
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

/// Largest uniform power keeping the received power at every UAV at or below
/// `p_det`. Infinite when there are no UAVs.
pub fn max_covert_power(uavs: &[[f64; 3]], layout: &GroundLayout, p_det: f64, eta_prime: f64) -> Result<f64> {
    let d = min_uav_distance(uavs, layout)?;
    if d.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let covert = |p: f64| Ok(channel::uav_received_power(p, d, eta_prime)? <= p_det);
    tighten(p_det * d.powf(eta_prime), covert, false).ok_or_else(|| Error::NonFinite("covert power bound did not converge".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub t: usize,
    /// Connectivity lower bound.
    pub p_low: f64,
    /// min(P_max, covertness upper bound).
    pub p_high: f64,
    pub feasible: bool,
    pub p_star: Option<f64>,
    /// Largest received power over UAVs and nodes at `p_star`, W.
    pub max_received_w: Option<f64>,
    /// `(P_det - max_received) / P_det`.
    pub margin: Option<f64>,
    /// Link sets at `p_star`; empty when infeasible.
    pub link_sets: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerPlan {
    pub steps: Vec<PlanStep>,
}

#[derive(Serialize)]
struct PlanRow {
    t: usize,
    #[serde(rename = "P_star")]
    p_star: Option<f64>,
    feasible: bool,
    #[serde(rename = "max_received_W")]
    max_received_w: Option<f64>,
    margin: Option<f64>,
}

impl PowerPlan {
    pub fn all_feasible(&self) -> bool {
        self.steps.iter().all(|s| s.feasible)
    }

    pub fn feasibility_rate(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.feasible).count() as f64 / self.steps.len() as f64
    }

    /// Worst-case (largest) received power over all feasible steps.
    pub fn max_received(&self) -> Option<f64> {
        self.steps.iter().filter_map(|s| s.max_received_w).reduce(f64::max)
    }

    pub fn min_margin(&self) -> Option<f64> {
        self.steps.iter().filter_map(|s| s.margin).reduce(f64::min)
    }

    /// `t,P_star,feasible,max_received_W,margin`; empty cells for infeasible steps.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for s in &self.steps {
            out.serialize(PlanRow {
                t: s.t,
                p_star: s.p_star,
                feasible: s.feasible,
                max_received_w: s.max_received_w,
                margin: s.margin,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Minimal uniform power per planned step, or an infeasibility record with both bounds.
pub fn solve_uniform(frames: &[UavFrame], config: &LpdConfig) -> Result<PowerPlan> {
    config.validate()?;
    let channel = planning_channel(&config.channel);
    let layout = &config.layout;
    let p_low = min_connectivity_power(layout, config.c_tilde, &channel)?;
    let mut steps = Vec::with_capacity(frames.len());
    for frame in frames {
        let covert = max_covert_power(&frame.positions, layout, config.p_det, channel.eta_prime)?;
        let p_high = config.p_max.min(covert);
        let step = if p_low <= p_high {
            let d = min_uav_distance(&frame.positions, layout)?;
            let received = if d.is_infinite() { 0.0 } else { channel::uav_received_power(p_low, d, channel.eta_prime)? };
            PlanStep {
                t: frame.t,
                p_low,
                p_high,
                feasible: true,
                p_star: Some(p_low),
                max_received_w: Some(received),
                margin: Some((config.p_det - received) / config.p_det),
                link_sets: channel::link_sets(layout, p_low, &channel, None)?,
            }
        } else {
            PlanStep {
                t: frame.t,
                p_low,
                p_high,
                feasible: false,
                p_star: None,
                max_received_w: None,
                margin: None,
                link_sets: Vec::new(),
            }
        };
        steps.push(step);
    }
    Ok(PowerPlan { steps })
}

/// Smallest power on the grid `{0, step, 2 step, ..., P_max}` meeting every
/// constraint, checked directly through the channel model; `None` when no
/// grid point is feasible.
pub fn brute_force_oracle(uavs: &[[f64; 3]], config: &LpdConfig, grid_step: f64) -> Result<Option<f64>> {
    if !(grid_step > 0.0) {
        return Err(invalid("grid step must be positive"));
    }
    config.validate()?;
    let channel = planning_channel(&config.channel);
    let n_steps = (config.p_max / grid_step + 1e-9).floor() as usize;
    for k in 0..=n_steps {
        let p = (k as f64 * grid_step).min(config.p_max);
        let mut covert = true;
        for u in uavs {
            for w in &config.layout.positions {
                if channel::uav_received_power(p, distance(u, w), channel.eta_prime)? > config.p_det {
                    covert = false;
                }
            }
        }
        if !covert {
            // Received power only grows with p.
            return Ok(None);
        }
        let links = channel::link_sets(&config.layout, p, &channel, None)?;
        if links.iter().all(|set| set.len() >= config.c_tilde) {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub degrees: Vec<usize>,
    pub components: usize,
}

/// Node degrees and connected components of the link graph at power `p`.
pub fn connectivity_report(layout: &GroundLayout, p: f64, channel: &ChannelParams) -> Result<ConnectivityReport> {
    let links = channel::link_sets(layout, p, &planning_channel(channel), None)?;
    let n = layout.n;
    let mut adjacency = vec![Vec::new(); n];
    for (i, set) in links.iter().enumerate() {
        for &j in set {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for root in 0..n {
        if seen[root] {
            continue;
        }
        components += 1;
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(ConnectivityReport { degrees: links.iter().map(Vec::len).collect(), components })
}

/// Undirected edges `(i, j)`, `i < j`, of a link-set family.
pub fn topology_edges(link_sets: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = link_sets
        .iter()
        .enumerate()
        .flat_map(|(i, set)| set.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_channel() -> ChannelParams {
        ChannelParams { eta: 5.0, eta_prime: 2.0, noise_power: 1e-13, gamma_tilde_db: 10.0, fading: Fading::DeterministicUnit }
    }

    fn line3() -> GroundLayout {
        GroundLayout::new(vec![[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [200.0, 0.0, 0.0]]).unwrap()
    }

    fn line_config() -> LpdConfig {
        LpdConfig { p_max: 0.1, c_tilde: 1, p_det: 0.5e-6, channel: fixture_channel(), layout: line3() }
    }

    #[test]
    fn connectivity_power_on_a_line() {
        let p = min_connectivity_power(&line3(), 1, &fixture_channel()).unwrap();
        assert!((p - 0.01).abs() <= 1e-15, "{p}");
        assert!(min_connectivity_power(&line3(), 3, &fixture_channel()).is_err());
    }

    #[test]
    fn all_links_required_uses_the_diameter() {
        let p = min_connectivity_power(&line3(), 2, &fixture_channel()).unwrap();
        assert!((p - 10.0 * 1e-13 * 200f64.powi(5)).abs() <= 1e-12 * p);
    }

    #[test]
    fn doubling_distances_scales_by_two_to_the_eta() {
        let ch = fixture_channel();
        let layout = GroundLayout::random(12, 300.0, [0.0, 0.0], 4).unwrap();
        let doubled = GroundLayout::new(layout.positions.iter().map(|p| [2.0 * p[0], 2.0 * p[1], 0.0]).collect()).unwrap();
        let a = min_connectivity_power(&layout, 3, &ch).unwrap();
        let b = min_connectivity_power(&doubled, 3, &ch).unwrap();
        assert!((b / a - 32.0).abs() < 1e-9);
    }

    #[test]
    fn covert_power_directly_overhead() {
        let layout = GroundLayout::new(vec![[0.0, 0.0, 0.0], [500.0, 0.0, 0.0]]).unwrap();
        let p = max_covert_power(&[[0.0, 0.0, 200.0]], &layout, 0.5e-6, 2.0).unwrap();
        assert!((p - 0.02).abs() < 1e-15);
        let farther = max_covert_power(&[[0.0, 0.0, 300.0]], &layout, 0.5e-6, 2.0).unwrap();
        assert!(farther >= p);
        assert!(max_covert_power(&[[0.0, 0.0, 0.0]], &layout, 0.5e-6, 2.0).is_err());
    }

    #[test]
    fn line_plan_is_feasible() {
        let plan = solve_uniform(&[UavFrame { t: 2, positions: vec![[100.0, 0.0, 200.0]] }], &line_config()).unwrap();
        let s = &plan.steps[0];
        assert!(s.feasible);
        assert!((s.p_star.unwrap() - 0.01).abs() < 1e-15);
        assert!((s.max_received_w.unwrap() - 0.25e-6).abs() < 1e-18);
        assert!((s.margin.unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(s.link_sets, vec![vec![1], vec![0, 2], vec![1]]);
    }

    #[test]
    fn capped_power_is_infeasible() {
        let mut cfg = line_config();
        cfg.p_max = 0.005;
        let plan = solve_uniform(&[UavFrame { t: 2, positions: vec![[1e5, 0.0, 200.0]] }], &cfg).unwrap();
        assert!(!plan.steps[0].feasible);
        assert_eq!(plan.steps[0].p_star, None);
        assert!((plan.steps[0].p_low - 0.01).abs() < 1e-15);
        assert_eq!(plan.steps[0].p_high, 0.005);
        assert_eq!(brute_force_oracle(&[[1e5, 0.0, 200.0]], &cfg, 1e-5).unwrap(), None);
    }

    #[test]
    fn oracle_matches_on_the_line() {
        let cfg = line_config();
        let uav = [[100.0, 0.0, 200.0]];
        let p = brute_force_oracle(&uav, &cfg, 1e-5).unwrap().unwrap();
        assert!(p >= 0.01 && p - 0.01 <= 1e-5);
        let mut silent = cfg.clone();
        silent.p_det = 1e-30;
        assert_eq!(brute_force_oracle(&uav, &silent, 1e-5).unwrap(), None);
        assert!(!solve_uniform(&[UavFrame { t: 1, positions: uav.to_vec() }], &silent).unwrap().steps[0].feasible);
    }

    #[test]
    fn connectivity_report_cases() {
        let layout = GroundLayout::random(15, 500.0, [0.0, 0.0], 8).unwrap();
        let ch = fixture_channel();
        let r = connectivity_report(&layout, 0.0, &ch).unwrap();
        assert_eq!(r.components, 15);
        assert!(r.degrees.iter().all(|&d| d == 0));
        let p = min_connectivity_power(&layout, 4, &ch).unwrap();
        let r = connectivity_report(&layout, p, &ch).unwrap();
        assert!(r.degrees.iter().all(|&d| d >= 4));
        let sets = channel::link_sets(&layout, p, &ch, None).unwrap();
        assert_eq!(r.degrees, sets.iter().map(Vec::len).collect::<Vec<_>>());
    }

    #[test]
    fn plan_csv_has_empty_cells_when_infeasible() {
        let mut cfg = line_config();
        cfg.p_max = 0.005;
        let plan = solve_uniform(&[UavFrame { t: 3, positions: vec![[1e5, 0.0, 200.0]] }], &cfg).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,P_star,feasible,max_received_W,margin\n3,,false,,\n");
    }

    #[test]
    fn edges_are_deduplicated() {
        assert_eq!(topology_edges(&[vec![1], vec![0, 2], vec![1]]), vec![(0, 1), (1, 2)]);
    }
}
