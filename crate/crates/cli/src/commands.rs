//! The pipeline stages. Each reads its inputs from and writes its outputs to
//! the configured output directory.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use gkae_core::channel::ChannelParams;
use gkae_core::dynamics::{seeded_initial_states, simulate, HeadingInit};
use gkae_core::lpd::{connectivity_report, solve_uniform, topology_edges, LpdConfig, PowerPlan, UavFrame};
use gkae_core::model::{rollout, GkaeParams};
use gkae_core::swarmgraph::{make_dataset, TrajectoryDataset};
use gkae_core::train::{epsilon_pred, train_with_progress, HorizonError, TrainConfig, TrainReport};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, open, read_json, write_atomic, write_json};
use crate::config::ScenarioConfig;

pub struct Session {
    pub config: ScenarioConfig,
    pub quiet: bool,
}

impl Session {
    /// Validates the configuration; nothing is written before this succeeds.
    pub fn new(config: ScenarioConfig, quiet: bool) -> Result<Self> {
        config.validate().context("invalid configuration")?;
        Ok(Self { config, quiet })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn load_dataset(&self) -> Result<TrajectoryDataset> {
        let path = self.path(artifacts::DATASET);
        TrajectoryDataset::load(open(&path)?).with_context(|| format!("loading {}", path.display()))
    }

    fn load_checkpoint(&self, dataset: &TrajectoryDataset) -> Result<GkaeParams> {
        let path = self.path(artifacts::CHECKPOINT);
        let (params, _) = GkaeParams::load(open(&path)?).with_context(|| format!("loading {}", path.display()))?;
        ensure!(
            params.hyper.num_uavs == dataset.num_uavs(),
            "checkpoint is for {} UAVs, dataset has {}",
            params.hyper.num_uavs,
            dataset.num_uavs()
        );
        Ok(params)
    }

    fn held_out<'a>(&self, dataset: &'a TrajectoryDataset) -> &'a [gkae_core::swarmgraph::GraphSnapshot] {
        &dataset.snapshots[dataset.split_index(self.config.train.train_fraction)..]
    }
}

pub fn cmd_simulate(s: &Session) -> Result<TrajectoryDataset> {
    let cfg = &s.config;
    let init = cfg.random_headings.then(|| seeded_initial_states(&cfg.swarm, HeadingInit::Uniform));
    let trajectory = simulate(&cfg.swarm, cfg.steps, init.as_deref())?;
    let dataset = make_dataset(&trajectory, cfg.swarm.d_tilde)?;
    write_atomic(&s.path(artifacts::TRAJECTORY), |w| Ok(trajectory.write_csv(w)?))?;
    write_atomic(&s.path(artifacts::DATASET), |w| Ok(dataset.save(w)?))?;
    s.say(format!("seed: {}", cfg.swarm.seed));
    s.say(format!("simulated {} steps for {} UAVs -> {}", cfg.steps, cfg.swarm.num_uavs, cfg.output_dir.display()));
    Ok(dataset)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub b: usize,
    pub seed: u64,
    pub epochs: usize,
    pub num_params: usize,
    pub final_loss: f64,
    pub eps_pred: Vec<HorizonError>,
}

fn train_one(s: &Session, dataset: &TrajectoryDataset, config: &TrainConfig, dir: &PathBuf) -> Result<TrainSummary> {
    let started = Instant::now();
    let every = (config.epochs / 10).max(1);
    let (params, report): (GkaeParams, TrainReport) =
        train_with_progress(dataset, config, &s.config.horizons, |row| {
            if row.epoch % every == 0 || row.epoch == 1 {
                s.say(format!(
                    "  epoch {:>4}/{}  total {:.4e}  rec {:.4e}  pred {:.4e}",
                    row.epoch, config.epochs, row.total, row.rec, row.pred
                ));
            }
        })?;
    write_atomic(&dir.join(artifacts::CHECKPOINT), |w| Ok(params.save(w, config.seed)?))?;
    write_atomic(&dir.join(artifacts::TRAIN_REPORT), |w| Ok(report.write_csv(w)?))?;
    let summary = TrainSummary {
        b: config.b,
        seed: config.seed,
        epochs: config.epochs,
        num_params: params.num_params(),
        final_loss: report.losses.last().map_or(f64::NAN, |l| l.total),
        eps_pred: report.eps_pred.clone(),
    };
    write_json(&dir.join(artifacts::TRAIN_SUMMARY), &summary)?;
    for e in &summary.eps_pred {
        s.say(format!("  eps_pred(p={}) = {:.6}", e.p, e.eps_pred));
    }
    s.say(format!("  wall-clock {:.1} s", started.elapsed().as_secs_f64()));
    Ok(summary)
}

/// Trains the configured model, or one model per (b, seed) pair of a sweep.
pub fn cmd_train(s: &Session, sweep_b: &[usize], sweep_seeds: usize) -> Result<Vec<TrainSummary>> {
    let dataset = s.load_dataset()?;
    if sweep_b.is_empty() {
        s.say(format!("training b={} seed={}", s.config.train.b, s.config.train.seed));
        return Ok(vec![train_one(s, &dataset, &s.config.train, &s.config.output_dir)?]);
    }
    ensure!(sweep_seeds > 0, "sweep needs at least one seed");
    ensure!(sweep_b.iter().all(|&b| b > 0), "b must be positive");
    let mut summaries = Vec::new();
    for &b in sweep_b {
        for k in 0..sweep_seeds as u64 {
            let config = TrainConfig { b, seed: s.config.train.seed + k, ..s.config.train.clone() };
            let dir = s.path(artifacts::SWEEP_DIR).join(format!("b{b}_seed{}", config.seed));
            s.say(format!("training b={b} seed={}", config.seed));
            summaries.push(train_one(s, &dataset, &config, &dir)?);
        }
    }
    write_atomic(&s.path(artifacts::SWEEP_SUMMARY), |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["b".to_string(), "seed".into(), "final_loss".into()];
        header.extend(s.config.horizons.iter().map(|p| format!("eps_pred_p{p}")));
        out.write_record(&header)?;
        for sm in &summaries {
            let mut row = vec![sm.b.to_string(), sm.seed.to_string(), sm.final_loss.to_string()];
            row.extend(sm.eps_pred.iter().map(|e| e.eps_pred.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(summaries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub t: usize,
    pub uav_id: usize,
    pub x_pred: f64,
    pub y_pred: f64,
    pub x_true: f64,
    pub y_true: f64,
}

/// Rolls the model out from the first held-out snapshot for `horizon` steps
/// (default: the largest configured horizon). Returns the rows and eps_pred.
pub fn cmd_predict(s: &Session, horizon: Option<usize>) -> Result<(Vec<PredictionRow>, f64)> {
    let dataset = s.load_dataset()?;
    let params = s.load_checkpoint(&dataset)?;
    let p = horizon.unwrap_or_else(|| *s.config.horizons.iter().max().expect("validated non-empty"));
    let held = s.held_out(&dataset);
    if p < 2 || p > held.len() {
        bail!("horizon {p} must lie in [2, {}] (held-out snapshots)", held.len());
    }
    let preds = rollout(&held[0], &params, p)?;
    let mut rows = Vec::with_capacity((p - 1) * dataset.num_uavs());
    for (pred, truth) in preds.iter().zip(&held[1..p]) {
        for (uav, truth_row) in truth.features.iter().enumerate() {
            let m = dataset.normalizer.denormalize([pred[[uav, 0]], pred[[uav, 1]], pred[[uav, 2]]]);
            let tm = dataset.normalizer.denormalize(*truth_row);
            rows.push(PredictionRow { t: truth.t, uav_id: uav, x_pred: m[0], y_pred: m[1], x_true: tm[0], y_true: tm[1] });
        }
    }
    let eps = epsilon_pred(&params, held, p)?;
    write_atomic(&s.path(artifacts::PREDICTIONS), |w| {
        let mut out = csv::Writer::from_writer(w);
        for row in &rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    })?;
    s.say(format!("eps_pred(p={p}) = {eps:.6}"));
    Ok((rows, eps))
}

/// Planned UAV positions per time step: predicted x, y at the configured altitude.
pub fn read_frames(s: &Session) -> Result<Vec<UavFrame>> {
    let path = s.path(artifacts::PREDICTIONS);
    let mut reader = csv::Reader::from_reader(open(&path)?);
    let mut frames: Vec<UavFrame> = Vec::new();
    for row in reader.deserialize() {
        let row: PredictionRow = row.with_context(|| format!("reading {}", path.display()))?;
        let pos = [row.x_pred, row.y_pred, s.config.swarm.altitude];
        match frames.last_mut() {
            Some(f) if f.t == row.t => f.positions.push(pos),
            _ => frames.push(UavFrame { t: row.t, positions: vec![pos] }),
        }
    }
    ensure!(!frames.is_empty(), "{} has no rows", path.display());
    Ok(frames)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub p_star: Option<f64>,
    pub feasibility_rate: f64,
    pub max_received_w: Option<f64>,
    pub min_margin: Option<f64>,
    pub degrees: Vec<usize>,
    pub components: Option<usize>,
}

fn summarize_plan(plan: &PowerPlan, config: &LpdConfig) -> Result<PlanSummary> {
    let p_star = plan.steps.iter().find_map(|st| st.p_star);
    let report = p_star.map(|p| connectivity_report(&config.layout, p, &config.channel)).transpose()?;
    Ok(PlanSummary {
        p_star,
        feasibility_rate: plan.feasibility_rate(),
        max_received_w: plan.max_received(),
        min_margin: plan.min_margin(),
        degrees: report.as_ref().map(|r| r.degrees.clone()).unwrap_or_default(),
        components: report.map(|r| r.components),
    })
}

/// One row of a planning sweep over random ground layouts.
#[derive(Clone, Debug, PartialEq)]
pub struct VaryRow {
    pub value: f64,
    pub layouts: usize,
    /// Mean connectivity-minimal power (equals P* whenever the plan is feasible).
    pub mean_p_low: f64,
    /// Mean P* over layouts feasible at every planned step.
    pub mean_p_star: Option<f64>,
    pub feasible_fraction: f64,
}

#[derive(Clone, Debug, Default)]
pub struct VaryOptions {
    pub n: Vec<usize>,
    pub c_tilde: Vec<usize>,
    pub gamma_db: Vec<f64>,
    pub layouts: usize,
}

fn vary_row(
    s: &Session,
    frames: &[UavFrame],
    value: f64,
    layouts: usize,
    make: impl Fn(u64) -> Result<LpdConfig>,
) -> Result<VaryRow> {
    let (mut sum_low, mut stars) = (0.0, Vec::new());
    for i in 0..layouts as u64 {
        let config = make(s.config.lpd.ground.seed + i)?;
        let plan = solve_uniform(frames, &config)?;
        sum_low += plan.steps[0].p_low;
        if plan.all_feasible() {
            stars.push(plan.steps[0].p_low);
        }
    }
    Ok(VaryRow {
        value,
        layouts,
        mean_p_low: sum_low / layouts as f64,
        mean_p_star: (!stars.is_empty()).then(|| stars.iter().sum::<f64>() / stars.len() as f64),
        feasible_fraction: stars.len() as f64 / layouts as f64,
    })
}

fn write_vary(path: &std::path::Path, key: &str, rows: &[VaryRow]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([key, "layouts", "mean_p_low", "mean_p_star", "feasible_fraction"])?;
        for r in rows {
            out.write_record([
                r.value.to_string(),
                r.layouts.to_string(),
                r.mean_p_low.to_string(),
                r.mean_p_star.map_or(String::new(), |p| p.to_string()),
                r.feasible_fraction.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    })
}

pub fn read_vary(path: &std::path::Path) -> Result<Vec<VaryRow>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> { Ok(rec[i].parse()?) };
        rows.push(VaryRow {
            value: num(0)?,
            layouts: rec[1].parse()?,
            mean_p_low: num(2)?,
            mean_p_star: if rec[3].is_empty() { None } else { Some(num(3)?) },
            feasible_fraction: num(4)?,
        });
    }
    Ok(rows)
}

/// Plans transmit power against the predicted trajectory; optional sweeps
/// over node count, link requirement and SNR threshold.
pub fn cmd_plan(s: &Session, vary: &VaryOptions) -> Result<PlanSummary> {
    let frames = read_frames(s)?;
    let config = s.config.lpd_config()?;
    let plan = solve_uniform(&frames, &config)?;
    let summary = summarize_plan(&plan, &config)?;

    if !vary.n.is_empty() || !vary.c_tilde.is_empty() || !vary.gamma_db.is_empty() {
        ensure!(vary.layouts > 0, "layout count must be positive");
    }
    let base = |n: usize, c_tilde: usize, channel: ChannelParams, seed: u64| -> Result<LpdConfig> {
        let config = LpdConfig { c_tilde, channel, layout: s.config.layout_with(n, seed)?, ..config.clone() };
        config.validate()?;
        Ok(config)
    };
    let (n0, c0) = (s.config.lpd.ground.n, s.config.lpd.c_tilde);
    let mut vary_n = Vec::new();
    for &n in &vary.n {
        vary_n.push(vary_row(s, &frames, n as f64, vary.layouts, |seed| base(n, c0, s.config.channel.clone(), seed))?);
    }
    let mut vary_c = Vec::new();
    for &c in &vary.c_tilde {
        vary_c.push(vary_row(s, &frames, c as f64, vary.layouts, |seed| base(n0, c, s.config.channel.clone(), seed))?);
    }
    let mut vary_g = Vec::new();
    for &g in &vary.gamma_db {
        let channel = ChannelParams { gamma_tilde_db: g, ..s.config.channel.clone() };
        vary_g.push(vary_row(s, &frames, g, vary.layouts, |seed| base(n0, c0, channel.clone(), seed))?);
    }

    write_atomic(&s.path(artifacts::POWER_PLAN), |w| Ok(plan.write_csv(w)?))?;
    write_json(&s.path(artifacts::CONNECTIVITY), &summary)?;
    let links = plan.steps.iter().find(|st| st.feasible).map(|st| st.link_sets.clone()).unwrap_or_default();
    write_atomic(&s.path(artifacts::TOPOLOGY), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "x_i", "y_i", "x_j", "y_j"])?;
        for (i, j) in topology_edges(&links) {
            let (a, b) = (config.layout.positions[i], config.layout.positions[j]);
            out.write_record([i.to_string(), j.to_string(), a[0].to_string(), a[1].to_string(), b[0].to_string(), b[1].to_string()])?;
        }
        out.flush()?;
        Ok(())
    })?;
    if !vary_n.is_empty() {
        write_vary(&s.path(artifacts::VARY_N), "N", &vary_n)?;
    }
    if !vary_c.is_empty() {
        write_vary(&s.path(artifacts::VARY_C), "C_tilde", &vary_c)?;
    }
    if !vary_g.is_empty() {
        write_vary(&s.path(artifacts::VARY_GAMMA), "gamma_tilde_db", &vary_g)?;
    }

    match summary.p_star {
        Some(p) => s.say(format!(
            "P* = {p:.4e} W, feasible at {:.1}% of steps, min margin {:.1}%, {} component(s)",
            100.0 * summary.feasibility_rate,
            100.0 * summary.min_margin.unwrap_or(f64::NAN),
            summary.components.unwrap_or(0)
        )),
        None => s.say("no feasible transmit power at any step"),
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub eps_pred: Vec<HorizonError>,
    pub plan: PlanSummary,
    pub gates: Vec<GateResult>,
    pub passed: bool,
}

impl Metrics {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        read_json(path)
    }

    pub fn failed_gates(&self) -> Vec<&str> {
        self.gates.iter().filter(|g| !g.passed).map(|g| g.name.as_str()).collect()
    }
}

/// Recomputes every metric from the upstream artifacts and checks the gates.
pub fn cmd_evaluate(s: &Session) -> Result<Metrics> {
    let cfg = &s.config;
    let dataset = s.load_dataset()?;
    let params = s.load_checkpoint(&dataset)?;
    let held = s.held_out(&dataset);
    let eps_pred = cfg
        .horizons
        .iter()
        .map(|&p| Ok(HorizonError { p, eps_pred: epsilon_pred(&params, held, p)? }))
        .collect::<Result<Vec<_>>>()?;
    let frames = read_frames(s)?;
    let lpd = cfg.lpd_config()?;
    let plan = summarize_plan(&solve_uniform(&frames, &lpd)?, &lpd)?;

    let mut gates: Vec<GateResult> = eps_pred
        .iter()
        .map(|e| GateResult {
            name: format!("eps_pred_p{}", e.p),
            passed: e.eps_pred <= cfg.gates.eps_pred_max,
            value: Some(e.eps_pred),
            threshold: cfg.gates.eps_pred_max,
        })
        .collect();
    gates.push(GateResult {
        name: "feasibility".into(),
        passed: plan.feasibility_rate >= cfg.gates.min_feasibility_rate,
        value: Some(plan.feasibility_rate),
        threshold: cfg.gates.min_feasibility_rate,
    });
    gates.push(GateResult {
        name: "covertness_margin".into(),
        passed: plan.min_margin.is_some_and(|m| m > 0.0) && plan.max_received_w.is_some_and(|r| r <= cfg.lpd.p_det),
        value: plan.min_margin,
        threshold: 0.0,
    });
    gates.push(GateResult {
        name: "connectivity_components".into(),
        passed: plan.components.is_some_and(|c| c <= cfg.gates.max_components),
        value: plan.components.map(|c| c as f64),
        threshold: cfg.gates.max_components as f64,
    });
    let passed = gates.iter().all(|g| g.passed);
    let metrics = Metrics { eps_pred, plan, gates, passed };
    write_json(&s.path(artifacts::METRICS), &metrics)?;
    for g in &metrics.gates {
        s.say(format!("{} {}: {:?} (threshold {})", if g.passed { "PASS" } else { "FAIL" }, g.name, g.value, g.threshold));
    }
    Ok(metrics)
}

/// simulate -> train -> predict -> plan -> evaluate.
pub fn cmd_run(s: &Session) -> Result<Metrics> {
    cmd_simulate(s)?;
    cmd_train(s, &[], 1)?;
    cmd_predict(s, None)?;
    cmd_plan(s, &VaryOptions::default())?;
    cmd_evaluate(s)
}

/// Prints the effective configuration as JSON.
pub fn cmd_config(config: &ScenarioConfig, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, config)?;
    writeln!(out)?;
    Ok(())
}
