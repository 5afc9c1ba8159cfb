//! Closed-loop simulation, traces and multi-seed experiments.
//!
//! Indexing: step `n >= 1` plays in state `theta_n`, produces reward
//! `kappa_n`, and the running average after it is `x_n = (1/n) sum_{j<=n}
//! kappa_j`, so `x_1 = kappa_1`. The controller decides step `n` from
//! `x_{n-1}` (with `x_0 = 0`). Re-scaled time is `t(n) = sum_{i<=n} 1/i`.
//!
//! Randomness comes from one ChaCha8 stream per run: the root seed selects the
//! key and the run index selects the stream. Each step draws exactly three
//! uniforms, in the order player action, adversary action, transition.

use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{Adversary, AdversaryPolicy, Observation};
use crate::controller::{AnchorEntry, Controller, ControllerParams, SwitchRecord};
use crate::error::{exit_code, ControllerError, GeometryError};
use crate::game_model::{sample_index, GameModel};
use crate::scalar::{dist, KahanSum, Scalar};
use crate::target_geometry::{compute_vmax, ConvexTarget, RewardGeometry};

/// Steps at which distances are reported (the horizon is always added).
pub const CHECKPOINTS: [u64; 3] = [1_000, 10_000, 100_000];
/// Largest number of strided rows kept by default.
pub const DEFAULT_MAX_ROWS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time {0} outside the recorded range")]
    TimeOutOfRange(f64),
    #[error("step {0} is not recorded in the trace")]
    MissingStep(u64),
    #[error("window [{l}, {r}) is empty or out of range")]
    BadWindow { l: u64, r: u64 },
    #[error("window [{l}, {r}) spans a strategy switch at step {at}")]
    WindowSpansSwitch { l: u64, r: u64, at: u64 },
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
}

/// `x_{n+1} = x_n + (kappa - x_n) / (n + 1)`.
pub fn step_average<T: Scalar>(x: &[T], kappa: &[T], n: u64) -> Vec<T> {
    let w = T::from_u64(n + 1).unwrap();
    x.iter().zip(kappa).map(|(&xi, &ki)| xi + (ki - xi) / w).collect()
}

#[derive(Debug, Clone)]
pub struct RunConfig<T> {
    pub model: Arc<GameModel<T>>,
    pub target: Arc<ConvexTarget<T>>,
    pub controller: ControllerParams,
    pub adversary: AdversaryPolicy<T>,
    pub horizon: u64,
    /// Root seed shared by all runs of an experiment.
    pub seed: u64,
    /// Run index, used as the ChaCha stream id.
    pub stream: u64,
    pub initial_state: usize,
    /// Record every `stride`-th step; switch steps are always recorded.
    /// `None` picks `max(1, horizon / 100000)`.
    pub record_stride: Option<u64>,
    /// When false only the summary, anchors and switch log are kept.
    pub keep_rows: bool,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(model: Arc<GameModel<T>>, target: Arc<ConvexTarget<T>>, horizon: u64) -> Self {
        Self {
            model,
            target,
            controller: ControllerParams::default(),
            adversary: AdversaryPolicy::UniformRandom,
            horizon,
            seed: 0,
            stream: 0,
            initial_state: 0,
            record_stride: None,
            keep_rows: true,
        }
    }

    pub fn stride(&self) -> u64 {
        self.record_stride
            .unwrap_or_else(|| (self.horizon / DEFAULT_MAX_ROWS).max(1))
            .max(1)
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.initial_state >= self.model.states() {
            return Err(SimError::InvalidConfig(format!(
                "initial state {} out of range",
                self.initial_state
            )));
        }
        if self.record_stride == Some(0) {
            return Err(SimError::InvalidConfig("record stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub n: u64,
    pub t: T,
    pub state: usize,
    pub u_p: usize,
    pub u_a: usize,
    pub kappa: Vec<T>,
    pub x: Vec<T>,
    pub dist: T,
    pub anchor: Option<usize>,
    pub switched: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    AssumptionViolated { step: u64, margin: f64, point: Vec<f64> },
    SolverFailure { step: u64, message: String },
    ConfigError { message: String },
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "ok",
            RunStatus::AssumptionViolated { .. } => "assumption-violated",
            RunStatus::SolverFailure { .. } => "solver-failure",
            RunStatus::ConfigError { .. } => "config-error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => exit_code::SUCCESS,
            RunStatus::AssumptionViolated { .. } => exit_code::ASSUMPTION_VIOLATED,
            RunStatus::SolverFailure { .. } => exit_code::SOLVER_FAILURE,
            RunStatus::ConfigError { .. } => exit_code::CONFIG,
        }
    }

    fn from_controller(step: u64, err: ControllerError) -> Self {
        match err {
            ControllerError::AssumptionViolated { point, margin } => {
                RunStatus::AssumptionViolated { step, margin, point }
            }
            ControllerError::InvalidParameter(m) | ControllerError::Degenerate(m) => {
                RunStatus::ConfigError { message: m }
            }
            other => RunStatus::SolverFailure {
                step,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<T> {
    pub steps: u64,
    pub anchors: usize,
    pub switches: usize,
    pub min_dist: T,
    pub final_dist: T,
    /// `(n, dist(x_n))` at the reporting checkpoints reached.
    pub checkpoints: Vec<(u64, T)>,
}

impl<T: Scalar> RunSummary<T> {
    pub fn dist_at(&self, n: u64) -> Option<T> {
        self.checkpoints.iter().find(|(m, _)| *m == n).map(|(_, d)| *d)
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub switch_log: Vec<SwitchRecord<T>>,
    pub anchors: Vec<AnchorEntry<T>>,
    pub geometry: RewardGeometry<T>,
    pub summary: RunSummary<T>,
    pub status: RunStatus,
    pub final_x: Vec<T>,
}

fn checkpoint_steps(horizon: u64) -> Vec<u64> {
    let mut steps: Vec<u64> = CHECKPOINTS.iter().copied().filter(|&c| c < horizon).collect();
    steps.push(horizon);
    steps
}

/// Simulates one closed-loop run. Controller or adversary failures end the
/// run early; the partial trace is returned with the failure status.
pub fn run<T: Scalar>(config: &RunConfig<T>) -> RunTrace<T> {
    let model = config.model.as_ref();
    let target = config.target.as_ref();
    let geometry = compute_vmax(model);
    let empty = |status: RunStatus| RunTrace {
        rows: Vec::new(),
        switch_log: Vec::new(),
        anchors: Vec::new(),
        geometry,
        summary: RunSummary {
            steps: 0,
            anchors: 0,
            switches: 0,
            min_dist: T::infinity(),
            final_dist: T::infinity(),
            checkpoints: Vec::new(),
        },
        status,
        final_x: vec![T::zero(); model.dim()],
    };
    if let Err(e) = config.validate() {
        return empty(RunStatus::ConfigError { message: e.to_string() });
    }
    let mut controller = match Controller::new(model, target, geometry, config.controller) {
        Ok(c) => c,
        Err(e) => return empty(RunStatus::from_controller(0, e)),
    };
    let mut adversary = match Adversary::new(
        config.adversary.clone(),
        model,
        target,
        config.controller.rvi_options(),
        T::lit(config.controller.membership_tol),
    ) {
        Ok(a) => a,
        Err(e) => return empty(RunStatus::ConfigError { message: e.to_string() }),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    let stride = config.stride();
    let checkpoints = checkpoint_steps(config.horizon);

    let mut x = vec![T::zero(); model.dim()];
    let mut clock = KahanSum::<T>::new();
    let mut state = config.initial_state;
    let mut rows = Vec::new();
    let mut reached = Vec::new();
    let mut min_dist = T::infinity();
    let mut final_dist = T::infinity();
    let mut status = RunStatus::Completed;
    let mut steps = 0;

    for n in 1..=config.horizon {
        let decision = match controller.on_step(n, &x, state) {
            Ok(d) => d,
            Err(e) => {
                status = RunStatus::from_controller(n, e);
                break;
            }
        };
        let strategy = controller.strategy();
        let u_p = strategy.sample(state, T::lit(rng.gen::<f64>()));
        let obs = Observation {
            step: n,
            state,
            player_strategy: strategy,
            player_switched: decision.switched,
            x_prev: &x,
        };
        let u_a = match adversary.action(&obs, T::lit(rng.gen::<f64>())) {
            Ok(a) => a,
            Err(e) => {
                status = RunStatus::SolverFailure {
                    step: n,
                    message: e.to_string(),
                };
                break;
            }
        };
        let kappa = model.reward(state, u_p, u_a);
        x = step_average(&x, kappa, n - 1);
        clock.add(T::one() / T::from_u64(n).unwrap());
        let d = match target.distance(&x) {
            Ok(d) => d,
            Err(e) => {
                status = RunStatus::SolverFailure {
                    step: n,
                    message: e.to_string(),
                };
                break;
            }
        };
        min_dist = min_dist.min(d);
        final_dist = d;
        steps = n;
        if checkpoints.contains(&n) {
            reached.push((n, d));
        }
        if config.keep_rows && (decision.switched || n % stride == 0 || n == 1 || n == config.horizon) {
            rows.push(TraceRow {
                n,
                t: clock.value(),
                state,
                u_p,
                u_a,
                kappa: kappa.to_vec(),
                x: x.clone(),
                dist: d,
                anchor: decision.anchor,
                switched: decision.switched,
            });
        }
        state = sample_index(model.transition(state, u_p, u_a), T::lit(rng.gen::<f64>()));
    }

    let switch_log = controller.switch_log().to_vec();
    let anchors = controller.anchors().to_vec();
    RunTrace {
        summary: RunSummary {
            steps,
            anchors: anchors.len(),
            switches: switch_log.len(),
            min_dist,
            final_dist,
            checkpoints: reached,
        },
        rows,
        switch_log,
        anchors,
        geometry,
        status,
        final_x: x,
    }
}

impl<T: Scalar> RunTrace<T> {
    fn row_index(&self, n: u64) -> Result<usize, SimError> {
        self.rows
            .binary_search_by_key(&n, |r| r.n)
            .map_err(|_| SimError::MissingStep(n))
    }

    /// Piecewise-linear interpolation of the recorded averages in re-scaled
    /// time. Exact at recorded knots; between consecutive steps it is the
    /// interpolated trajectory `x̄(t)`.
    pub fn interpolate(&self, t: T) -> Result<Vec<T>, SimError> {
        let (first, last) = match (self.rows.first(), self.rows.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(SimError::TimeOutOfRange(t.as_f64())),
        };
        if !(t >= first.t && t <= last.t) {
            return Err(SimError::TimeOutOfRange(t.as_f64()));
        }
        let k = self.rows.partition_point(|r| r.t <= t);
        if k == self.rows.len() {
            return Ok(last.x.clone());
        }
        let (a, b) = (&self.rows[k - 1], &self.rows[k]);
        if t == a.t {
            return Ok(a.x.clone());
        }
        let span = b.t - a.t;
        let wa = (b.t - t) / span;
        let wb = (t - a.t) / span;
        Ok(a.x.iter().zip(&b.x).map(|(&xa, &xb)| wa * xa + wb * xb).collect())
    }

    /// Largest `|x_b - x_a| - v_max (t_b - t_a)` over consecutive recorded
    /// rows; nonpositive (up to round-off) when the trajectory is
    /// `v_max`-Lipschitz in re-scaled time.
    pub fn lipschitz_excess(&self) -> T {
        self.rows
            .windows(2)
            .map(|w| dist(&w[1].x, &w[0].x) - self.geometry.v_max * (w[1].t - w[0].t))
            .fold(T::neg_infinity(), T::max)
    }

    /// Mean reward over steps `l..r`, which must be recorded and played
    /// without a switch strictly inside the window.
    pub fn window_block_average(&self, l: u64, r: u64) -> Result<Vec<T>, SimError> {
        if l >= r || l == 0 {
            return Err(SimError::BadWindow { l, r });
        }
        let start = self.row_index(l)?;
        let len = (r - l) as usize;
        let rows = self.rows.get(start..start + len).ok_or(SimError::MissingStep(r - 1))?;
        let mut acc = vec![KahanSum::<T>::new(); rows[0].kappa.len()];
        for (offset, row) in rows.iter().enumerate() {
            let expected = l + offset as u64;
            if row.n != expected {
                return Err(SimError::MissingStep(expected));
            }
            if row.switched && row.n != l {
                return Err(SimError::WindowSpansSwitch { l, r, at: row.n });
            }
            for (a, &k) in acc.iter_mut().zip(&row.kappa) {
                a.add(k);
            }
        }
        let count = T::from_usize(len).unwrap();
        Ok(acc.iter().map(|a| a.value() / count).collect())
    }

    /// Switch windows starting at or after `min_step` from outside the target:
    /// how many satisfy `d_next <= d * exp(-(t_next - t)) + slack / s`.
    pub fn decay_windows(&self, min_step: u64, slack: f64) -> DecayStats {
        let mut stats = DecayStats::default();
        for w in self.switch_log.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.step < min_step || a.anchor.is_none() {
                continue;
            }
            let bound = a.distance.as_f64() * (-(b.time - a.time).as_f64()).exp() + slack / a.step as f64;
            stats.windows += 1;
            if b.distance.as_f64() <= bound {
                stats.satisfied += 1;
            }
        }
        stats
    }
}

/// Empirical behavior of the chain under a fixed strategy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAverages<T> {
    pub mean_reward: Vec<T>,
    pub state_frequency: Vec<T>,
    /// Means of consecutive blocks of `block` steps.
    pub block_means: Vec<Vec<T>>,
}

/// Samples `steps` transitions with both strategies held fixed, using the
/// same three-draw step as [`run`].
#[allow(clippy::too_many_arguments)]
pub fn sample_path<T: Scalar>(
    model: &GameModel<T>,
    pi_p: &crate::game_model::StationaryStrategy<T>,
    pi_a: &crate::game_model::StationaryStrategy<T>,
    steps: u64,
    block: u64,
    seed: u64,
    stream: u64,
    initial_state: usize,
) -> PathAverages<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dim = model.dim();
    let mut total = vec![KahanSum::<T>::new(); dim];
    let mut block_acc = vec![KahanSum::<T>::new(); dim];
    let mut visits = vec![0u64; model.states()];
    let mut block_means = Vec::new();
    let mut state = initial_state;
    let block = block.max(1);
    for n in 1..=steps {
        visits[state] += 1;
        let u_p = pi_p.sample(state, T::lit(rng.gen::<f64>()));
        let u_a = pi_a.sample(state, T::lit(rng.gen::<f64>()));
        for ((t, b), &k) in total
            .iter_mut()
            .zip(block_acc.iter_mut())
            .zip(model.reward(state, u_p, u_a))
        {
            t.add(k);
            b.add(k);
        }
        if n % block == 0 {
            let len = T::from_u64(block).unwrap();
            block_means.push(block_acc.iter().map(|b| b.value() / len).collect());
            block_acc = vec![KahanSum::new(); dim];
        }
        state = sample_index(model.transition(state, u_p, u_a), T::lit(rng.gen::<f64>()));
    }
    let count = T::from_u64(steps.max(1)).unwrap();
    PathAverages {
        mean_reward: total.iter().map(|t| t.value() / count).collect(),
        state_frequency: visits.iter().map(|&v| T::from_u64(v).unwrap() / count).collect(),
        block_means,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecayStats {
    pub windows: usize,
    pub satisfied: usize,
}

impl DecayStats {
    pub fn fraction(&self) -> f64 {
        if self.windows == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.windows as f64
        }
    }

    pub fn merge(self, other: DecayStats) -> DecayStats {
        DecayStats {
            windows: self.windows + other.windows,
            satisfied: self.satisfied + other.satisfied,
        }
    }
}

/// Runs every config under every run index in `seeds`, in parallel. Results
/// are ordered by (config, seed) regardless of completion order.
pub fn run_batch<T: Scalar>(configs: &[RunConfig<T>], seeds: &[u64]) -> Vec<RunTrace<T>> {
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(c, s)| {
            let mut cfg = configs[c].clone();
            cfg.stream = s;
            run(&cfg)
        })
        .collect()
}

/// Decay check applied by [`experiment`]: windows from step `10^4` with
/// slack `10 / s_n`.
pub const DECAY_MIN_STEP: u64 = 10_000;
pub const DECAY_SLACK: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config_id: String,
    pub seed: u64,
    pub steps: u64,
    /// `dist` at `10^3, 10^4, 10^5` (absent past the horizon).
    pub dist_checkpoints: [Option<f64>; 3],
    pub dist_final: f64,
    pub switches: usize,
    pub anchors: usize,
    pub status: String,
    pub decay: DecayStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub config_id: String,
    pub runs: usize,
    pub ok: usize,
    pub violations: usize,
    pub steps: u64,
    pub median_checkpoints: [Option<f64>; 3],
    pub median_final: f64,
    pub median_switches: f64,
    pub median_anchors: f64,
    pub decay: DecayStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<AggregateRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec<T> {
    pub id: String,
    pub config: RunConfig<T>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

pub fn summarize<T: Scalar>(id: &str, seed: u64, trace: &RunTrace<T>) -> SummaryRow {
    let s = &trace.summary;
    SummaryRow {
        config_id: id.to_string(),
        seed,
        steps: s.steps,
        dist_checkpoints: CHECKPOINTS.map(|c| s.dist_at(c).map(Scalar::as_f64)),
        dist_final: s.final_dist.as_f64(),
        switches: s.switches,
        anchors: s.anchors,
        status: trace.status.label().to_string(),
        decay: trace.decay_windows(DECAY_MIN_STEP, DECAY_SLACK),
    }
}

/// Runs all `(config, seed)` pairs and reduces them into per-run rows plus
/// one aggregate per config. Failed runs are reported, never fatal.
pub fn experiment<T: Scalar>(specs: &[ExperimentSpec<T>], seeds: &[u64]) -> ExperimentSummary {
    let configs: Vec<RunConfig<T>> = specs
        .iter()
        .map(|s| RunConfig {
            keep_rows: false,
            ..s.config.clone()
        })
        .collect();
    let traces = run_batch(&configs, seeds);
    let rows: Vec<SummaryRow> = traces
        .iter()
        .enumerate()
        .map(|(i, trace)| summarize(&specs[i / seeds.len()].id, seeds[i % seeds.len()], trace))
        .collect();
    let aggregates = specs
        .iter()
        .enumerate()
        .map(|(c, spec)| aggregate(&spec.id, &rows[c * seeds.len()..(c + 1) * seeds.len()]))
        .collect();
    ExperimentSummary { rows, aggregates }
}

pub fn aggregate(id: &str, rows: &[SummaryRow]) -> AggregateRow {
    let med = |f: &dyn Fn(&SummaryRow) -> Option<f64>| {
        let mut v: Vec<f64> = rows.iter().filter_map(f).collect();
        if v.is_empty() {
            None
        } else {
            Some(median(&mut v))
        }
    };
    AggregateRow {
        config_id: id.to_string(),
        runs: rows.len(),
        ok: rows.iter().filter(|r| r.status == "ok").count(),
        violations: rows.iter().filter(|r| r.status == "assumption-violated").count(),
        steps: rows.iter().map(|r| r.steps).max().unwrap_or(0),
        median_checkpoints: [0, 1, 2].map(|k| med(&|r: &SummaryRow| r.dist_checkpoints[k])),
        median_final: med(&|r| Some(r.dist_final)).unwrap_or(f64::NAN),
        median_switches: med(&|r| Some(r.switches as f64)).unwrap_or(f64::NAN),
        median_anchors: med(&|r| Some(r.anchors as f64)).unwrap_or(f64::NAN),
        decay: rows.iter().fold(DecayStats::default(), |acc, r| acc.merge(r.decay)),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const SUMMARY_HEADER: &str = "config_id,seed,steps,dist_1e3,dist_1e4,dist_1e5,dist_final,switches,anchors,status";

/// Summary CSV: one row per run, then one `aggregate` row per config with
/// medians and `ok=<k>/<n>` in the status column.
pub fn write_summary_csv<W: Write>(out: &mut W, summary: &ExperimentSummary) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in &summary.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            field(&r.config_id),
            r.seed,
            r.steps,
            opt_num(r.dist_checkpoints[0]),
            opt_num(r.dist_checkpoints[1]),
            opt_num(r.dist_checkpoints[2]),
            num(r.dist_final),
            r.switches,
            r.anchors,
            r.status
        )?;
    }
    for a in &summary.aggregates {
        writeln!(
            out,
            "{},aggregate,{},{},{},{},{},{},{},ok={}/{}",
            field(&a.config_id),
            a.steps,
            opt_num(a.median_checkpoints[0]),
            opt_num(a.median_checkpoints[1]),
            opt_num(a.median_checkpoints[2]),
            num(a.median_final),
            num(a.median_switches),
            num(a.median_anchors),
            a.ok,
            a.runs
        )?;
    }
    Ok(())
}

pub fn trace_header(dim: usize) -> String {
    let mut cols = vec!["n".to_string(), "t".into(), "state".into(), "u_p".into(), "u_a".into()];
    cols.extend((0..dim).map(|k| format!("kappa_{k}")));
    cols.extend((0..dim).map(|k| format!("x_{k}")));
    cols.extend(["dist".to_string(), "anchor".into(), "switch".into()]);
    cols.join(",")
}

/// Trace CSV with 17 significant digits per real and `-1` for "no anchor".
pub fn write_trace_csv<T: Scalar, W: Write>(out: &mut W, trace: &RunTrace<T>, dim: usize) -> io::Result<()> {
    writeln!(out, "{}", trace_header(dim))?;
    let mut line = String::new();
    for r in &trace.rows {
        line.clear();
        line.push_str(&format!(
            "{},{},{},{},{}",
            r.n,
            num(r.t.as_f64()),
            r.state,
            r.u_p,
            r.u_a
        ));
        for v in r.kappa.iter().chain(&r.x) {
            line.push(',');
            line.push_str(&num(v.as_f64()));
        }
        let anchor = r.anchor.map_or(-1, |a| a as i64);
        line.push_str(&format!(
            ",{},{},{}",
            num(r.dist.as_f64()),
            anchor,
            u8::from(r.switched)
        ));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Warns when the target cannot meet the bounding box of the rewards, which
/// makes approachability impossible.
pub fn warn_if_unreachable<T: Scalar>(model: &GameModel<T>, target: &ConvexTarget<T>) -> Result<bool, GeometryError> {
    let (lo, hi) = model.reward_bounds();
    let disjoint = target.disjoint_from_box(&lo, &hi)?;
    if disjoint {
        log::warn!("target set does not meet the bounding box of the reward vectors; it cannot be approached");
    }
    Ok(disjoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_average_examples() {
        assert_eq!(step_average(&[5.0, -3.0], &[1.0, 2.0], 0), vec![1.0, 2.0]);
        let x = step_average(&[1.0, 0.0], &[0.0, 1.0], 2);
        assert_abs_diff_eq!(x[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(step_average(&[0.25, 0.5], &[0.25, 0.5], 41), vec![0.25, 0.5]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn checkpoints_include_horizon() {
        assert_eq!(checkpoint_steps(500), vec![500]);
        assert_eq!(checkpoint_steps(200_000), vec![1_000, 10_000, 100_000, 200_000]);
        assert_eq!(checkpoint_steps(10_000), vec![1_000, 10_000]);
    }

    #[test]
    fn trace_header_layout() {
        assert_eq!(
            trace_header(2),
            "n,t,state,u_p,u_a,kappa_0,kappa_1,x_0,x_1,dist,anchor,switch"
        );
    }
}
