//! Command line front end: separating strategies, simulations, experiment
//! suites and assumption checks.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use markov_approach::config::{AdversaryDocument, ConfigDocument};
use markov_approach::error::exit_code;
use markov_approach::sim::{self, write_summary_csv, write_trace_csv, ExperimentSpec, ExperimentSummary};
use markov_approach::{
    check_ergodicity, separating_strategy, ConfigError, ControllerError, ErgodicityReport, GeometryError, ModelError,
    Run, RunStatus, SolverError,
};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(version, about = "Approachability controller for finite controlled Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separating strategy, margin and game value at one point, as JSON.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Comma separated coordinates, e.g. `0.5,1`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
        /// Take the target from the config file (the only supported source).
        #[arg(long)]
        target_from_config: bool,
    },
    /// Closed-loop runs over several seeds, one trace CSV per run.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        /// Number of runs; run `k` uses stream `k` of the root seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Root seed (overrides `run.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// `uniform-random`, `best-response`, `antagonist[:k]` or `fixed:<action>`.
        #[arg(long)]
        adversary: Option<String>,
        /// Record every n-th step (overrides `run.record_stride`).
        #[arg(long)]
        stride: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every config of a suite over its seeds and writes a summary CSV.
    Experiment {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ergodicity report and separation margins at the given points.
    CheckAssumption {
        #[arg(long)]
        config: PathBuf,
        /// JSON file `{"points": [[x1, x2, ...], ...]}`.
        #[arg(long)]
        grid_points: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    #[serde(default)]
    seed: u64,
    /// Runs per config.
    seeds: u64,
    configs: Vec<SuiteEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteEntry {
    id: String,
    config: ConfigSource,
    #[serde(default)]
    steps: Option<u64>,
    #[serde(default)]
    adversary: Option<String>,
}

/// A config file path (relative to the suite file) or an inline document.
#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigSource {
    Path(PathBuf),
    Inline(Box<ConfigDocument>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridPoints {
    points: Vec<Vec<f64>>,
}

fn load_config(path: &Path) -> Result<ConfigDocument> {
    ConfigDocument::from_path(path).with_context(|| format!("reading config {}", path.display()))
}

fn run_config(doc: &ConfigDocument, steps: Option<u64>, adversary: Option<&str>) -> Result<Run> {
    let mut cfg = doc.run_config::<f64>()?;
    if let Some(steps) = steps {
        cfg.horizon = steps;
    }
    if let Some(flag) = adversary {
        cfg.adversary = AdversaryDocument::from_flag(flag, doc.states, doc.adversary_actions)?.to_policy()?;
        cfg.adversary.validate(&cfg.model).map_err(ConfigError::from)?;
    }
    if cfg.horizon == 0 {
        return Err(ConfigError::Invalid("steps must be at least 1".into()).into());
    }
    sim::warn_if_unreachable(&cfg.model, &cfg.target)?;
    Ok(cfg)
}

fn solve(config: &Path, point: &[f64]) -> Result<i32> {
    let doc = load_config(config)?;
    let model = doc.model::<f64>()?;
    let target = doc.target::<f64>()?;
    if point.len() != model.dim() {
        return Err(ConfigError::Invalid(format!(
            "point has {} coordinates, model has {}",
            point.len(),
            model.dim()
        ))
        .into());
    }
    let params = doc.controller_params();
    let sep = match separating_strategy(&model, &target, point, params.membership_tol, &params.rvi_options()) {
        Err(ControllerError::InsideTarget(_)) => {
            return Err(ConfigError::Invalid("point lies in the target; nothing to separate".into()).into())
        }
        other => other?,
    };
    let status = if sep.is_separated() {
        "separated"
    } else {
        "assumption-violated"
    };
    let out = json!({
        "point": point,
        "projection": sep.projection,
        "distance": sep.distance,
        "strategy": sep.strategy.to_rows(),
        "margin": sep.margin,
        "value": sep.value,
        "iterations": sep.iterations,
        "status": status,
    });
    emit(&out)?;
    Ok(if sep.is_separated() {
        exit_code::SUCCESS
    } else {
        exit_code::ASSUMPTION_VIOLATED
    })
}

fn emit(value: &Value) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

fn write_csv<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}

/// Worst exit code over the run statuses: solver failures dominate
/// assumption violations.
fn batch_exit_code<'a>(statuses: impl Iterator<Item = &'a RunStatus>) -> i32 {
    statuses
        .map(RunStatus::exit_code)
        .fold(exit_code::SUCCESS, |acc, c| match (acc, c) {
            (exit_code::SOLVER_FAILURE, _) | (_, exit_code::SOLVER_FAILURE) => exit_code::SOLVER_FAILURE,
            (a, b) => a.max(b),
        })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: &Path,
    steps: Option<u64>,
    seeds: u64,
    seed: Option<u64>,
    adversary: Option<&str>,
    stride: Option<u64>,
    out: &Path,
) -> Result<i32> {
    if seeds == 0 {
        return Err(ConfigError::Invalid("--seeds must be at least 1".into()).into());
    }
    let doc = load_config(config)?;
    let mut cfg = run_config(&doc, steps, adversary)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(stride) = stride {
        if stride == 0 {
            return Err(ConfigError::Invalid("--stride must be at least 1".into()).into());
        }
        cfg.record_stride = Some(stride);
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let id = config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("config")
        .to_string();
    let streams: Vec<u64> = (0..seeds).collect();
    let traces = markov_approach::run_batch(std::slice::from_ref(&cfg), &streams);
    let mut rows = Vec::with_capacity(traces.len());
    for (k, trace) in traces.iter().enumerate() {
        write_csv(&out.join(format!("trace_seed{k}.csv")), |w| {
            write_trace_csv(w, trace, doc.dim)
        })?;
        let row = sim::summarize(&id, k as u64, trace);
        println!(
            "seed {k}: {} after {} steps, final dist {:.6e}, {} anchors, {} switches",
            row.status, row.steps, row.dist_final, row.anchors, row.switches
        );
        if let RunStatus::AssumptionViolated { step, margin, point } = &trace.status {
            eprintln!("seed {k}: assumption violated at step {step}, point {point:?}, margin {margin:.6e}");
        }
        rows.push(row);
    }
    let summary = ExperimentSummary {
        aggregates: vec![sim::aggregate(&id, &rows)],
        rows,
    };
    write_csv(&out.join("summary.csv"), |w| write_summary_csv(w, &summary))?;
    Ok(batch_exit_code(traces.iter().map(|t| &t.status)))
}

fn experiment(suite_path: &Path, out: &Path) -> Result<i32> {
    let text = fs::read_to_string(suite_path)
        .map_err(ConfigError::from)
        .with_context(|| format!("reading suite {}", suite_path.display()))?;
    let suite: Suite = serde_json::from_str(&text).map_err(ConfigError::from)?;
    if suite.configs.is_empty() || suite.seeds == 0 {
        return Err(ConfigError::Invalid("suite needs at least one config and one seed".into()).into());
    }
    let base = suite_path.parent().unwrap_or(Path::new("."));
    let mut specs = Vec::with_capacity(suite.configs.len());
    for entry in &suite.configs {
        let doc = match &entry.config {
            ConfigSource::Path(p) => load_config(&base.join(p))?,
            ConfigSource::Inline(d) => (**d).clone(),
        };
        let mut cfg = run_config(&doc, entry.steps, entry.adversary.as_deref())
            .with_context(|| format!("config {}", entry.id))?;
        cfg.seed = suite.seed;
        specs.push(ExperimentSpec {
            id: entry.id.clone(),
            config: cfg,
        });
    }
    let streams: Vec<u64> = (0..suite.seeds).collect();
    let summary = markov_approach::experiment(&specs, &streams);
    write_csv(out, |w| write_summary_csv(w, &summary))?;
    for a in &summary.aggregates {
        println!(
            "{}: {}/{} ok, median final dist {:.6e}, decay {}/{}",
            a.config_id, a.ok, a.runs, a.median_final, a.decay.satisfied, a.decay.windows
        );
    }
    Ok(exit_code::SUCCESS)
}

fn ergodicity_json(report: &ErgodicityReport<f64>) -> Value {
    match report {
        ErgodicityReport::Pass {
            anchor_state,
            horizon,
            delta,
            aperiodicity_lag,
        } => json!({
            "status": "pass",
            "anchor_state": anchor_state,
            "horizon": horizon,
            "delta": delta,
            "aperiodicity_lag": aperiodicity_lag,
        }),
        ErgodicityReport::Inconclusive { message } => json!({ "status": "inconclusive", "message": message }),
    }
}

fn check_assumption(config: &Path, grid_points: &Path) -> Result<i32> {
    let doc = load_config(config)?;
    let model = doc.model::<f64>()?;
    let target = doc.target::<f64>()?;
    let text = fs::read_to_string(grid_points)
        .map_err(ConfigError::from)
        .with_context(|| format!("reading points {}", grid_points.display()))?;
    let grid: GridPoints = serde_json::from_str(&text).map_err(ConfigError::from)?;
    let params = doc.controller_params();
    let ergodicity = check_ergodicity(&model);
    if !ergodicity.is_pass() {
        log::warn!("ergodicity check inconclusive; margins are still reported");
    }
    let mut results = Vec::with_capacity(grid.points.len());
    let mut min_margin = f64::INFINITY;
    for point in &grid.points {
        if point.len() != model.dim() {
            bail!(ConfigError::Invalid(format!("point {point:?} has the wrong dimension")));
        }
        match separating_strategy(&model, &target, point, params.membership_tol, &params.rvi_options()) {
            Ok(sep) => {
                min_margin = min_margin.min(sep.margin);
                results.push(json!({
                    "point": point,
                    "distance": sep.distance,
                    "margin": sep.margin,
                    "value": sep.value,
                    "status": if sep.is_separated() { "separated" } else { "assumption-violated" },
                }));
            }
            Err(ControllerError::InsideTarget(_)) => results.push(json!({
                "point": point,
                "distance": target.distance(point)?,
                "margin": null,
                "status": "inside",
            })),
            Err(e) => return Err(e.into()),
        }
    }
    let certified = min_margin > 0.0;
    let out = json!({
        "ergodicity": ergodicity_json(&ergodicity),
        "points": results,
        "min_margin": if min_margin.is_finite() { json!(min_margin) } else { Value::Null },
        "certified": certified,
    });
    emit(&out)?;
    Ok(if certified || !min_margin.is_finite() {
        exit_code::SUCCESS
    } else {
        exit_code::ASSUMPTION_VIOLATED
    })
}

/// Maps library errors anywhere in the chain to the documented exit codes.
fn error_exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ControllerError>() {
            return e.exit_code();
        }
        if cause.is::<ConfigError>() || cause.is::<ModelError>() || cause.is::<GeometryError>() {
            return exit_code::CONFIG;
        }
        if cause.is::<SolverError>() {
            return exit_code::SOLVER_FAILURE;
        }
    }
    1
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve {
            config,
            point,
            target_from_config: _,
        } => solve(&config, &point),
        Command::Simulate {
            config,
            steps,
            seeds,
            seed,
            adversary,
            stride,
            out,
        } => simulate(&config, steps, seeds, seed, adversary.as_deref(), stride, &out),
        Command::Experiment { suite, out } => experiment(&suite, &out),
        Command::CheckAssumption { config, grid_points } => check_assumption(&config, &grid_points),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(error_exit_code(&err) as u8)
        }
    }
}
