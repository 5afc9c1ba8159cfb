//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use markov_approach::controller::next_switch_step;
use markov_approach::game_model::average_reward;
use markov_approach::sim::{
    self, aggregate, median, sample_path, summarize, write_summary_csv, write_trace_csv, DecayStats, ExperimentSummary,
    SummaryRow,
};
use markov_approach::{
    check_ergodicity, run, scalarize, separating_strategy, solve_average_game, solve_matrix_game, AdversaryPolicy,
    AnchorEntry, ConvexTarget, ErgodicityReport, GameModel, MatrixGame, RewardGeometry, RunConfig, RunStatus,
    RviOptions, StationaryStrategy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: u64 = 20;
const REPEATED_STEPS: u64 = 200_000;
const CHAIN_STEPS: u64 = 500_000;

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, pass: bool, detail: String) -> Verdict {
    Verdict { id, pass, detail }
}

/// Hashes everything written to it and counts the bytes.
struct Digest {
    hasher: DefaultHasher,
    len: u64,
}

impl Digest {
    fn new() -> Self {
        Self {
            hasher: DefaultHasher::new(),
            len: 0,
        }
    }

    fn finish(&self) -> (u64, u64) {
        (self.hasher.finish(), self.len)
    }
}

impl Write for Digest {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.hasher.write(buf);
        self.len += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// What is kept from one run after its rows are serialized and dropped.
struct Outcome {
    row: SummaryRow,
    trace_digest: (u64, u64),
    anchors: Vec<AnchorEntry<f64>>,
    geometry: RewardGeometry<f64>,
    decay: DecayStats,
    status: RunStatus,
    elapsed: Duration,
}

struct Batch {
    id: String,
    outcomes: Vec<Outcome>,
    /// Simulation time summed over runs (serialization excluded), an upper
    /// bound on the wall time of a serial batch.
    elapsed: Duration,
}

impl Batch {
    fn median_final(&self) -> f64 {
        median(&mut self.outcomes.iter().map(|o| o.row.dist_final).collect::<Vec<_>>())
    }

    fn summary_csv(&self) -> Vec<u8> {
        let rows: Vec<SummaryRow> = self.outcomes.iter().map(|o| o.row.clone()).collect();
        let summary = ExperimentSummary {
            aggregates: vec![aggregate(&self.id, &rows)],
            rows,
        };
        let mut out = Vec::new();
        write_summary_csv(&mut out, &summary).unwrap();
        out
    }
}

fn run_batch(id: &str, config: &RunConfig<f64>, seeds: u64) -> Batch {
    let outcomes: Vec<Outcome> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = config.clone();
            cfg.stream = seed;
            let start = Instant::now();
            let trace = run(&cfg);
            let elapsed = start.elapsed();
            let mut digest = Digest::new();
            write_trace_csv(&mut digest, &trace, cfg.model.dim()).unwrap();
            Outcome {
                row: summarize(id, seed, &trace),
                trace_digest: digest.finish(),
                decay: trace.decay_windows(sim::DECAY_MIN_STEP, sim::DECAY_SLACK),
                anchors: trace.anchors,
                geometry: trace.geometry,
                status: trace.status,
                elapsed,
            }
        })
        .collect();
    Batch {
        id: id.to_string(),
        elapsed: outcomes.iter().map(|o| o.elapsed).sum(),
        outcomes,
    }
}

/// Certifies a positive separation margin at every grid point outside the target.
fn certify(model: &GameModel<f64>, target: &ConvexTarget<f64>, points: &[Vec<f64>]) -> (usize, f64) {
    let mut outside = 0;
    let mut worst = f64::INFINITY;
    for x in points {
        if target.distance(x).unwrap() <= 1e-12 {
            continue;
        }
        outside += 1;
        let sep = separating_strategy(model, target, x, 1e-12, &RviOptions::default()).unwrap();
        worst = worst.min(sep.margin);
    }
    (outside, worst)
}

fn repeated_adversaries() -> Vec<(&'static str, AdversaryPolicy<f64>)> {
    let mixed = StationaryStrategy::new(vec![vec![0.5, 0.5]]).unwrap();
    vec![
        ("best-response", AdversaryPolicy::BestResponse),
        ("fixed-col0", AdversaryPolicy::Fixed(StationaryStrategy::pure(2, &[0]))),
        ("fixed-col1", AdversaryPolicy::Fixed(StationaryStrategy::pure(2, &[1]))),
        ("fixed-mixed", AdversaryPolicy::Fixed(mixed)),
    ]
}

fn repeated_batches() -> Vec<Batch> {
    let model = common::repeated_game();
    let target = ConvexTarget::negative_orthant(2);
    repeated_adversaries()
        .into_iter()
        .map(|(id, adversary)| {
            let cfg = common::config(model.clone(), target.clone(), REPEATED_STEPS, adversary);
            run_batch(id, &cfg, SEEDS)
        })
        .collect()
}

fn criterion_1(batches: &[Batch]) -> Verdict {
    let model = common::repeated_game();
    let target = ConvexTarget::negative_orthant(2);
    let (lo, hi) = model.reward_bounds();
    let (outside, worst) = certify(&model, &target, &common::grid([lo[0], lo[1]], [hi[0], hi[1]], 10));
    let mut pass = outside > 0 && worst > 0.0;
    let mut detail = format!("grid: {outside} outside points, min margin {worst:.4}");
    for b in batches {
        let limit = if b.id == "best-response" { 0.05 } else { 0.02 };
        let med = b.median_final();
        let ok = med <= limit && b.elapsed <= Duration::from_secs(60) && b.outcomes.iter().all(|o| o.status.is_ok());
        pass &= ok;
        detail.push_str(&format!(
            "; {}: median {med:.2e} (<= {limit}) in {:.1}s",
            b.id,
            b.elapsed.as_secs_f64()
        ));
    }
    verdict(1, pass, detail)
}

fn chain_batch() -> Batch {
    let model = common::two_state_chain();
    let target = ConvexTarget::bounded_box(vec![f64::NEG_INFINITY; 2], vec![0.0, 0.0]).unwrap();
    let mut cfg = common::config(model, target, CHAIN_STEPS, AdversaryPolicy::BestResponse);
    cfg.keep_rows = false;
    run_batch("chain-best-response", &cfg, SEEDS)
}

fn criterion_2(batch: &Batch) -> Verdict {
    let model = common::two_state_chain();
    let target = ConvexTarget::bounded_box(vec![f64::NEG_INFINITY; 2], vec![0.0, 0.0]).unwrap();
    let ergodic_h1 = matches!(check_ergodicity(&model), ErgodicityReport::Pass { horizon: 1, .. });
    let (lo, hi) = model.reward_bounds();
    let (outside, worst) = certify(&model, &target, &common::grid([lo[0], lo[1]], [hi[0], hi[1]], 10));
    let med = batch.median_final();
    let all_ok = batch.outcomes.iter().all(|o| o.status.is_ok());
    verdict(
        2,
        ergodic_h1 && outside > 0 && worst > 0.0 && med <= 0.05 && all_ok,
        format!(
            "ergodic with h=1: {ergodic_h1}; grid: {outside} outside points, min margin {worst:.4}; median final dist {med:.2e} (<= 0.05) in {:.1}s",
            batch.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Verdict {
    let cfg = common::config(
        common::constant_ones(),
        ConvexTarget::negative_orthant(2),
        1_000,
        AdversaryPolicy::UniformRandom,
    );
    let trace = run(&cfg);
    let violated_at_2 = matches!(trace.status, RunStatus::AssumptionViolated { step: 2, margin, .. } if margin <= 0.0);
    let exit = trace.status.exit_code();
    let rows_exact = !trace.rows.is_empty()
        && trace
            .rows
            .iter()
            .all(|r| r.x == [1.0, 1.0] && (r.dist - 2f64.sqrt()).abs() < 1e-15);
    verdict(
        3,
        violated_at_2 && exit == 3 && rows_exact && trace.final_x == [1.0, 1.0],
        format!("status {} at first outside switch: {violated_at_2}; exit code {exit}; x_n = (1,1), dist = sqrt 2 on every row: {rows_exact}", trace.status.label()),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let options = RviOptions::default();
    let mut worst_value: f64 = 0.0;
    for _ in 0..200 {
        let up = rng.gen_range(1..=4);
        let ua = rng.gen_range(1..=4);
        let model = common::random_model(&mut rng, 1, up, ua, 1);
        let game = scalarize(&model, &[1.0]).unwrap();
        let avg = solve_average_game(&game, &options).unwrap().value;
        let rows: Vec<Vec<f64>> = (0..up)
            .map(|i| (0..ua).map(|j| model.reward(0, i, j)[0]).collect())
            .collect();
        let matrix = solve_matrix_game(&MatrixGame::from_rows(&rows).unwrap()).value;
        worst_value = worst_value.max((avg - matrix).abs());
    }
    let target = ConvexTarget::negative_orthant(2);
    let mut worst_margin: f64 = 0.0;
    for _ in 0..50 {
        let up = rng.gen_range(1..=4);
        let ua = rng.gen_range(1..=8);
        let model = common::random_model(&mut rng, 2, up, ua, 2);
        let x = vec![rng.gen_range(0.05..1.5), rng.gen_range(-1.0..1.5)];
        let sep = separating_strategy(&model, &target, &x, 1e-12, &options).unwrap();
        let brute = common::pure_strategies(2, ua)
            .iter()
            .map(|pi_a| {
                let kbar = average_reward(&model, &sep.strategy, pi_a).unwrap();
                (0..2)
                    .map(|k| (kbar[k] - sep.projection[k]) * (sep.projection[k] - x[k]))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        worst_margin = worst_margin.max((sep.margin - brute).abs());
    }
    verdict(
        4,
        worst_value <= 1e-8 && worst_margin <= 1e-6,
        format!("max |value gap| {worst_value:.2e} (<= 1e-8) over 200 games; max |margin gap| {worst_margin:.2e} (<= 1e-6) over 50 games"),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases: Vec<_> = (0..20)
        .map(|i| {
            let states = rng.gen_range(2..=3);
            let model = common::random_model(&mut rng, states, 2, 2, 2);
            assert!(check_ergodicity(&model).is_pass());
            let pi_p = common::random_strategy(&mut rng, states, 2);
            let pi_a = common::random_strategy(&mut rng, states, 2);
            (i as u64, model, pi_p, pi_a)
        })
        .collect();
    let errors: Vec<f64> = cases
        .par_iter()
        .map(|(i, model, pi_p, pi_a)| {
            let exact = average_reward(model, pi_p, pi_a).unwrap();
            let path = sample_path(model, pi_p, pi_a, 1_000_000, 1_000_000, 5, *i, 0);
            exact
                .iter()
                .zip(&path.mean_reward)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let within = errors.iter().filter(|&&e| e <= 1e-2).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    verdict(
        5,
        within * 100 >= 95 * errors.len(),
        format!(
            "{within}/{} pairs within 1e-2 per component (>= 95%); worst {worst:.2e}",
            errors.len()
        ),
    )
}

/// Plain left-to-right summation, independent of the compensated sum.
fn naive_tail_sum(start: u64, end: u64) -> f64 {
    let mut s = 0.0;
    for i in start..end {
        s += 1.0 / i as f64;
    }
    s
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    for _ in 0..1000 {
        let start = 10f64.powf(rng.gen_range(0.0..6.0)) as u64;
        let hold = 10f64.powf(rng.gen_range(-7.0..0.5));
        let m = next_switch_step(start, hold);
        let exceeds = m > start && naive_tail_sum(start, m) > hold;
        let minimal = m == start + 1 || naive_tail_sum(start, m - 1) <= hold;
        if !(exceeds && minimal) {
            failures += 1;
        }
    }
    verdict(
        6,
        failures == 0,
        format!("{failures} failures over 1000 random (s, T) pairs"),
    )
}

fn criterion_7(batches: &[&Batch]) -> Verdict {
    let mut total = 0;
    let mut violations = 0;
    for b in batches {
        for o in &b.outcomes {
            total += o.anchors.len();
            violations += o
                .anchors
                .iter()
                .filter(|a| !a.satisfies_invariants(&o.geometry))
                .count();
        }
    }
    verdict(
        7,
        total > 0 && violations == 0,
        format!("{violations} violations among {total} anchors"),
    )
}

fn criterion_8(batches: &[Batch]) -> Verdict {
    let stats = batches
        .iter()
        .flat_map(|b| b.outcomes.iter())
        .fold(DecayStats::default(), |acc, o| acc.merge(o.decay));
    verdict(
        8,
        stats.fraction() >= 0.8,
        format!(
            "{}/{} late switch windows decay ({:.1}%, >= 80%)",
            stats.satisfied,
            stats.windows,
            100.0 * stats.fraction()
        ),
    )
}

fn criterion_9(first: &[Batch]) -> Verdict {
    let second = repeated_batches();
    let mut traces_equal = true;
    let mut summaries_equal = true;
    for (a, b) in first.iter().zip(&second) {
        summaries_equal &= a.summary_csv() == b.summary_csv();
        traces_equal &= a
            .outcomes
            .iter()
            .zip(&b.outcomes)
            .all(|(x, y)| x.trace_digest == y.trace_digest);
    }
    let runs: usize = first.iter().map(|b| b.outcomes.len()).sum();
    verdict(
        9,
        traces_equal && summaries_equal,
        format!("{runs} repeated runs: trace CSVs identical {traces_equal}, summary CSVs identical {summaries_equal}"),
    )
}

#[test]
fn acceptance_criteria() {
    let repeated = repeated_batches();
    let chain = chain_batch();
    let mut verdicts = vec![
        criterion_1(&repeated),
        criterion_2(&chain),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
    ];
    let mut anchored: Vec<&Batch> = repeated.iter().collect();
    anchored.push(&chain);
    verdicts.push(criterion_7(&anchored));
    verdicts.push(criterion_8(&repeated));
    verdicts.push(criterion_9(&repeated));

    for v in &verdicts {
        println!(
            "criterion {}: {} ({})",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
