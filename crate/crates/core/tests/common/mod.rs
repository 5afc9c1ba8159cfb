//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use markov_approach::{AdversaryPolicy, ConvexTarget, GameModel, RunConfig, StationaryStrategy};
use rand::Rng;

/// Repeated game: action 0 yields (-1,-1) against both columns; action 1
/// yields (1,1) or (-2,2).
pub fn repeated_game() -> GameModel<f64> {
    let kernel = vec![vec![vec![vec![1.0]; 2]; 2]];
    let reward = vec![vec![
        vec![vec![-1.0, -1.0], vec![-1.0, -1.0]],
        vec![vec![1.0, 1.0], vec![-2.0, 2.0]],
    ]];
    GameModel::from_nested(&kernel, &reward).unwrap()
}

/// Two-state controlled chain with a strictly positive kernel. The player
/// pays for safety in one coordinate with the other, and the matching of
/// actions moves the chain.
pub fn two_state_chain() -> GameModel<f64> {
    let p = |stay: f64| vec![stay, 1.0 - stay];
    let q = |stay: f64| vec![1.0 - stay, stay];
    let kernel = vec![
        vec![vec![p(0.8), p(0.3)], vec![p(0.4), p(0.7)]],
        vec![vec![q(0.6), q(0.2)], vec![q(0.3), q(0.9)]],
    ];
    let reward = vec![
        vec![
            vec![vec![-1.0, 0.5], vec![0.5, -1.0]],
            vec![vec![0.5, -1.0], vec![-1.0, 0.5]],
        ],
        vec![
            vec![vec![-0.5, -0.5], vec![1.0, -1.5]],
            vec![vec![-1.5, 1.0], vec![-0.5, -0.5]],
        ],
    ];
    GameModel::from_nested(&kernel, &reward).unwrap()
}

/// Every reward equals (1, 1).
pub fn constant_ones() -> GameModel<f64> {
    let kernel = vec![vec![vec![vec![1.0]; 2]; 2]];
    let reward = vec![vec![vec![vec![1.0, 1.0]; 2]; 2]];
    GameModel::from_nested(&kernel, &reward).unwrap()
}

pub fn config(
    model: GameModel<f64>,
    target: ConvexTarget<f64>,
    horizon: u64,
    adversary: AdversaryPolicy<f64>,
) -> RunConfig<f64> {
    let mut c = RunConfig::new(Arc::new(model), Arc::new(target), horizon);
    c.adversary = adversary;
    c
}

/// Evenly spaced grid over the box `[lo, hi]` in two dimensions.
pub fn grid(lo: [f64; 2], hi: [f64; 2], per_axis: usize) -> Vec<Vec<f64>> {
    let at = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64;
    (0..per_axis)
        .flat_map(|i| (0..per_axis).map(move |j| vec![at(0, i), at(1, j)]))
        .collect()
}

pub fn random_distribution<R: Rng>(rng: &mut R, len: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| floor + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn random_strategy<R: Rng>(rng: &mut R, states: usize, actions: usize) -> StationaryStrategy<f64> {
    StationaryStrategy::new((0..states).map(|_| random_distribution(rng, actions, 0.0)).collect()).unwrap()
}

/// Random model with a strictly positive kernel and rewards in `[-1, 1]^dim`.
pub fn random_model<R: Rng>(rng: &mut R, states: usize, up: usize, ua: usize, dim: usize) -> GameModel<f64> {
    let kernel = (0..states)
        .map(|_| {
            (0..up)
                .map(|_| (0..ua).map(|_| random_distribution(rng, states, 0.05)).collect())
                .collect()
        })
        .collect::<Vec<Vec<Vec<Vec<f64>>>>>();
    let reward = (0..states)
        .map(|_| {
            (0..up)
                .map(|_| {
                    (0..ua)
                        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect()
                })
                .collect()
        })
        .collect::<Vec<Vec<Vec<Vec<f64>>>>>();
    GameModel::from_nested(&kernel, &reward).unwrap()
}

/// All pure stationary strategies for `states` states and `actions` actions.
pub fn pure_strategies(states: usize, actions: usize) -> Vec<StationaryStrategy<f64>> {
    let total = actions.pow(states as u32);
    (0..total)
        .map(|mut code| {
            let choice: Vec<usize> = (0..states)
                .map(|_| {
                    let a = code % actions;
                    code /= actions;
                    a
                })
                .collect();
            StationaryStrategy::pure(actions, &choice)
        })
        .collect()
}
