//! Blackwell approachability on finite controlled Markov chains.
//!
//! The player steers the running average of a vector reward into a closed
//! convex target set against an adversary, by holding separating stationary
//! strategies for re-scaled time windows that shrink near the target. The
//! crate contains the game model, target geometry, the scalarized game solver
//! that produces separating strategies, the switching controller, adversary
//! policies and a seeded simulation harness.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which is what the command line tool uses.

// Guards are written `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod config;
pub mod controller;
pub mod error;
pub mod game_model;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod target_geometry;

pub use adversary::{Adversary, AdversaryPolicy, Observation};
pub use controller::{
    compute_hold_time, compute_rho, next_switch_step, AnchorCover, AnchorEntry, Controller, ControllerParams, Scheme,
    StepDecision, SwitchRecord,
};
pub use error::{ConfigError, ControllerError, GeometryError, ModelError, SolverError};
pub use game_model::{
    average_reward, check_ergodicity, induce_chain, stationary_distribution, ErgodicityReport, GameModel, InducedChain,
    StationaryStrategy,
};
pub use scalar::{KahanSum, Scalar};
pub use sim::{experiment, run, run_batch, step_average, RunConfig, RunStatus, RunTrace, SimError, TraceRow};
pub use solver::{
    adversary_best_response, scalarize, separating_strategy, solve_average_game, solve_matrix_game, BestResponse,
    GameSolution, MatrixGame, MatrixSolution, RviOptions, ScalarGame, Separation, SeparationStatus,
};
pub use target_geometry::{compute_vmax, ConvexTarget, RewardGeometry, TargetShape};

pub type Model = GameModel<f64>;
pub type Strategy = StationaryStrategy<f64>;
pub type Chain = InducedChain<f64>;
pub type Target = ConvexTarget<f64>;
pub type Geometry = RewardGeometry<f64>;
pub type Anchor = AnchorEntry<f64>;
pub type Trace = RunTrace<f64>;
pub type Run = RunConfig<f64>;
pub type Matrix = MatrixGame<f64>;
pub type Solution = GameSolution<f64>;
pub type Policy = AdversaryPolicy<f64>;

pub type ModelF32 = GameModel<f32>;
pub type TargetF32 = ConvexTarget<f32>;
