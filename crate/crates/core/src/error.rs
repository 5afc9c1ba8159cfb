use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("model must have at least one {0}")]
    Empty(&'static str),
    #[error("transition row (state {state}, player {player}, adversary {adversary}) sums to {sum}")]
    KernelNotStochastic {
        state: usize,
        player: usize,
        adversary: usize,
        sum: f64,
    },
    #[error(
        "negative or non-finite transition probability at (state {state}, player {player}, adversary {adversary})"
    )]
    BadProbability {
        state: usize,
        player: usize,
        adversary: usize,
    },
    #[error("non-finite reward at (state {state}, player {player}, adversary {adversary})")]
    NonFiniteReward {
        state: usize,
        player: usize,
        adversary: usize,
    },
    #[error("strategy row {state} is not a probability vector (sum {sum})")]
    InvalidStrategy { state: usize, sum: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid target: {0}")]
    InvalidShape(String),
    #[error("target set is empty (infeasibility residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("projection did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("point has dimension {found}, target has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("no separating strategy at {point:?}: margin {margin:e} is not positive")]
    AssumptionViolated { point: Vec<f64>, margin: f64 },
    #[error("point {0:?} lies in the target set; no separating strategy is needed")]
    InsideTarget(Vec<f64>),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error")]
    Parse(#[from] serde_json::Error),
    #[error("config io error")]
    Io(#[from] std::io::Error),
    #[error("config is missing section `{0}`")]
    MissingSection(&'static str),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Process exit codes used by the command line front end.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const ASSUMPTION_VIOLATED: i32 = 3;
    pub const SOLVER_FAILURE: i32 = 4;
}

impl ControllerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ControllerError::AssumptionViolated { .. } => exit_code::ASSUMPTION_VIOLATED,
            ControllerError::InvalidParameter(_)
            | ControllerError::InsideTarget(_)
            | ControllerError::Degenerate(_)
            | ControllerError::Model(_) => exit_code::CONFIG,
            ControllerError::Solver(_) | ControllerError::Geometry(_) => exit_code::SOLVER_FAILURE,
        }
    }
}
