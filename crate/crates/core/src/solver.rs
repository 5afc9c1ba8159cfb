//! Scalarized zero-sum games.
//!
//! Projecting the vector reward onto a direction turns the game into an
//! ordinary zero-sum average-reward stochastic game. Its value in direction
//! `x_D - x` decides whether the player can push the long-run average across
//! the hyperplane through the projection `x_D`, and the player's optimal
//! stationary strategy is the one the controller holds.

use crate::error::{ControllerError, SolverError};
use crate::game_model::{GameModel, StationaryStrategy};
use crate::scalar::{dot, norm, sub, Scalar};
use crate::target_geometry::ConvexTarget;

/// Span tolerance of relative value iteration.
pub const RVI_TOL: f64 = 1e-9;
pub const RVI_ITERATION_CAP: usize = 100_000;
/// Damping `P <- (1 - a) I + a P` applied once iteration stalls.
pub const APERIODICITY_ALPHA: f64 = 0.9;

/// Zero-sum matrix game; the row player maximizes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame<T> {
    rows: usize,
    cols: usize,
    payoff: Vec<T>,
}

impl<T: Scalar> MatrixGame<T> {
    pub fn new(rows: usize, cols: usize, payoff: Vec<T>) -> Result<Self, SolverError> {
        if rows == 0 || cols == 0 {
            return Err(SolverError::InvalidInput("matrix game must be nonempty".into()));
        }
        if payoff.len() != rows * cols {
            return Err(SolverError::InvalidInput(format!(
                "payoff has {} entries, expected {}",
                payoff.len(),
                rows * cols
            )));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidInput("payoff entries must be finite".into()));
        }
        Ok(Self { rows, cols, payoff })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, SolverError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(SolverError::InvalidInput("ragged payoff matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> T {
        self.payoff[i * self.cols + j]
    }

    /// The game seen from the column player: `-A^T`.
    pub fn negated_transpose(&self) -> Self {
        let mut payoff = Vec::with_capacity(self.payoff.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                payoff.push(-self.entry(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            payoff,
        }
    }

    /// `min_j sum_i p_i A_ij`: what a row mix guarantees.
    pub fn row_guarantee(&self, p: &[T]) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| p[i] * self.entry(i, j)).sum::<T>())
            .fold(T::infinity(), T::min)
    }

    /// `max_i sum_j A_ij q_j`: the most a column mix concedes.
    pub fn col_guarantee(&self, q: &[T]) -> T {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.entry(i, j) * q[j]).sum::<T>())
            .fold(T::neg_infinity(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution<T> {
    pub value: T,
    pub row_strategy: Vec<T>,
    pub col_strategy: Vec<T>,
    pub pivots: usize,
}

/// Value and optimal mixed strategies by the simplex method.
///
/// The payoff is shifted to be strictly positive, then the column player's
/// problem `max 1.q  s.t.  A q <= 1, q >= 0` is solved from the slack basis
/// with Bland's pivoting rule. The row strategy is read off the final
/// objective row (the dual prices of the slack constraints).
pub fn solve_matrix_game<T: Scalar>(game: &MatrixGame<T>) -> MatrixSolution<T> {
    let (m, n) = (game.rows, game.cols);
    let lo = game.payoff.iter().copied().fold(T::infinity(), T::min);
    let shift = lo - T::one();
    let width = n + m + 1;
    let mut tab = vec![T::zero(); (m + 1) * width];
    let mut scale = T::one();
    for i in 0..m {
        for j in 0..n {
            let a = game.entry(i, j) - shift;
            scale = scale.max(a);
            tab[i * width + j] = a;
        }
        tab[i * width + n + i] = T::one();
        tab[i * width + width - 1] = T::one();
    }
    let obj = m * width;
    for j in 0..n {
        tab[obj + j] = -T::one();
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = T::tol(1e-12) * scale;

    let mut pivots = 0;
    // Bland: lowest-index improving column.
    while let Some(enter) = (0..n + m).find(|&j| tab[obj + j] < -eps) {
        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            let a = tab[i * width + enter];
            if a > eps {
                let ratio = tab[i * width + width - 1] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - eps || ((ratio - lr).abs() <= eps && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        // Bounded: A > 0 keeps every column pivotable.
        let (row, _) = leave.expect("positive payoff keeps the LP bounded");
        let piv = tab[row * width + enter];
        for k in 0..width {
            tab[row * width + k] /= piv;
        }
        for r in 0..=m {
            if r == row {
                continue;
            }
            let factor = tab[r * width + enter];
            if factor == T::zero() {
                continue;
            }
            for k in 0..width {
                let delta = factor * tab[row * width + k];
                tab[r * width + k] -= delta;
            }
        }
        basis[row] = enter;
        pivots += 1;
    }

    let mut q = vec![T::zero(); n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            q[b] = tab[i * width + width - 1].max(T::zero());
        }
    }
    let mut p: Vec<T> = (0..m).map(|i| tab[obj + n + i].max(T::zero())).collect();
    let total_q: T = q.iter().copied().sum();
    let total_p: T = p.iter().copied().sum();
    let shifted_value = T::one() / total_q;
    q.iter_mut().for_each(|v| *v /= total_q);
    p.iter_mut().for_each(|v| *v /= total_p);
    MatrixSolution {
        value: shifted_value + shift,
        row_strategy: p,
        col_strategy: q,
        pivots,
    }
}

/// A game model whose rewards are projected onto a unit direction.
#[derive(Debug, Clone)]
pub struct ScalarGame<'a, T> {
    model: &'a GameModel<T>,
    /// Flattened `[s][u_p][u_a]`.
    rewards: Vec<T>,
    direction: Vec<T>,
    norm: T,
}

/// Scalarizes per-step rewards as `r = <kappa, direction / |direction|>`.
pub fn scalarize<'a, T: Scalar>(model: &'a GameModel<T>, direction: &[T]) -> Result<ScalarGame<'a, T>, SolverError> {
    if direction.len() != model.dim() {
        return Err(SolverError::InvalidInput(format!(
            "direction has dimension {}, model has {}",
            direction.len(),
            model.dim()
        )));
    }
    if direction.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidInput("direction must be finite".into()));
    }
    let length = norm(direction);
    if !(length > T::zero()) {
        return Err(SolverError::InvalidInput(
            "zero direction: the point is in the target, no separation is needed".into(),
        ));
    }
    let unit: Vec<T> = direction.iter().map(|&v| v / length).collect();
    let mut rewards = Vec::with_capacity(model.states() * model.player_actions() * model.adversary_actions());
    for s in 0..model.states() {
        for up in 0..model.player_actions() {
            for ua in 0..model.adversary_actions() {
                rewards.push(dot(model.reward(s, up, ua), &unit));
            }
        }
    }
    Ok(ScalarGame {
        model,
        rewards,
        direction: unit,
        norm: length,
    })
}

impl<'a, T: Scalar> ScalarGame<'a, T> {
    pub fn model(&self) -> &'a GameModel<T> {
        self.model
    }

    #[inline]
    pub fn reward(&self, s: usize, up: usize, ua: usize) -> T {
        let m = self.model;
        self.rewards[(s * m.player_actions() + up) * m.adversary_actions() + ua]
    }

    /// Unit direction the rewards were projected on.
    pub fn direction(&self) -> &[T] {
        &self.direction
    }

    /// Length of the direction before normalization.
    pub fn direction_norm(&self) -> T {
        self.norm
    }

    /// Same game with `c` added to every reward.
    pub fn shifted(&self, c: T) -> Self {
        Self {
            model: self.model,
            rewards: self.rewards.iter().map(|&r| r + c).collect(),
            direction: self.direction.clone(),
            norm: self.norm,
        }
    }

    /// Stage game at `s` with continuation values `h`: entries
    /// `r(s,u_p,u_a) + alpha * sum_{s'} p(s'|s,u_p,u_a) h(s')`.
    fn stage_game(&self, s: usize, h: &[T], alpha: T) -> MatrixGame<T> {
        let m = self.model;
        let mut payoff = Vec::with_capacity(m.player_actions() * m.adversary_actions());
        for up in 0..m.player_actions() {
            for ua in 0..m.adversary_actions() {
                let cont: T = m.transition(s, up, ua).iter().zip(h).map(|(&p, &v)| p * v).sum();
                payoff.push(self.reward(s, up, ua) + alpha * cont);
            }
        }
        MatrixGame {
            rows: m.player_actions(),
            cols: m.adversary_actions(),
            payoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviOptions {
    /// Stop once `span(h_{k+1} - h_k)` is at most this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Iterations without halving the best span before damping kicks in.
    pub stall_window: usize,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            tol: RVI_TOL,
            max_iterations: RVI_ITERATION_CAP,
            stall_window: 500,
        }
    }
}

/// Solution of a scalarized average-reward game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution<T> {
    pub value: T,
    pub player: StationaryStrategy<T>,
    pub adversary: StationaryStrategy<T>,
    /// Relative values, zero at the reference state 0.
    pub bias: Vec<T>,
    pub iterations: usize,
    /// Span of the last update.
    pub residual: T,
    /// Whether the aperiodicity damping had to be applied.
    pub damped: bool,
}

struct RviOutcome<T> {
    gain: T,
    h: Vec<T>,
    alpha: T,
    iterations: usize,
    residual: T,
}

fn span<T: Scalar>(v: impl Iterator<Item = T>) -> T {
    let (lo, hi) = v.fold((T::infinity(), T::neg_infinity()), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Relative value iteration with reference state 0. `stage(s, h, alpha)`
/// returns the optimal one-stage value at `s` against continuation `h` under
/// kernel damping `alpha` (the `(1 - alpha) h(s)` term is added here).
fn relative_value_iteration<T: Scalar>(
    states: usize,
    options: &RviOptions,
    stage: impl Fn(usize, &[T], T) -> T,
) -> Result<RviOutcome<T>, SolverError> {
    let tol = T::tol(options.tol);
    let mut alpha = T::one();
    let mut h = vec![T::zero(); states];
    let mut best = T::infinity();
    let mut last_progress = 0;
    let mut residual = T::infinity();
    for k in 1..=options.max_iterations {
        let w: Vec<T> = (0..states)
            .map(|s| (T::one() - alpha) * h[s] + stage(s, &h, alpha))
            .collect();
        let gain = w[0];
        residual = span(w.iter().zip(&h).map(|(&a, &b)| a - b));
        h = w.into_iter().map(|v| v - gain).collect();
        if residual <= tol {
            return Ok(RviOutcome {
                gain,
                h,
                alpha,
                iterations: k,
                residual,
            });
        }
        if residual < best * T::lit(0.5) {
            best = residual;
            last_progress = k;
        } else if alpha == T::one() && k - last_progress > options.stall_window {
            log::debug!("relative value iteration stalled at span {residual}; damping kernel");
            alpha = T::lit(APERIODICITY_ALPHA);
            best = T::infinity();
            last_progress = k;
        }
    }
    Err(SolverError::NoConvergence {
        iterations: options.max_iterations,
        residual: residual.as_f64(),
    })
}

/// Value, optimal stationary strategies and bias of the scalarized
/// average-reward game, by relative value iteration over Shapley stage games.
pub fn solve_average_game<T: Scalar>(
    game: &ScalarGame<'_, T>,
    options: &RviOptions,
) -> Result<GameSolution<T>, SolverError> {
    let model = game.model;
    let out = relative_value_iteration(model.states(), options, |s, h, alpha| {
        solve_matrix_game(&game.stage_game(s, h, alpha)).value
    })?;
    let mut player_rows = Vec::with_capacity(model.states());
    let mut adversary_rows = Vec::with_capacity(model.states());
    for s in 0..model.states() {
        let sol = solve_matrix_game(&game.stage_game(s, &out.h, out.alpha));
        player_rows.push(sol.row_strategy);
        adversary_rows.push(sol.col_strategy);
    }
    Ok(GameSolution {
        value: out.gain,
        player: StationaryStrategy::from_solver_rows(model.player_actions(), player_rows),
        adversary: StationaryStrategy::from_solver_rows(model.adversary_actions(), adversary_rows),
        bias: out.h.iter().map(|&v| v * out.alpha).collect(),
        iterations: out.iterations,
        residual: out.residual,
        damped: out.alpha != T::one(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparationStatus {
    Separated,
    /// No stationary strategy keeps every adversary response strictly on the
    /// far side of the hyperplane through the projection.
    AssumptionViolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separation<T> {
    pub strategy: StationaryStrategy<T>,
    /// `inf_{pi_a} <kbar(pi_p, pi_a) - x_D, x_D - x>` for the returned strategy.
    pub margin: T,
    /// Game value in the unit direction `(x_D - x) / |x_D - x|`.
    pub value: T,
    pub projection: Vec<T>,
    pub distance: T,
    pub status: SeparationStatus,
    pub iterations: usize,
}

impl<T> Separation<T> {
    pub fn is_separated(&self) -> bool {
        self.status == SeparationStatus::Separated
    }
}

/// Player strategy separating `x` from the target, with its margin.
pub fn separating_strategy<T: Scalar>(
    model: &GameModel<T>,
    target: &ConvexTarget<T>,
    x: &[T],
    membership_tol: T,
    options: &RviOptions,
) -> Result<Separation<T>, ControllerError> {
    if x.len() != model.dim() {
        return Err(
            SolverError::InvalidInput(format!("point has dimension {}, model has {}", x.len(), model.dim())).into(),
        );
    }
    let (projection, distance) = target.project_with_distance(x)?;
    if distance <= membership_tol {
        return Err(ControllerError::InsideTarget(x.iter().map(|v| v.as_f64()).collect()));
    }
    let direction = sub(&projection, x);
    let game = scalarize(model, &direction)?;
    let solution = solve_average_game(&game, options)?;
    let margin = solution.value * distance - dot(&projection, &direction);
    let status = if margin > T::zero() {
        SeparationStatus::Separated
    } else {
        SeparationStatus::AssumptionViolated
    };
    Ok(Separation {
        strategy: solution.player,
        margin,
        value: solution.value,
        projection,
        distance,
        status,
        iterations: solution.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse<T> {
    pub strategy: StationaryStrategy<T>,
    /// Minimal long-run scalarized reward the adversary can enforce.
    pub value: T,
    pub bias: Vec<T>,
    pub iterations: usize,
}

/// Adversary's average-reward minimizing stationary response to a fixed
/// player strategy, for rewards scalarized along `direction`.
pub fn adversary_best_response<T: Scalar>(
    model: &GameModel<T>,
    pi_p: &StationaryStrategy<T>,
    direction: &[T],
    options: &RviOptions,
) -> Result<BestResponse<T>, SolverError> {
    if pi_p.states() != model.states() || pi_p.actions() != model.player_actions() {
        return Err(SolverError::InvalidInput(
            "player strategy does not fit the model".into(),
        ));
    }
    let game = scalarize(model, direction)?;
    let n = model.states();
    // Per (state, adversary action): player-averaged reward and kernel.
    let mut rewards = vec![T::zero(); n * model.adversary_actions()];
    let mut kernel = vec![T::zero(); n * model.adversary_actions() * n];
    for s in 0..n {
        for ua in 0..model.adversary_actions() {
            let idx = s * model.adversary_actions() + ua;
            for up in 0..model.player_actions() {
                let w = pi_p.prob(s, up);
                if w == T::zero() {
                    continue;
                }
                rewards[idx] += w * game.reward(s, up, ua);
                for (k, &p) in kernel[idx * n..(idx + 1) * n]
                    .iter_mut()
                    .zip(model.transition(s, up, ua))
                {
                    *k += w * p;
                }
            }
        }
    }
    let q_value = |s: usize, ua: usize, h: &[T], alpha: T| -> T {
        let idx = s * model.adversary_actions() + ua;
        let cont: T = kernel[idx * n..(idx + 1) * n].iter().zip(h).map(|(&p, &v)| p * v).sum();
        rewards[idx] + alpha * cont
    };
    let out = relative_value_iteration(n, options, |s, h, alpha| {
        (0..model.adversary_actions())
            .map(|ua| q_value(s, ua, h, alpha))
            .fold(T::infinity(), T::min)
    })?;
    let choice: Vec<usize> = (0..n)
        .map(|s| {
            let mut best = 0;
            let mut best_v = q_value(s, 0, &out.h, out.alpha);
            for ua in 1..model.adversary_actions() {
                let v = q_value(s, ua, &out.h, out.alpha);
                if v < best_v {
                    best = ua;
                    best_v = v;
                }
            }
            best
        })
        .collect();
    Ok(BestResponse {
        strategy: StationaryStrategy::pure(model.adversary_actions(), &choice),
        value: out.gain,
        bias: out.h.iter().map(|&v| v * out.alpha).collect(),
        iterations: out.iterations,
    })
}
