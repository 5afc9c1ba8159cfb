//! Finite controlled Markov games with vector rewards.
//!
//! A [`GameModel`] holds the transition kernel `p(s' | s, u_p, u_a)` and the
//! vector reward `kappa(s, u_p, u_a)`. Fixing a stationary strategy for both
//! sides collapses the game into an [`InducedChain`], whose stationary
//! distribution weights the long-run [`average_reward`].

use crate::error::{ModelError, SolverError};
use crate::scalar::Scalar;

/// Row-sum tolerance for kernels and strategies.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Successive-iterate tolerance of the stationary power iteration.
pub const POWER_ITERATION_TOL: f64 = 1e-12;
/// Fixed-point residual accepted for a stationary distribution.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
pub const POWER_ITERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GameModel<T> {
    states: usize,
    player_actions: usize,
    adversary_actions: usize,
    dim: usize,
    /// Flattened `[s][u_p][u_a][s']`.
    kernel: Vec<T>,
    /// Flattened `[s][u_p][u_a][k]`.
    reward: Vec<T>,
}

impl<T: Scalar> GameModel<T> {
    /// Builds a model from flat row-major buffers, validating every kernel row
    /// and reward entry. Rows that do not sum to one are rejected, never
    /// renormalized.
    pub fn new(
        states: usize,
        player_actions: usize,
        adversary_actions: usize,
        dim: usize,
        kernel: Vec<T>,
        reward: Vec<T>,
    ) -> Result<Self, ModelError> {
        if states == 0 {
            return Err(ModelError::Empty("state"));
        }
        if player_actions == 0 {
            return Err(ModelError::Empty("player action"));
        }
        if adversary_actions == 0 {
            return Err(ModelError::Empty("adversary action"));
        }
        if dim == 0 {
            return Err(ModelError::Empty("reward dimension"));
        }
        let triples = states * player_actions * adversary_actions;
        if kernel.len() != triples * states {
            return Err(ModelError::DimensionMismatch {
                what: "kernel entries",
                expected: triples * states,
                found: kernel.len(),
            });
        }
        if reward.len() != triples * dim {
            return Err(ModelError::DimensionMismatch {
                what: "reward entries",
                expected: triples * dim,
                found: reward.len(),
            });
        }
        let model = Self {
            states,
            player_actions,
            adversary_actions,
            dim,
            kernel,
            reward,
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model from nested arrays `kernel[s][u_p][u_a][s']` and
    /// `reward[s][u_p][u_a][k]`.
    pub fn from_nested(kernel: &[Vec<Vec<Vec<T>>>], reward: &[Vec<Vec<Vec<T>>>]) -> Result<Self, ModelError> {
        let states = kernel.len();
        let player_actions = kernel.first().map_or(0, Vec::len);
        let adversary_actions = kernel.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let dim = reward
            .first()
            .and_then(|r| r.first())
            .and_then(|r| r.first())
            .map_or(0, Vec::len);
        Self::from_nested_with_shape(states, player_actions, adversary_actions, dim, kernel, reward)
    }

    /// Like [`GameModel::from_nested`] but checks every nesting level against
    /// the declared sizes.
    pub fn from_nested_with_shape(
        states: usize,
        player_actions: usize,
        adversary_actions: usize,
        dim: usize,
        kernel: &[Vec<Vec<Vec<T>>>],
        reward: &[Vec<Vec<Vec<T>>>],
    ) -> Result<Self, ModelError> {
        let check = |what: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(ModelError::DimensionMismatch { what, expected, found })
            }
        };
        check("kernel states", states, kernel.len())?;
        check("reward states", states, reward.len())?;
        let mut k_flat = Vec::with_capacity(states * player_actions * adversary_actions * states);
        let mut r_flat = Vec::with_capacity(states * player_actions * adversary_actions * dim);
        for (k_s, r_s) in kernel.iter().zip(reward) {
            check("kernel player actions", player_actions, k_s.len())?;
            check("reward player actions", player_actions, r_s.len())?;
            for (k_p, r_p) in k_s.iter().zip(r_s) {
                check("kernel adversary actions", adversary_actions, k_p.len())?;
                check("reward adversary actions", adversary_actions, r_p.len())?;
                for (k_a, r_a) in k_p.iter().zip(r_p) {
                    check("kernel row length", states, k_a.len())?;
                    check("reward dimension", dim, r_a.len())?;
                    k_flat.extend_from_slice(k_a);
                    r_flat.extend_from_slice(r_a);
                }
            }
        }
        Self::new(states, player_actions, adversary_actions, dim, k_flat, r_flat)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let tol = T::tol(STOCHASTIC_TOL);
        for s in 0..self.states {
            for up in 0..self.player_actions {
                for ua in 0..self.adversary_actions {
                    let row = self.transition(s, up, ua);
                    if row.iter().any(|p| !p.is_finite() || *p < T::zero()) {
                        return Err(ModelError::BadProbability {
                            state: s,
                            player: up,
                            adversary: ua,
                        });
                    }
                    let sum: T = row.iter().copied().sum();
                    if (sum - T::one()).abs() > tol {
                        return Err(ModelError::KernelNotStochastic {
                            state: s,
                            player: up,
                            adversary: ua,
                            sum: sum.as_f64(),
                        });
                    }
                    if self.reward(s, up, ua).iter().any(|r| !r.is_finite()) {
                        return Err(ModelError::NonFiniteReward {
                            state: s,
                            player: up,
                            adversary: ua,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn player_actions(&self) -> usize {
        self.player_actions
    }

    pub fn adversary_actions(&self) -> usize {
        self.adversary_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn triple(&self, s: usize, up: usize, ua: usize) -> usize {
        (s * self.player_actions + up) * self.adversary_actions + ua
    }

    /// Next-state distribution for `(s, u_p, u_a)`.
    #[inline]
    pub fn transition(&self, s: usize, up: usize, ua: usize) -> &[T] {
        let base = self.triple(s, up, ua) * self.states;
        &self.kernel[base..base + self.states]
    }

    #[inline]
    pub fn reward(&self, s: usize, up: usize, ua: usize) -> &[T] {
        let base = self.triple(s, up, ua) * self.dim;
        &self.reward[base..base + self.dim]
    }

    /// The distinct reward vectors. Their convex hull is the reward set `K`.
    pub fn reward_vectors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for chunk in self.reward.chunks_exact(self.dim) {
            if !out.contains(&chunk) {
                out.push(chunk);
            }
        }
        out
    }

    /// Componentwise bounding box `(lower, upper)` of the reward vectors.
    pub fn reward_bounds(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = vec![T::infinity(); self.dim];
        let mut hi = vec![T::neg_infinity(); self.dim];
        for chunk in self.reward.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(chunk[k]);
                hi[k] = hi[k].max(chunk[k]);
            }
        }
        (lo, hi)
    }
}

/// Per-state probability distribution over one side's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryStrategy<T> {
    states: usize,
    actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> StationaryStrategy<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, ModelError> {
        let states = rows.len();
        if states == 0 {
            return Err(ModelError::Empty("state"));
        }
        let actions = rows[0].len();
        if actions == 0 {
            return Err(ModelError::Empty("action"));
        }
        let mut probs = Vec::with_capacity(states * actions);
        for row in &rows {
            if row.len() != actions {
                return Err(ModelError::DimensionMismatch {
                    what: "strategy row length",
                    expected: actions,
                    found: row.len(),
                });
            }
            probs.extend_from_slice(row);
        }
        let strategy = Self { states, actions, probs };
        strategy.validate()?;
        Ok(strategy)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let tol = T::tol(STOCHASTIC_TOL);
        for s in 0..self.states {
            let row = self.row(s);
            let sum: T = row.iter().copied().sum();
            if row.iter().any(|p| !p.is_finite() || *p < T::zero()) || (sum - T::one()).abs() > tol {
                return Err(ModelError::InvalidStrategy {
                    state: s,
                    sum: sum.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        let p = T::one() / T::from_usize(actions).unwrap();
        Self {
            states,
            actions,
            probs: vec![p; states * actions],
        }
    }

    /// Deterministic strategy playing `choice[s]` at state `s`.
    pub fn pure(actions: usize, choice: &[usize]) -> Self {
        let states = choice.len();
        let mut probs = vec![T::zero(); states * actions];
        for (s, &a) in choice.iter().enumerate() {
            assert!(a < actions, "pure action {a} out of range {actions}");
            probs[s * actions + a] = T::one();
        }
        Self { states, actions, probs }
    }

    /// Wraps per-state rows that are already known to be distributions (solver
    /// output); tiny negative round-off is clipped and rows renormalized.
    pub(crate) fn from_solver_rows(actions: usize, rows: Vec<Vec<T>>) -> Self {
        let states = rows.len();
        let mut probs = Vec::with_capacity(states * actions);
        for mut row in rows {
            debug_assert_eq!(row.len(), actions);
            for p in row.iter_mut() {
                *p = p.max(T::zero());
            }
            let sum: T = row.iter().copied().sum();
            probs.extend(row.into_iter().map(|p| p / sum));
        }
        Self { states, actions, probs }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[T] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[s * self.actions + a]
    }

    /// Inverse-CDF sample at state `s` for a uniform draw `u` in `[0, 1)`.
    pub fn sample(&self, s: usize, u: T) -> usize {
        sample_index(self.row(s), u)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.probs.chunks(self.actions).map(<[T]>::to_vec).collect()
    }

    fn check_for(&self, states: usize, actions: usize, side: &'static str) -> Result<(), ModelError> {
        if self.states != states {
            return Err(ModelError::DimensionMismatch {
                what: if side == "player" {
                    "player strategy states"
                } else {
                    "adversary strategy states"
                },
                expected: states,
                found: self.states,
            });
        }
        if self.actions != actions {
            return Err(ModelError::DimensionMismatch {
                what: if side == "player" {
                    "player strategy actions"
                } else {
                    "adversary strategy actions"
                },
                expected: actions,
                found: self.actions,
            });
        }
        Ok(())
    }
}

/// Inverse-CDF sampling over a probability row. Falls back to the last
/// positive entry when round-off leaves `u` above the cumulative sum.
pub(crate) fn sample_index<T: Scalar>(row: &[T], u: T) -> usize {
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > T::zero() {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Row-stochastic matrix of the chain obtained by fixing both strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain<T> {
    n: usize,
    matrix: Vec<T>,
}

impl<T: Scalar> InducedChain<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, ModelError> {
        let n = rows.len();
        if n == 0 {
            return Err(ModelError::Empty("state"));
        }
        let mut matrix = Vec::with_capacity(n * n);
        let tol = T::tol(STOCHASTIC_TOL);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::DimensionMismatch {
                    what: "chain row length",
                    expected: n,
                    found: row.len(),
                });
            }
            let sum: T = row.iter().copied().sum();
            if row.iter().any(|p| !p.is_finite() || *p < T::zero()) || (sum - T::one()).abs() > tol {
                return Err(ModelError::KernelNotStochastic {
                    state: s,
                    player: 0,
                    adversary: 0,
                    sum: sum.as_f64(),
                });
            }
            matrix.extend_from_slice(row);
        }
        Ok(Self { n, matrix })
    }

    pub fn states(&self) -> usize {
        self.n
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.matrix[s * self.n..(s + 1) * self.n]
    }

    pub fn entry(&self, from: usize, to: usize) -> T {
        self.matrix[from * self.n + to]
    }
}

/// Averages the kernel under a fixed strategy pair.
pub fn induce_chain<T: Scalar>(
    model: &GameModel<T>,
    pi_p: &StationaryStrategy<T>,
    pi_a: &StationaryStrategy<T>,
) -> Result<InducedChain<T>, ModelError> {
    pi_p.check_for(model.states(), model.player_actions(), "player")?;
    pi_a.check_for(model.states(), model.adversary_actions(), "adversary")?;
    let n = model.states();
    let mut matrix = vec![T::zero(); n * n];
    for s in 0..n {
        let out = &mut matrix[s * n..(s + 1) * n];
        for up in 0..model.player_actions() {
            let wp = pi_p.prob(s, up);
            if wp == T::zero() {
                continue;
            }
            for ua in 0..model.adversary_actions() {
                let w = wp * pi_a.prob(s, ua);
                if w == T::zero() {
                    continue;
                }
                for (o, &p) in out.iter_mut().zip(model.transition(s, up, ua)) {
                    *o += w * p;
                }
            }
        }
    }
    Ok(InducedChain { n, matrix })
}

fn left_multiply<T: Scalar>(eta: &[T], chain: &InducedChain<T>, out: &mut [T]) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for (s, &w) in eta.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(chain.row(s)) {
            *o += w * p;
        }
    }
}

/// Stationary distribution by power iteration from the uniform vector.
pub fn stationary_distribution<T: Scalar>(chain: &InducedChain<T>) -> Result<Vec<T>, SolverError> {
    let n = chain.states();
    let step_tol = T::tol(POWER_ITERATION_TOL);
    let mut eta = vec![T::one() / T::from_usize(n).unwrap(); n];
    let mut next = vec![T::zero(); n];
    let mut delta = T::infinity();
    for _ in 0..POWER_ITERATION_CAP {
        left_multiply(&eta, chain, &mut next);
        let total: T = next.iter().copied().sum();
        next.iter_mut().for_each(|v| *v /= total);
        delta = eta
            .iter()
            .zip(&next)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        std::mem::swap(&mut eta, &mut next);
        if delta <= step_tol {
            let residual = stationary_residual(chain, &eta);
            if residual <= T::tol(STATIONARY_RESIDUAL_TOL) {
                return Ok(eta);
            }
        }
    }
    Err(SolverError::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        residual: delta.as_f64(),
    })
}

/// `max |(eta P - eta)_s|`.
pub fn stationary_residual<T: Scalar>(chain: &InducedChain<T>, eta: &[T]) -> T {
    let mut out = vec![T::zero(); eta.len()];
    left_multiply(eta, chain, &mut out);
    out.iter()
        .zip(eta)
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max)
}

/// Long-run average vector reward under a fixed strategy pair.
pub fn average_reward<T: Scalar>(
    model: &GameModel<T>,
    pi_p: &StationaryStrategy<T>,
    pi_a: &StationaryStrategy<T>,
) -> Result<Vec<T>, SolverError> {
    let chain = induce_chain(model, pi_p, pi_a)?;
    let eta = stationary_distribution(&chain)?;
    let mut out = vec![T::zero(); model.dim()];
    for (s, &weight) in eta.iter().enumerate() {
        for up in 0..model.player_actions() {
            for ua in 0..model.adversary_actions() {
                let w = weight * pi_p.prob(s, up) * pi_a.prob(s, ua);
                if w == T::zero() {
                    continue;
                }
                for (o, &r) in out.iter_mut().zip(model.reward(s, up, ua)) {
                    *o += w * r;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErgodicityReport<T> {
    /// From every state and under every action sequence, `anchor_state` is
    /// hit within `horizon` steps with probability at least `delta`, and
    /// returns to it are possible at two consecutive lags.
    Pass {
        anchor_state: usize,
        horizon: usize,
        delta: T,
        aperiodicity_lag: usize,
    },
    Inconclusive {
        message: String,
    },
}

impl<T> ErgodicityReport<T> {
    pub fn is_pass(&self) -> bool {
        matches!(self, ErgodicityReport::Pass { .. })
    }
}

/// One step of the action-minimized recursion: for every state the minimum,
/// over pure action pairs, of `sum_{s'} p(s'|s,.,.) * value(s')`.
fn min_over_actions<T: Scalar>(model: &GameModel<T>, value: &[T]) -> Vec<T> {
    (0..model.states())
        .map(|s| {
            let mut best = T::infinity();
            for up in 0..model.player_actions() {
                for ua in 0..model.adversary_actions() {
                    let v: T = model
                        .transition(s, up, ua)
                        .iter()
                        .zip(value)
                        .map(|(&p, &h)| p * h)
                        .sum();
                    best = best.min(v);
                }
            }
            best
        })
        .collect()
}

/// Sufficient uniform test for ergodicity under every strategy pair.
///
/// Never reports `Pass` for a model that has a stationary pair with more
/// than one recurrent class or a periodic recurrent class.
pub fn check_ergodicity<T: Scalar>(model: &GameModel<T>) -> ErgodicityReport<T> {
    let n = model.states();
    let mut reach_failures = 0;
    for horizon in 1..=n {
        for anchor in 0..n {
            // hit[s] = min probability of visiting `anchor` within `horizon`
            // steps (counting a return when starting at `anchor`).
            let mut hit = vec![T::zero(); n];
            for _ in 0..horizon {
                let mut cont = hit.clone();
                cont[anchor] = T::one();
                hit = min_over_actions(model, &cont);
            }
            let delta = hit.iter().copied().fold(T::infinity(), T::min);
            if delta <= T::zero() {
                continue;
            }
            match aperiodic_lag(model, anchor) {
                Some(lag) => {
                    return ErgodicityReport::Pass {
                        anchor_state: anchor,
                        horizon,
                        delta,
                        aperiodicity_lag: lag,
                    }
                }
                None => reach_failures += 1,
            }
        }
    }
    let message = if reach_failures > 0 {
        "a uniformly reachable state exists, but no pair of consecutive return lags is forced under all action sequences (possible periodicity)".to_string()
    } else {
        format!("no state is reached from every state within {n} steps under every action sequence")
    };
    ErgodicityReport::Inconclusive { message }
}

/// Smallest `k` such that, under every action sequence, the chain started at
/// `anchor` sits at `anchor` at both steps `k` and `k + 1` with positive
/// probability.
fn aperiodic_lag<T: Scalar>(model: &GameModel<T>, anchor: usize) -> Option<usize> {
    let n = model.states();
    let max_lag = 2 * n * n + 2;
    // at[k][s] = min probability of being at `anchor` exactly k steps after s.
    let mut value = vec![T::zero(); n];
    value[anchor] = T::one();
    let mut previous_positive = false;
    for k in 1..=max_lag + 1 {
        value = min_over_actions(model, &value);
        let positive = value[anchor] > T::zero();
        if positive && previous_positive {
            return Some(k - 1);
        }
        previous_positive = positive;
    }
    None
}
