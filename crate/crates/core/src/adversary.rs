//! Adversary behaviors the controller is exercised against.

use crate::error::{ModelError, SolverError};
use crate::game_model::{GameModel, StationaryStrategy};
use crate::scalar::{sub, Scalar};
use crate::solver::{adversary_best_response, RviOptions};
use crate::target_geometry::ConvexTarget;

#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryPolicy<T> {
    Fixed(StationaryStrategy<T>),
    UniformRandom,
    /// Cycles through `strategies`, advancing every `period` steps.
    PeriodicSwitching {
        strategies: Vec<StationaryStrategy<T>>,
        period: u64,
    },
    /// Best response to the player's strategy, recomputed at player switches.
    BestResponse,
    /// Best response recomputed every `every` steps.
    Antagonist {
        every: u64,
    },
}

impl<T: Scalar> AdversaryPolicy<T> {
    pub fn validate(&self, model: &GameModel<T>) -> Result<(), ModelError> {
        let check = |s: &StationaryStrategy<T>| {
            if s.states() != model.states() || s.actions() != model.adversary_actions() {
                Err(ModelError::DimensionMismatch {
                    what: "adversary strategy shape",
                    expected: model.states() * model.adversary_actions(),
                    found: s.states() * s.actions(),
                })
            } else {
                Ok(())
            }
        };
        match self {
            AdversaryPolicy::Fixed(s) => check(s),
            AdversaryPolicy::PeriodicSwitching { strategies, period } => {
                if strategies.is_empty() {
                    return Err(ModelError::Empty("periodic adversary strategy"));
                }
                if *period == 0 {
                    return Err(ModelError::Empty("periodic adversary period step"));
                }
                strategies.iter().try_for_each(check)
            }
            AdversaryPolicy::Antagonist { every } if *every == 0 => Err(ModelError::Empty("antagonist period step")),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AdversaryPolicy::Fixed(_) => "fixed",
            AdversaryPolicy::UniformRandom => "uniform-random",
            AdversaryPolicy::PeriodicSwitching { .. } => "periodic-switching",
            AdversaryPolicy::BestResponse => "best-response",
            AdversaryPolicy::Antagonist { .. } => "antagonist",
        }
    }
}

/// What the adversary sees before choosing its action at step `n`.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'b, T> {
    pub step: u64,
    pub state: usize,
    /// The player's emitted strategy for this step.
    pub player_strategy: &'b StationaryStrategy<T>,
    pub player_switched: bool,
    /// Running average before this step's reward.
    pub x_prev: &'b [T],
}

/// Run-local adversary state.
#[derive(Debug, Clone)]
pub struct Adversary<'a, T> {
    policy: AdversaryPolicy<T>,
    model: &'a GameModel<T>,
    target: &'a ConvexTarget<T>,
    options: RviOptions,
    membership_tol: T,
    current: StationaryStrategy<T>,
}

impl<'a, T: Scalar> Adversary<'a, T> {
    pub fn new(
        policy: AdversaryPolicy<T>,
        model: &'a GameModel<T>,
        target: &'a ConvexTarget<T>,
        options: RviOptions,
        membership_tol: T,
    ) -> Result<Self, ModelError> {
        policy.validate(model)?;
        let current = match &policy {
            AdversaryPolicy::Fixed(s) => s.clone(),
            AdversaryPolicy::PeriodicSwitching { strategies, .. } => strategies[0].clone(),
            _ => StationaryStrategy::uniform(model.states(), model.adversary_actions()),
        };
        Ok(Self {
            policy,
            model,
            target,
            options,
            membership_tol,
            current,
        })
    }

    pub fn policy(&self) -> &AdversaryPolicy<T> {
        &self.policy
    }

    /// Strategy in force after the last call to [`Adversary::action`].
    pub fn current_strategy(&self) -> &StationaryStrategy<T> {
        &self.current
    }

    fn respond(&mut self, obs: &Observation<'_, T>) -> Result<(), SolverError> {
        let (projection, distance) = self
            .target
            .project_with_distance(obs.x_prev)
            .map_err(|e| SolverError::InvalidInput(e.to_string()))?;
        // Inside the target there is no hyperplane to push across; keep the
        // previous response.
        if distance <= self.membership_tol {
            return Ok(());
        }
        let direction = sub(&projection, obs.x_prev);
        self.current = adversary_best_response(self.model, obs.player_strategy, &direction, &self.options)?.strategy;
        Ok(())
    }

    /// Chooses `u_a` for this step; `u` is a uniform draw in `[0, 1)`.
    pub fn action(&mut self, obs: &Observation<'_, T>, u: T) -> Result<usize, SolverError> {
        match &self.policy {
            AdversaryPolicy::Fixed(_) | AdversaryPolicy::UniformRandom => {}
            AdversaryPolicy::PeriodicSwitching { strategies, period } => {
                let phase = ((obs.step - 1) / period) as usize % strategies.len();
                if self.current != strategies[phase] {
                    self.current = strategies[phase].clone();
                }
            }
            AdversaryPolicy::BestResponse => {
                if obs.player_switched {
                    self.respond(obs)?;
                }
            }
            AdversaryPolicy::Antagonist { every } => {
                if (obs.step - 1).is_multiple_of(*every) {
                    self.respond(obs)?;
                }
            }
        }
        Ok(self.current.sample(obs.state, u))
    }
}
