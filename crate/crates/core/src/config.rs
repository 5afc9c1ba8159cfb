//! JSON documents: model, target, controller, adversary and run settings.
//!
//! All sections reject unknown keys. Infinite box bounds are written as
//! `null`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryPolicy;
use crate::controller::{ControllerParams, Scheme};
use crate::error::ConfigError;
use crate::game_model::{GameModel, StationaryStrategy};
use crate::scalar::Scalar;
use crate::sim::RunConfig;
use crate::target_geometry::ConvexTarget;

type Nested4 = Vec<Vec<Vec<Vec<f64>>>>;

/// The game itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub states: usize,
    pub player_actions: usize,
    pub adversary_actions: usize,
    pub dim: usize,
    /// `kernel[s][u_p][u_a][s']`
    pub kernel: Nested4,
    /// `reward[s][u_p][u_a][k]`
    pub reward: Nested4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetDocument {
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Halfspaces {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        witness: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeDocument {
    TwoTimeScale,
    ReturnTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerDocument {
    pub beta: f64,
    pub membership_tol: f64,
    pub solver_tol: f64,
    pub scheme: SchemeDocument,
    pub reference_state: usize,
}

impl Default for ControllerDocument {
    fn default() -> Self {
        let p = ControllerParams::default();
        Self {
            beta: p.beta,
            membership_tol: p.membership_tol,
            solver_tol: p.solver_tol,
            scheme: SchemeDocument::TwoTimeScale,
            reference_state: p.reference_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryDocument {
    Fixed {
        strategy: Vec<Vec<f64>>,
    },
    UniformRandom,
    PeriodicSwitching {
        strategies: Vec<Vec<Vec<f64>>>,
        period: u64,
    },
    BestResponse,
    Antagonist {
        every: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub initial_state: Option<usize>,
    #[serde(default)]
    pub record_stride: Option<u64>,
}

/// A complete configuration: the model fields at top level plus optional
/// sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub states: usize,
    pub player_actions: usize,
    pub adversary_actions: usize,
    pub dim: usize,
    pub kernel: Nested4,
    pub reward: Nested4,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunDocument>,
}

fn cast<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

fn cast_vec<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().copied().map(cast).collect()
}

fn cast_nested<T: Scalar>(v: &Nested4) -> Vec<Vec<Vec<Vec<T>>>> {
    v.iter()
        .map(|a| a.iter().map(|b| b.iter().map(|c| cast_vec(c)).collect()).collect())
        .collect()
}

impl ModelDocument {
    pub fn to_model<T: Scalar>(&self) -> Result<GameModel<T>, ConfigError> {
        Ok(GameModel::from_nested_with_shape(
            self.states,
            self.player_actions,
            self.adversary_actions,
            self.dim,
            &cast_nested(&self.kernel),
            &cast_nested(&self.reward),
        )?)
    }
}

impl TargetDocument {
    pub fn to_target<T: Scalar>(&self) -> Result<ConvexTarget<T>, ConfigError> {
        let target = match self {
            TargetDocument::Box { lower, upper } => ConvexTarget::bounded_box(
                lower.iter().map(|v| v.map_or(T::neg_infinity(), cast)).collect(),
                upper.iter().map(|v| v.map_or(T::infinity(), cast)).collect(),
            )?,
            TargetDocument::Ball { center, radius } => ConvexTarget::ball(cast_vec(center), cast(*radius))?,
            TargetDocument::Halfspaces {
                normals,
                offsets,
                witness,
            } => ConvexTarget::halfspaces(
                normals.iter().map(|n| cast_vec(n)).collect(),
                cast_vec(offsets),
                witness.as_deref().map(cast_vec),
            )?,
        };
        Ok(target)
    }
}

impl ControllerDocument {
    pub fn to_params(&self) -> ControllerParams {
        ControllerParams {
            beta: self.beta,
            membership_tol: self.membership_tol,
            solver_tol: self.solver_tol,
            scheme: match self.scheme {
                SchemeDocument::TwoTimeScale => Scheme::TwoTimeScale,
                SchemeDocument::ReturnTime => Scheme::ReturnTime,
            },
            reference_state: self.reference_state,
        }
    }
}

impl AdversaryDocument {
    pub fn to_policy<T: Scalar>(&self) -> Result<AdversaryPolicy<T>, ConfigError> {
        let strategy = |rows: &Vec<Vec<f64>>| -> Result<StationaryStrategy<T>, ConfigError> {
            Ok(StationaryStrategy::new(rows.iter().map(|r| cast_vec(r)).collect())?)
        };
        Ok(match self {
            AdversaryDocument::Fixed { strategy: s } => AdversaryPolicy::Fixed(strategy(s)?),
            AdversaryDocument::UniformRandom => AdversaryPolicy::UniformRandom,
            AdversaryDocument::PeriodicSwitching { strategies, period } => AdversaryPolicy::PeriodicSwitching {
                strategies: strategies.iter().map(strategy).collect::<Result<_, _>>()?,
                period: *period,
            },
            AdversaryDocument::BestResponse => AdversaryPolicy::BestResponse,
            AdversaryDocument::Antagonist { every } => AdversaryPolicy::Antagonist { every: *every },
        })
    }

    /// Parses a command-line adversary spec: `uniform-random`,
    /// `best-response`, `antagonist[:k]` or `fixed:<action>` (the same pure
    /// action in every state).
    pub fn from_flag(flag: &str, states: usize, adversary_actions: usize) -> Result<Self, ConfigError> {
        let (kind, arg) = match flag.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (flag, None),
        };
        let parse = |a: &str| {
            a.parse::<u64>()
                .map_err(|_| ConfigError::Invalid(format!("bad adversary argument `{a}`")))
        };
        match (kind, arg) {
            ("uniform-random", None) => Ok(AdversaryDocument::UniformRandom),
            ("best-response", None) => Ok(AdversaryDocument::BestResponse),
            ("antagonist", None) => Ok(AdversaryDocument::Antagonist { every: 100 }),
            ("antagonist", Some(a)) => Ok(AdversaryDocument::Antagonist { every: parse(a)? }),
            ("fixed", Some(a)) => {
                let action = parse(a)? as usize;
                if action >= adversary_actions {
                    return Err(ConfigError::Invalid(format!("adversary action {action} out of range")));
                }
                let mut row = vec![0.0; adversary_actions];
                row[action] = 1.0;
                Ok(AdversaryDocument::Fixed {
                    strategy: vec![row; states],
                })
            }
            _ => Err(ConfigError::Invalid(format!("unknown adversary `{flag}`"))),
        }
    }
}

impl ConfigDocument {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn model_document(&self) -> ModelDocument {
        ModelDocument {
            states: self.states,
            player_actions: self.player_actions,
            adversary_actions: self.adversary_actions,
            dim: self.dim,
            kernel: self.kernel.clone(),
            reward: self.reward.clone(),
        }
    }

    pub fn model<T: Scalar>(&self) -> Result<GameModel<T>, ConfigError> {
        self.model_document().to_model()
    }

    pub fn target<T: Scalar>(&self) -> Result<ConvexTarget<T>, ConfigError> {
        let target = self
            .target
            .as_ref()
            .ok_or(ConfigError::MissingSection("target"))?
            .to_target()?;
        if target.dim() != self.dim {
            return Err(ConfigError::Invalid(format!(
                "target dimension {} differs from reward dimension {}",
                target.dim(),
                self.dim
            )));
        }
        Ok(target)
    }

    pub fn controller_params(&self) -> ControllerParams {
        self.controller.clone().unwrap_or_default().to_params()
    }

    /// Assembles a run configuration; `steps` defaults to the `run` section
    /// and then to 100000, the adversary to uniform random.
    pub fn run_config<T: Scalar>(&self) -> Result<RunConfig<T>, ConfigError> {
        let model = Arc::new(self.model::<T>()?);
        let target = Arc::new(self.target::<T>()?);
        let params = self.controller_params();
        params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let adversary = self
            .adversary
            .as_ref()
            .map(AdversaryDocument::to_policy)
            .transpose()?
            .unwrap_or(AdversaryPolicy::UniformRandom);
        adversary.validate(&model)?;
        let run = self.run.clone().unwrap_or(RunDocument {
            steps: None,
            seed: None,
            initial_state: None,
            record_stride: None,
        });
        let mut cfg = RunConfig::new(model, target, run.steps.unwrap_or(100_000));
        cfg.controller = params;
        cfg.adversary = adversary;
        cfg.seed = run.seed.unwrap_or(0);
        cfg.initial_state = run.initial_state.unwrap_or(0);
        cfg.record_stride = run.record_stride;
        if cfg.initial_state >= cfg.model.states() {
            return Err(ConfigError::Invalid(format!(
                "initial state {} out of range",
                cfg.initial_state
            )));
        }
        Ok(cfg)
    }
}

impl ModelDocument {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }
}
