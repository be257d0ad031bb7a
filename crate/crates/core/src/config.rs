//! Experiment configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! replications = 4
//!
//! [game]
//! generator = "random"        # random | lowerbound | signal-dependence | file
//! action_counts = [2, 2]
//!
//! [agents]
//! model = "no-regret"         # no-regret | rationalizable
//!
//! [principal]
//! algorithm = "steer"
//! horizon = 100000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::error::{Error, Result};
use crate::game::GameShape;
use crate::steering::SteeringConfig;
use crate::transcript::AgentModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Random,
    Lowerbound,
    SignalDependence,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub generator: Generator,
    #[serde(default)]
    pub action_counts: Vec<usize>,
    /// Fixed game seed; when absent each replication draws its own game.
    pub seed: Option<u64>,
    /// Grid spacing parameter for the lower-bound family.
    pub epsilon: Option<f64>,
    /// Penalty for the signal-dependence game.
    pub penalty: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    pub model: AgentModel,
    /// One policy for every rationalizable agent.
    pub policy: Option<Policy>,
    /// Per-agent policies; overrides `policy`.
    pub policies: Option<Vec<Policy>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Bisection learner (single or multi-agent).
    LearnRationalizable,
    /// Projected-gradient learner (single or multi-agent).
    LearnNoregret,
    MinPayment,
    Steer,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LearnRationalizable => "learn-rationalizable",
            Algorithm::LearnNoregret => "learn-noregret",
            Algorithm::MinPayment => "min-payment",
            Algorithm::Steer => "steer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalConfig {
    pub algorithm: Algorithm,
    pub epsilon: Option<f64>,
    /// Total rounds (single-agent no-regret learning and steering).
    pub horizon: Option<u64>,
    /// Rounds per learning phase.
    pub phase_length: Option<u64>,
    pub rho: Option<f64>,
    pub epsilon_cap: Option<f64>,
    pub penalty: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_true")]
    pub transcripts: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { transcripts: true }
    }
}

fn default_true() -> bool {
    true
}

fn default_replications() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    pub out: Option<PathBuf>,
    pub game: GameConfig,
    pub agents: AgentsConfig,
    pub principal: PrincipalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::config(format!("field `{name}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads and validates; relative game paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads without validating, for callers that override fields first.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let (Some(p), Some(dir)) = (cfg.game.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Action counts implied by the game section, when known without I/O.
    pub fn declared_shape(&self) -> Result<Option<GameShape>> {
        match self.game.generator {
            Generator::SignalDependence => Ok(Some(GameShape::new(vec![2, 2])?)),
            Generator::File => Ok(None),
            Generator::Random | Generator::Lowerbound => {
                GameShape::new(self.game.action_counts.clone())
                    .map(Some)
                    .map_err(|e| field("game.action_counts", e))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(field("replications", "must be at least 1"));
        }
        let g = &self.game;
        match g.generator {
            Generator::Lowerbound => {
                let eps = g
                    .epsilon
                    .ok_or_else(|| field("game.epsilon", "required by the lowerbound generator"))?;
                if !(eps > 0.0 && eps < 0.5) {
                    return Err(field("game.epsilon", "must lie in (0, 0.5)"));
                }
            }
            Generator::SignalDependence => {
                if let Some(p) = g.penalty {
                    if !(p >= 10.0 && p.is_finite()) {
                        return Err(field("game.penalty", "must be finite and at least 10"));
                    }
                }
            }
            Generator::File => {
                if g.path.is_none() {
                    return Err(field("game.path", "required by the file generator"));
                }
            }
            Generator::Random => {}
        }
        let shape = self.declared_shape()?;

        let a = &self.agents;
        if let (Some(ps), Some(shape)) = (&a.policies, &shape) {
            if ps.len() != shape.num_agents() {
                return Err(field(
                    "agents.policies",
                    format!("{} entries for {} agents", ps.len(), shape.num_agents()),
                ));
            }
        }

        let p = &self.principal;
        let need_eps = |name: &str| -> Result<f64> {
            let e = p
                .epsilon
                .ok_or_else(|| field("principal.epsilon", format!("required by {name}")))?;
            if !(e > 0.0 && e < 1.0) {
                return Err(field("principal.epsilon", "must lie in (0, 1)"));
            }
            Ok(e)
        };
        match p.algorithm {
            Algorithm::LearnRationalizable | Algorithm::MinPayment => {
                need_eps(p.algorithm.name())?;
                if a.model != AgentModel::Rationalizable {
                    return Err(field(
                        "agents.model",
                        format!("{} needs rationalizable agents", p.algorithm.name()),
                    ));
                }
                if p.algorithm == Algorithm::MinPayment {
                    if let Some(s) = &shape {
                        if s.num_agents() != 1 {
                            return Err(field(
                                "game.action_counts",
                                "min-payment learns a single agent",
                            ));
                        }
                    }
                }
            }
            Algorithm::LearnNoregret => {
                if a.model != AgentModel::NoRegret {
                    return Err(field(
                        "agents.model",
                        "learn-noregret needs no-regret agents",
                    ));
                }
                if p.phase_length.is_none() && p.horizon.is_none() {
                    need_eps("learn-noregret without phase_length or horizon")?;
                }
                if p.phase_length == Some(0) || p.horizon == Some(0) {
                    return Err(field("principal.phase_length", "must be positive"));
                }
            }
            Algorithm::Steer => {
                if a.model != AgentModel::NoRegret {
                    return Err(field("agents.model", "steer needs no-regret agents"));
                }
                let horizon = p
                    .horizon
                    .ok_or_else(|| field("principal.horizon", "required by steer"))?;
                if let Some(shape) = &shape {
                    self.steering_config(horizon, 0)
                        .validate(shape)
                        .map_err(|e| field("principal.phase_length", e))?;
                }
            }
        }
        Ok(())
    }

    /// Steering parameters with defaults filled in from the horizon.
    pub fn steering_config(&self, horizon: u64, seed: u64) -> SteeringConfig {
        let d = SteeringConfig::with_defaults(horizon, seed);
        let p = &self.principal;
        SteeringConfig {
            phase_length: p.phase_length.unwrap_or(d.phase_length),
            rho: p.rho.unwrap_or(d.rho),
            epsilon_cap: p.epsilon_cap.unwrap_or(d.epsilon_cap),
            penalty: p.penalty.unwrap_or(d.penalty),
            ..d
        }
    }

    pub fn policies(&self, num_agents: usize) -> Vec<Policy> {
        match (&self.agents.policies, self.agents.policy) {
            (Some(ps), _) => ps.clone(),
            (None, Some(p)) => vec![p; num_agents],
            (None, None) => vec![Policy::GreedyUniform; num_agents],
        }
    }
}
