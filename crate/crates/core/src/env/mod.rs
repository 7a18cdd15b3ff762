//! Tabular environments with dense integer state/action spaces.
//!
//! Environments are pure: `step` is a function of `(state, action)` and all
//! randomness lives in the caller-supplied RNG passed to `reset`. This keeps
//! every rollout fully determined by its seed.

use std::fmt;

use rand::RngCore;

mod cliff;
mod taxi;

pub use cliff::CliffWalking;
pub use taxi::{Taxi, TaxiSituation};

/// Index into a dense state space `0..num_states`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

/// Index into a dense action space `0..num_actions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Domain events reported by a single transition, used for episode accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepEvents {
    /// CliffWalking: the move landed in the cliff region.
    pub fell_off_cliff: bool,
    /// Taxi: pickup/dropoff attempted where it is not allowed.
    pub illegal_action: bool,
    /// Taxi: passenger delivered to the destination.
    pub delivered: bool,
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateId,
    pub reward: f64,
    pub terminated: bool,
    pub events: StepEvents,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("state index {state} out of range ({num_states} states)")]
    InvalidState { state: usize, num_states: usize },
    #[error("action index {action} out of range ({num_actions} actions)")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("cannot step from terminal state {0}")]
    TerminalState(StateId),
}

pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Draws an initial state. Deterministic environments ignore the RNG.
    fn reset(&self, rng: &mut dyn RngCore) -> StateId;
    fn step(&self, state: StateId, action: ActionId) -> Result<StepOutcome, EnvError>;
}

/// The two shipped environments, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EnvKind {
    #[serde(rename = "cliffwalking")]
    CliffWalking,
    #[serde(rename = "taxi")]
    Taxi,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CliffWalking => "cliffwalking",
            EnvKind::Taxi => "taxi",
        }
    }

    /// Episode step cap used by the experiment harness.
    pub fn default_step_limit(self) -> u64 {
        match self {
            EnvKind::CliffWalking => 700,
            EnvKind::Taxi => 1500,
        }
    }

    pub fn build(self) -> Box<dyn Environment + Send + Sync> {
        match self {
            EnvKind::CliffWalking => Box::new(CliffWalking),
            EnvKind::Taxi => Box::new(Taxi),
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cliffwalking" => Ok(EnvKind::CliffWalking),
            "taxi" => Ok(EnvKind::Taxi),
            other => Err(format!(
                "unknown environment '{other}' (expected cliffwalking or taxi)"
            )),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
