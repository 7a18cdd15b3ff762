//! Tabular Q-learning and SARSA with reversibility-aware safeguards.
//!
//! The crate couples a classical TD-control core with three optional
//! mechanisms that can be toggled independently per agent:
//!
//! - a reversibility estimator that scores each state-action pair by how
//!   often it is followed by a return to the same state within a short
//!   horizon, and shapes rewards with `-lambda * (1 - phi)`;
//! - a threshold test on the update target that amplifies corrective
//!   updates by a factor `P`;
//! - an explicit rollback that pins the agent to its pre-step state (and,
//!   for SARSA, its pre-step action) when the threshold trips.
//!
//! [`env`] hosts the two benchmark environments (CliffWalking and Taxi),
//! [`agent`] the update rule, [`precedence`] the reversibility estimator,
//! and [`experiment`] the seeded harness that turns configurations into
//! episode logs, summaries, ablation reports, and sweeps, all as CSV. The
//! `revq` binary in the sibling CLI crate fronts the harness.
//!
//! Every run is a pure function of its configuration and base seed: one
//! ChaCha8 stream per episode, fixed draw order, no hidden global state.

pub mod agent;
pub mod config;
pub mod env;
pub mod experiment;
pub mod precedence;
pub mod stats;
