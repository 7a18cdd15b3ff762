//! Tabular TD-control agents: Q-learning and SARSA with three optional
//! safety mechanisms layered on the classical update.
//!
//! Each call to [`Agent::step`] performs, in order:
//!
//! 1. action selection (epsilon-greedy, or the pinned SARSA action);
//! 2. one environment transition;
//! 3. reversibility bookkeeping for the transition (when enabled);
//! 4. reward shaping `r - lambda * (1 - phi)` (when enabled);
//! 5. target construction with the algorithm's bootstrap;
//! 6. the threshold test `target <= T * Q(s,a)` gating amplification and
//!    rollback;
//! 7. the value update `Q(s,a) += alpha * beta * (target - Q(s,a))`;
//! 8. resolution of the effective next state: the pre-step state if a
//!    rollback fired, the observed next state otherwise.
//!
//! Randomness comes exclusively from the caller's RNG, consumed in a fixed
//! order: one gate draw per selection, one index draw only when exploring,
//! and (SARSA, non-terminal) one selection for the bootstrap action. This
//! fixed order is what makes runs bit-reproducible.

use rand::{Rng, RngCore};

use crate::config::{AgentConfig, Algorithm};
use crate::env::{ActionId, EnvError, Environment, StateId, StepEvents};
use crate::precedence::PrecedenceEstimator;

/// Epsilon-greedy selection over one Q row. Always consumes the gate draw;
/// consumes the index draw only on exploration. Exploitation breaks ties by
/// first index, so fresh uniform tables yield a deterministic action.
pub fn select_action(q_row: &[f64], epsilon: f64, rng: &mut dyn RngCore) -> ActionId {
    assert!(!q_row.is_empty(), "action selection over an empty row");
    let gate: f64 = rng.random();
    if gate < epsilon {
        return ActionId(rng.random_range(0..q_row.len()));
    }
    let mut best = 0;
    for (i, &v) in q_row.iter().enumerate() {
        if v > q_row[best] {
            best = i;
        }
    }
    ActionId(best)
}

/// Shaped reward `r - lambda * (1 - phi_sa)`.
pub fn penalized_reward(r: f64, phi_sa: f64, lambda: f64) -> f64 {
    r - lambda * (1.0 - phi_sa)
}

/// Bootstrapped update target; `next_value` is ignored at terminal steps.
pub fn td_target(r_eff: f64, next_value: f64, gamma: f64, done: bool) -> f64 {
    if done {
        r_eff
    } else {
        r_eff + gamma * next_value
    }
}

/// Value of the best action in a row (the Q-learning bootstrap).
pub fn greedy_value(q_row: &[f64]) -> f64 {
    q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Applies the threshold test and reports `(beta, rollback_flag)`. With both
/// toggles off this is always `(1, false)`. The comparison is inclusive:
/// `target <= T * q_sa` trips. The caller still suppresses rollback at
/// terminal transitions.
pub fn threshold_decision(target: f64, q_sa: f64, cfg: &AgentConfig) -> (f64, bool) {
    if !(cfg.use_threshold_penalty || cfg.use_rollback) {
        return (1.0, false);
    }
    let threshold = cfg.threshold.expect("threshold required by validation");
    if target > threshold * q_sa {
        return (1.0, false);
    }
    let beta = if cfg.use_threshold_penalty {
        cfg.penalty_factor
            .expect("penalty_factor required by validation")
    } else {
        1.0
    };
    (beta, cfg.use_rollback)
}

/// New table entry after one update step.
pub fn apply_update(q_sa: f64, alpha: f64, beta: f64, delta: f64) -> f64 {
    q_sa + alpha * beta * delta
}

/// Everything observable about one agent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentStep {
    pub action: ActionId,
    /// Raw environment reward (shaping never reaches the episode return).
    pub reward: f64,
    pub terminated: bool,
    pub events: StepEvents,
    pub td_error: f64,
    /// 1, or the configured amplification factor when the threshold tripped.
    pub beta_applied: f64,
    pub rollback_fired: bool,
    /// Where the agent actually continues from: equals the pre-step state
    /// whenever `rollback_fired`.
    pub effective_next_state: StateId,
    /// SARSA only: the action pinned for the next step.
    pub effective_next_action: Option<ActionId>,
}

pub struct Agent {
    cfg: AgentConfig,
    num_actions: usize,
    q: Vec<f64>,
    precedence: Option<PrecedenceEstimator>,
    /// Step counter feeding reversibility deadlines; reset per episode.
    t: u64,
    /// SARSA's pre-selected next action, if any.
    pending_action: Option<ActionId>,
}

impl Agent {
    /// Builds an agent for a state/action space. The config must already be
    /// validated; missing mechanism parameters panic here.
    pub fn new(cfg: &AgentConfig, num_states: usize, num_actions: usize) -> Self {
        cfg.validate().expect("agent config must be validated");
        let precedence = cfg.use_precedence.then(|| {
            PrecedenceEstimator::new(
                num_states,
                num_actions,
                cfg.horizon_k.expect("horizon_k required by validation"),
                cfg.ema_rate.expect("ema_rate required by validation"),
                cfg.phi_init.expect("phi_init required by validation"),
            )
        });
        Self {
            cfg: cfg.clone(),
            num_actions,
            q: vec![cfg.q_init; num_states * num_actions],
            precedence,
            t: 0,
            pending_action: None,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn num_states(&self) -> usize {
        self.q.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn q(&self, state: StateId, action: ActionId) -> f64 {
        self.q[state.0 * self.num_actions + action.0]
    }

    pub fn set_q(&mut self, state: StateId, action: ActionId, value: f64) {
        self.q[state.0 * self.num_actions + action.0] = value;
    }

    pub fn q_row(&self, state: StateId) -> &[f64] {
        let base = state.0 * self.num_actions;
        &self.q[base..base + self.num_actions]
    }

    /// Reversibility score, when the estimator is enabled.
    pub fn phi(&self, state: StateId, action: ActionId) -> Option<f64> {
        self.precedence.as_ref().map(|p| p.phi(state, action))
    }

    pub fn precedence(&self) -> Option<&PrecedenceEstimator> {
        self.precedence.as_ref()
    }

    /// Prepares for a new episode. With `reset_tables` the value table and
    /// reversibility scores return to their initial values (the default
    /// protocol: every episode trains from scratch under its own seed);
    /// without it only the per-episode state (step counter, pending
    /// observations, pinned action) is cleared and learning is continual.
    pub fn begin_episode(&mut self, reset_tables: bool) {
        self.t = 0;
        self.pending_action = None;
        if reset_tables {
            self.q.fill(self.cfg.q_init);
            if let Some(p) = &mut self.precedence {
                p.reset(self.cfg.phi_init.expect("phi_init required by validation"));
            }
        } else if let Some(p) = &mut self.precedence {
            p.clear_pending();
        }
    }

    /// Runs one full agent step from `state`, which must be non-terminal.
    pub fn step(
        &mut self,
        env: &dyn Environment,
        state: StateId,
        rng: &mut dyn RngCore,
    ) -> Result<AgentStep, EnvError> {
        let action = match self.pending_action.take() {
            Some(a) => a,
            None => select_action(self.q_row(state), self.cfg.epsilon, rng),
        };
        let out = env.step(state, action)?;
        self.t += 1;

        if let Some(p) = &mut self.precedence {
            p.record(state, action, out.next_state, self.t);
        }
        let r_eff = if self.cfg.use_precedence {
            penalized_reward(
                out.reward,
                self.precedence.as_ref().unwrap().phi(state, action),
                self.cfg
                    .penalty_weight
                    .expect("penalty_weight required by validation"),
            )
        } else {
            out.reward
        };

        let mut sampled_next = None;
        let next_value = if out.terminated {
            0.0
        } else {
            match self.cfg.algorithm {
                Algorithm::QLearning => greedy_value(self.q_row(out.next_state)),
                Algorithm::Sarsa => {
                    let a2 = select_action(self.q_row(out.next_state), self.cfg.epsilon, rng);
                    sampled_next = Some(a2);
                    self.q(out.next_state, a2)
                }
            }
        };
        let target = td_target(r_eff, next_value, self.cfg.gamma, out.terminated);
        let tested = if self.cfg.threshold_on_penalized_target {
            target
        } else {
            td_target(out.reward, next_value, self.cfg.gamma, out.terminated)
        };

        let q_sa = self.q(state, action);
        let (beta, rollback_flag) = threshold_decision(tested, q_sa, &self.cfg);
        let rollback_fired = rollback_flag && !out.terminated;
        let delta = target - q_sa;
        let updated = apply_update(q_sa, self.cfg.alpha, beta, delta);
        assert!(
            updated.is_finite(),
            "non-finite value at state {state} action {action}"
        );
        self.set_q(state, action, updated);

        let effective_next_state = if rollback_fired {
            state
        } else {
            out.next_state
        };
        let effective_next_action = match self.cfg.algorithm {
            Algorithm::Sarsa if !out.terminated => Some(if rollback_fired {
                action
            } else {
                sampled_next.unwrap()
            }),
            _ => None,
        };
        self.pending_action = effective_next_action;

        Ok(AgentStep {
            action,
            reward: out.reward,
            terminated: out.terminated,
            events: out.events,
            td_error: delta,
            beta_applied: beta,
            rollback_fired,
            effective_next_state,
            effective_next_action,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;
    use crate::env::{CliffWalking, EnvKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn selection_picks_unique_argmax_when_greedy() {
        let mut r = rng(0);
        assert_eq!(
            select_action(&[-1.0, -5.0, -5.0, -5.0], 0.0, &mut r),
            ActionId(0)
        );
        assert_eq!(
            select_action(&[-5.0, -5.0, -1.0, -5.0], 0.0, &mut r),
            ActionId(2)
        );
    }

    #[test]
    fn selection_breaks_ties_by_first_index() {
        let mut r = rng(0);
        for _ in 0..100 {
            assert_eq!(
                select_action(&[-1.0, -1.0, -1.0, -1.0], 0.0, &mut r),
                ActionId(0)
            );
        }
    }

    #[test]
    fn selection_is_uniform_at_full_exploration() {
        let mut r = rng(7);
        let mut counts = [0u32; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[select_action(&[9.0, 0.0, 0.0, 0.0], 1.0, &mut r).0] += 1;
        }
        // chi-squared against uniform; 3 dof, 16.27 is the 0.1% cutoff
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn selection_consumes_the_gate_draw_even_when_greedy() {
        let mut a = rng(5);
        let mut b = rng(5);
        select_action(&[1.0, 0.0], 0.0, &mut a);
        let _: f64 = b.random();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn reward_shaping_examples() {
        assert!(close(penalized_reward(-1.0, 0.1, 0.6), -1.54));
        assert_eq!(penalized_reward(-100.0, 1.0, 0.6), -100.0);
        assert_eq!(penalized_reward(-1.0, 0.0, 0.0), -1.0);
    }

    #[test]
    fn target_examples() {
        assert_eq!(td_target(-1.54, 123.0, 0.99, true), -1.54);
        assert!(close(td_target(-1.54, -1.0, 0.99, false), -2.53));
        assert!(close(td_target(-1.0, -2.0, 0.99, false), -2.98));
        assert_eq!(greedy_value(&[-3.0, -1.0, -2.0]), -1.0);
    }

    #[test]
    fn threshold_free_configs_never_trip() {
        let cfg = preset("baseline", EnvKind::CliffWalking).unwrap();
        assert_eq!(threshold_decision(-1e9, -1.0, &cfg), (1.0, false));
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let cfg = preset("fullmodel", EnvKind::CliffWalking).unwrap();
        assert_eq!(threshold_decision(-2.53, -1.0, &cfg), (1.0, false));
        assert_eq!(threshold_decision(-3.0, -1.0, &cfg), (1.1, true));
        assert_eq!(threshold_decision(-101.53, -1.0, &cfg), (1.1, true));
    }

    #[test]
    fn threshold_toggles_split_beta_and_rollback() {
        let rollback = preset("rollbackonly", EnvKind::CliffWalking).unwrap();
        assert_eq!(threshold_decision(-101.53, -1.0, &rollback), (1.0, true));
        let amplify = preset("thresholdpeagent", EnvKind::CliffWalking).unwrap();
        assert_eq!(threshold_decision(-101.53, -1.0, &amplify), (1.1, false));
    }

    #[test]
    fn update_examples() {
        assert!(close(apply_update(-1.0, 0.1, 1.0, -1.53), -1.153));
        assert!(close(apply_update(-1.0, 0.1, 1.1, -1.53), -1.1683));
        assert_eq!(apply_update(-1.0, 0.1, 1.1, 0.0), -1.0);
    }

    /// Forces the fullmodel agent into the cliff from (2,1): the env
    /// teleports and reports a fall, the threshold trips, rollback keeps the
    /// agent's effective state at (2,1).
    #[test]
    fn cliff_fall_trips_threshold_and_rolls_back() {
        let cfg = preset("fullmodel", EnvKind::CliffWalking).unwrap();
        let mut agent = Agent::new(
            &AgentConfig {
                epsilon: 0.0,
                ..cfg
            },
            48,
            4,
        );
        agent.begin_episode(true);
        let s = StateId(25);
        for a in [0, 1, 3] {
            agent.set_q(s, ActionId(a), -2.0);
        }
        let mut r = rng(0);
        let step = agent.step(&CliffWalking, s, &mut r).unwrap();
        assert_eq!(step.action, ActionId(2));
        assert_eq!(step.reward, -100.0);
        assert!(step.events.fell_off_cliff);
        assert!(!step.terminated);
        assert!(step.rollback_fired);
        assert_eq!(step.beta_applied, 1.1);
        assert_eq!(step.effective_next_state, s);
        // r' = -100 - 0.6*(1 - 0.1) = -100.54; target = -100.54 + 0.99*(-1)
        assert!(close(step.td_error, -101.53 - (-1.0)));
        assert!(close(agent.q(s, ActionId(2)), -1.0 + 0.1 * 1.1 * (-100.53)));
    }

    #[test]
    fn rollback_is_suppressed_at_terminal_transitions() {
        let cfg = preset("fullmodel", EnvKind::CliffWalking).unwrap();
        let mut agent = Agent::new(
            &AgentConfig {
                epsilon: 0.0,
                ..cfg
            },
            48,
            4,
        );
        agent.begin_episode(true);
        // From (2,11), moving down reaches the goal. A nearly-zero entry
        // makes the terminal target -1.54 trip the threshold test.
        let s = StateId(35);
        agent.set_q(s, ActionId(2), -0.2);
        for a in [0, 1, 3] {
            agent.set_q(s, ActionId(a), -2.0);
        }
        let mut r = rng(0);
        let step = agent.step(&CliffWalking, s, &mut r).unwrap();
        assert!(step.terminated);
        assert_eq!(step.beta_applied, 1.1, "threshold still amplifies");
        assert!(
            !step.rollback_fired,
            "no rollback out of a finished episode"
        );
        assert_eq!(step.effective_next_state, StateId(47));
        assert_eq!(step.effective_next_action, None);
    }

    #[test]
    fn sarsa_rollback_pins_the_next_action() {
        let cfg = preset("fullmodel", EnvKind::CliffWalking).unwrap();
        let cfg = AgentConfig {
            algorithm: Algorithm::Sarsa,
            epsilon: 0.0,
            ..cfg
        };
        let mut agent = Agent::new(&cfg, 48, 4);
        agent.begin_episode(true);
        let s = StateId(25);
        for a in [0, 1, 3] {
            agent.set_q(s, ActionId(a), -2.0);
        }
        let mut r = rng(0);
        let step = agent.step(&CliffWalking, s, &mut r).unwrap();
        assert!(step.rollback_fired);
        assert_eq!(step.effective_next_action, Some(ActionId(2)));
        // The pinned action re-executes even though the row now prefers
        // another action.
        let step2 = agent.step(&CliffWalking, s, &mut r).unwrap();
        assert_eq!(step2.action, ActionId(2));
    }

    #[test]
    fn sarsa_bootstraps_on_the_sampled_action() {
        let cfg = AgentConfig {
            algorithm: Algorithm::Sarsa,
            epsilon: 0.0,
            ..preset("baseline", EnvKind::CliffWalking).unwrap()
        };
        let mut agent = Agent::new(&cfg, 48, 4);
        agent.begin_episode(true);
        // Rig "up" as the start argmax and give the next state's row a
        // distinctive best entry for the bootstrap.
        agent.set_q(StateId(36), ActionId(0), 3.0);
        agent.set_q(StateId(24), ActionId(3), 2.0);
        let mut r = rng(0);
        let step = agent.step(&CliffWalking, StateId(36), &mut r).unwrap();
        assert_eq!(step.action, ActionId(0));
        assert_eq!(step.effective_next_state, StateId(24));
        assert_eq!(step.effective_next_action, Some(ActionId(3)));
        // target = -1 + 0.99 * Q(24, 3) = -1 + 1.98
        assert!(close(step.td_error, (-1.0 + 0.99 * 2.0) - 3.0));
    }

    #[test]
    fn shaping_uses_scores_refreshed_by_the_same_step() {
        // Border bumps are self-loops: the second bump's pending observation
        // resolves as a return during the third step's bookkeeping, so the
        // third update sees a raised score.
        let cfg = AgentConfig {
            epsilon: 0.0,
            ..preset("precedenceonly", EnvKind::CliffWalking).unwrap()
        };
        let mut agent = Agent::new(&cfg, 48, 4);
        agent.begin_episode(true);
        // Pin the agent to bump left from the start corner forever.
        agent.set_q(StateId(36), ActionId(3), 1e9);
        let mut r = rng(0);
        agent.step(&CliffWalking, StateId(36), &mut r).unwrap();
        assert_eq!(agent.phi(StateId(36), ActionId(3)), Some(0.1));
        agent.step(&CliffWalking, StateId(36), &mut r).unwrap();
        let raised = (1.0 - 0.01) * 0.1 + 0.01;
        assert_eq!(agent.phi(StateId(36), ActionId(3)), Some(raised));
        let q_before = agent.q(StateId(36), ActionId(3));
        let step3 = agent.step(&CliffWalking, StateId(36), &mut r).unwrap();
        let raised2 = (1.0 - 0.01) * raised + 0.01;
        let expected_reff = penalized_reward(-1.0, raised2, 0.6);
        let expected_target = expected_reff + 0.99 * q_before;
        assert!(close(step3.td_error, expected_target - q_before));
    }

    #[test]
    fn fresh_episode_resets_tables_and_pinned_state() {
        let cfg = preset("fullmodel", EnvKind::CliffWalking).unwrap();
        let mut agent = Agent::new(&cfg, 48, 4);
        agent.begin_episode(true);
        let mut r = rng(3);
        let mut s = StateId(36);
        for _ in 0..20 {
            s = agent
                .step(&CliffWalking, s, &mut r)
                .unwrap()
                .effective_next_state;
        }
        agent.begin_episode(true);
        assert_eq!(agent.q(StateId(36), ActionId(0)), -1.0);
        assert_eq!(agent.phi(StateId(36), ActionId(0)), Some(0.1));
        assert_eq!(agent.precedence().unwrap().pending_len(), 0);
    }

    #[test]
    fn persistent_episodes_keep_learned_tables() {
        let cfg = preset("fullmodel", EnvKind::CliffWalking).unwrap();
        let mut agent = Agent::new(&cfg, 48, 4);
        agent.begin_episode(true);
        let mut r = rng(3);
        let mut s = StateId(36);
        for _ in 0..20 {
            s = agent
                .step(&CliffWalking, s, &mut r)
                .unwrap()
                .effective_next_state;
        }
        let q = agent.q(StateId(36), ActionId(0));
        agent.begin_episode(false);
        assert_eq!(agent.q(StateId(36), ActionId(0)), q);
        assert_eq!(agent.precedence().unwrap().pending_len(), 0);
    }

    #[test]
    fn errors_from_the_environment_propagate() {
        let cfg = preset("baseline", EnvKind::CliffWalking).unwrap();
        let mut agent = Agent::new(&cfg, 48, 4);
        let mut r = rng(0);
        assert!(matches!(
            agent.step(&CliffWalking, StateId(47), &mut r),
            Err(EnvError::TerminalState(_))
        ));
    }
}
