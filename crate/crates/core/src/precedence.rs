//! Empirical reversibility estimation.
//!
//! For every state-action pair the estimator keeps a score `phi` in [0, 1]:
//! the exponentially weighted fraction of times that taking the action was
//! followed by a return to the originating state within a fixed horizon.
//! Each transition enqueues a pending observation; pending observations are
//! resolved against the states visited afterwards. A return within the
//! horizon resolves to 1, expiry resolves to 0, and either outcome updates
//! `phi` by an exponential moving average.

use std::collections::VecDeque;

use crate::env::{ActionId, StateId};

#[derive(Debug, Clone, Copy)]
struct PendingReturn {
    origin: StateId,
    action: ActionId,
    /// Last time step (inclusive) at which a return still counts.
    deadline: u64,
}

#[derive(Debug, Clone)]
pub struct PrecedenceEstimator {
    phi: Vec<f64>,
    num_actions: usize,
    horizon: u64,
    ema_rate: f64,
    pending: VecDeque<PendingReturn>,
}

impl PrecedenceEstimator {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: u64,
        ema_rate: f64,
        phi_init: f64,
    ) -> Self {
        Self {
            phi: vec![phi_init; num_states * num_actions],
            num_actions,
            horizon,
            ema_rate,
            pending: VecDeque::new(),
        }
    }

    pub fn phi(&self, state: StateId, action: ActionId) -> f64 {
        self.phi[state.0 * self.num_actions + action.0]
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Resets every score to `phi_init` and drops all pending observations.
    pub fn reset(&mut self, phi_init: f64) {
        self.phi.fill(phi_init);
        self.pending.clear();
    }

    /// Drops pending observations but keeps the learned scores.
    pub fn clear_pending(&mut self) {
        self.pending.clear();
    }

    /// Folds one transition into the estimator. `now` is the time step count
    /// after the transition; pending observations are resolved against
    /// `next_state` in FIFO order (a return is checked before expiry), then
    /// the transition itself is enqueued.
    pub fn record(&mut self, state: StateId, action: ActionId, next_state: StateId, now: u64) {
        let mut i = 0;
        while i < self.pending.len() {
            let p = self.pending[i];
            if next_state == p.origin {
                self.bump(p.origin, p.action, 1.0);
                self.pending.remove(i);
            } else if now > p.deadline {
                self.bump(p.origin, p.action, 0.0);
                self.pending.remove(i);
            } else {
                i += 1;
            }
        }
        self.pending.push_back(PendingReturn {
            origin: state,
            action,
            deadline: now + self.horizon,
        });
    }

    fn bump(&mut self, state: StateId, action: ActionId, outcome: f64) {
        let slot = &mut self.phi[state.0 * self.num_actions + action.0];
        *slot = (1.0 - self.ema_rate) * *slot + self.ema_rate * outcome;
    }
}
