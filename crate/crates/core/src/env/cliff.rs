//! CliffWalking: a 4x12 grid with a cliff along the bottom edge.
//!
//! States are row-major cell indices (`row * 12 + col`). The agent starts at
//! (3,0) = 36 and must reach the goal (3,11) = 47. Cells (3,1)..(3,10) are the
//! cliff: moving into them costs -100 and teleports the agent back to the
//! start without ending the episode. Every other move costs -1; moves off the
//! border leave the position unchanged. Reaching the goal terminates.

use rand::RngCore;

use super::{ActionId, EnvError, Environment, StateId, StepEvents, StepOutcome};

const ROWS: usize = 4;
const COLS: usize = 12;
const START: usize = 36;
const GOAL: usize = 47;

/// Actions: 0 = up, 1 = right, 2 = down, 3 = left.
pub struct CliffWalking;

fn is_cliff(cell: usize) -> bool {
    let (row, col) = (cell / COLS, cell % COLS);
    row == 3 && (1..=10).contains(&col)
}

impl Environment for CliffWalking {
    fn num_states(&self) -> usize {
        ROWS * COLS
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn reset(&self, _rng: &mut dyn RngCore) -> StateId {
        StateId(START)
    }

    fn step(&self, state: StateId, action: ActionId) -> Result<StepOutcome, EnvError> {
        let StateId(s) = state;
        if s >= ROWS * COLS {
            return Err(EnvError::InvalidState {
                state: s,
                num_states: ROWS * COLS,
            });
        }
        if s == GOAL {
            return Err(EnvError::TerminalState(state));
        }
        let ActionId(a) = action;
        let (row, col) = (s / COLS, s % COLS);
        let (row, col) = match a {
            0 => (row.saturating_sub(1), col),
            1 => (row, (col + 1).min(COLS - 1)),
            2 => ((row + 1).min(ROWS - 1), col),
            3 => (row, col.saturating_sub(1)),
            _ => {
                return Err(EnvError::InvalidAction {
                    action: a,
                    num_actions: 4,
                })
            }
        };
        let dest = row * COLS + col;
        if is_cliff(dest) {
            return Ok(StepOutcome {
                next_state: StateId(START),
                reward: -100.0,
                terminated: false,
                events: StepEvents {
                    fell_off_cliff: true,
                    ..StepEvents::default()
                },
            });
        }
        Ok(StepOutcome {
            next_state: StateId(dest),
            reward: -1.0,
            terminated: dest == GOAL,
            events: StepEvents::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn step(s: usize, a: usize) -> StepOutcome {
        CliffWalking.step(StateId(s), ActionId(a)).unwrap()
    }

    #[test]
    fn reset_is_start_cell() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(CliffWalking.reset(&mut rng), StateId(36));
    }

    #[test]
    fn plain_move() {
        let out = step(36, 0);
        assert_eq!(out.next_state, StateId(24));
        assert_eq!(out.reward, -1.0);
        assert!(!out.terminated);
        assert_eq!(out.events, StepEvents::default());
    }

    #[test]
    fn falling_teleports_to_start_without_terminating() {
        // (2,1) = 25, down lands in cliff cell (3,1).
        let out = step(25, 2);
        assert_eq!(out.next_state, StateId(36));
        assert_eq!(out.reward, -100.0);
        assert!(!out.terminated);
        assert!(out.events.fell_off_cliff);
    }

    #[test]
    fn reaching_goal_terminates() {
        // (2,11) = 35, down reaches the goal.
        let out = step(35, 2);
        assert_eq!(out.next_state, StateId(47));
        assert_eq!(out.reward, -1.0);
        assert!(out.terminated);
        assert!(!out.events.fell_off_cliff);
    }

    #[test]
    fn border_moves_stay_in_place() {
        let out = step(0, 0);
        assert_eq!(out.next_state, StateId(0));
        assert_eq!(out.reward, -1.0);
        let out = step(0, 3);
        assert_eq!(out.next_state, StateId(0));
    }

    #[test]
    fn stepping_from_goal_is_rejected() {
        assert_eq!(
            CliffWalking.step(StateId(47), ActionId(0)),
            Err(EnvError::TerminalState(StateId(47)))
        );
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        assert!(matches!(
            CliffWalking.step(StateId(48), ActionId(0)),
            Err(EnvError::InvalidState { .. })
        ));
        assert!(matches!(
            CliffWalking.step(StateId(0), ActionId(4)),
            Err(EnvError::InvalidAction { .. })
        ));
    }

    #[test]
    fn rewards_closed_over_reachable_pairs() {
        // Every non-terminal (s,a) yields -1 or -100, and -100 exactly on falls.
        for s in 0..48 {
            if s == 47 {
                continue;
            }
            for a in 0..4 {
                let out = step(s, a);
                if out.events.fell_off_cliff {
                    assert_eq!(out.reward, -100.0);
                    assert_eq!(out.next_state, StateId(36));
                } else {
                    assert_eq!(out.reward, -1.0);
                }
                assert!(!is_cliff(out.next_state.0));
            }
        }
    }
}
