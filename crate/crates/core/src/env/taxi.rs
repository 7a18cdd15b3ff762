//! Taxi: the classic 5x5 grid pickup-and-delivery task.
//!
//! A state encodes taxi position, passenger location, and destination:
//! `((row * 5 + col) * 5 + passenger) * 4 + destination`, 500 states total.
//! Passenger values 0..=3 mean "waiting at landmark i", 4 means "in the taxi".
//! Landmarks are R=(0,0), G=(0,4), Y=(4,0), B=(4,3).
//!
//! Actions: 0 = south, 1 = north, 2 = east, 3 = west, 4 = pickup,
//! 5 = dropoff. Moves cost -1 and clamp at borders and walls. Illegal pickup
//! or dropoff costs -10 and flags the step. Dropoff at the destination with
//! the passenger aboard pays +20 and terminates. Dropoff at a different
//! landmark deposits the passenger there for -1: the trip can resume later.

use rand::{Rng, RngCore};

use super::{ActionId, EnvError, Environment, StateId, StepEvents, StepOutcome};

const GRID: usize = 5;
const NUM_STATES: usize = 500;
const LANDMARKS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

/// Cells whose east edge is a wall; moving east from one of these (or west
/// into one of these from its right neighbour) is blocked.
const EAST_WALLS: [(usize, usize); 6] = [(0, 1), (1, 1), (3, 0), (3, 2), (4, 0), (4, 2)];

/// Decoded view of a taxi state, convenient for tests and table dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiSituation {
    pub row: usize,
    pub col: usize,
    /// 0..=3: waiting at that landmark; 4: in the taxi.
    pub passenger: usize,
    pub destination: usize,
}

pub struct Taxi;

impl Taxi {
    pub fn encode(sit: TaxiSituation) -> StateId {
        debug_assert!(sit.row < GRID && sit.col < GRID);
        debug_assert!(sit.passenger < 5 && sit.destination < 4);
        StateId(((sit.row * GRID + sit.col) * 5 + sit.passenger) * 4 + sit.destination)
    }

    pub fn decode(state: StateId) -> TaxiSituation {
        let StateId(s) = state;
        debug_assert!(s < NUM_STATES);
        TaxiSituation {
            destination: s % 4,
            passenger: (s / 4) % 5,
            col: (s / 20) % GRID,
            row: s / 100,
        }
    }
}

fn east_blocked(row: usize, col: usize) -> bool {
    EAST_WALLS.contains(&(row, col))
}

impl Environment for Taxi {
    fn num_states(&self) -> usize {
        NUM_STATES
    }

    fn num_actions(&self) -> usize {
        6
    }

    fn reset(&self, rng: &mut dyn RngCore) -> StateId {
        let row = rng.random_range(0..GRID);
        let col = rng.random_range(0..GRID);
        let passenger = rng.random_range(0..4usize);
        // Destination drawn from the three landmarks other than the
        // passenger's, keeping the start distribution uniform over the 300
        // states with a pending trip.
        let d = rng.random_range(0..3usize);
        let destination = d + usize::from(d >= passenger);
        Taxi::encode(TaxiSituation {
            row,
            col,
            passenger,
            destination,
        })
    }

    fn step(&self, state: StateId, action: ActionId) -> Result<StepOutcome, EnvError> {
        let StateId(s) = state;
        if s >= NUM_STATES {
            return Err(EnvError::InvalidState {
                state: s,
                num_states: NUM_STATES,
            });
        }
        let sit = Taxi::decode(state);
        if sit.passenger == sit.destination {
            return Err(EnvError::TerminalState(state));
        }
        let ActionId(a) = action;
        let ok = |sit: TaxiSituation, reward: f64, terminated: bool, events: StepEvents| {
            Ok(StepOutcome {
                next_state: Taxi::encode(sit),
                reward,
                terminated,
                events,
            })
        };
        match a {
            0 => ok(
                TaxiSituation {
                    row: (sit.row + 1).min(GRID - 1),
                    ..sit
                },
                -1.0,
                false,
                StepEvents::default(),
            ),
            1 => ok(
                TaxiSituation {
                    row: sit.row.saturating_sub(1),
                    ..sit
                },
                -1.0,
                false,
                StepEvents::default(),
            ),
            2 => {
                let col = if east_blocked(sit.row, sit.col) {
                    sit.col
                } else {
                    (sit.col + 1).min(GRID - 1)
                };
                ok(
                    TaxiSituation { col, ..sit },
                    -1.0,
                    false,
                    StepEvents::default(),
                )
            }
            3 => {
                let col = if sit.col > 0 && !east_blocked(sit.row, sit.col - 1) {
                    sit.col - 1
                } else {
                    sit.col
                };
                ok(
                    TaxiSituation { col, ..sit },
                    -1.0,
                    false,
                    StepEvents::default(),
                )
            }
            4 => {
                if sit.passenger < 4 && (sit.row, sit.col) == LANDMARKS[sit.passenger] {
                    ok(
                        TaxiSituation {
                            passenger: 4,
                            ..sit
                        },
                        -1.0,
                        false,
                        StepEvents::default(),
                    )
                } else {
                    ok(
                        sit,
                        -10.0,
                        false,
                        StepEvents {
                            illegal_action: true,
                            ..StepEvents::default()
                        },
                    )
                }
            }
            5 => {
                let here = (sit.row, sit.col);
                if sit.passenger == 4 && here == LANDMARKS[sit.destination] {
                    ok(
                        TaxiSituation {
                            passenger: sit.destination,
                            ..sit
                        },
                        20.0,
                        true,
                        StepEvents {
                            delivered: true,
                            ..StepEvents::default()
                        },
                    )
                } else if sit.passenger == 4 && LANDMARKS.contains(&here) {
                    let at = LANDMARKS.iter().position(|&lm| lm == here).unwrap();
                    ok(
                        TaxiSituation {
                            passenger: at,
                            ..sit
                        },
                        -1.0,
                        false,
                        StepEvents::default(),
                    )
                } else {
                    ok(
                        sit,
                        -10.0,
                        false,
                        StepEvents {
                            illegal_action: true,
                            ..StepEvents::default()
                        },
                    )
                }
            }
            _ => Err(EnvError::InvalidAction {
                action: a,
                num_actions: 6,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sit(row: usize, col: usize, passenger: usize, destination: usize) -> TaxiSituation {
        TaxiSituation {
            row,
            col,
            passenger,
            destination,
        }
    }

    fn step(s: TaxiSituation, a: usize) -> StepOutcome {
        Taxi.step(Taxi::encode(s), ActionId(a)).unwrap()
    }

    #[test]
    fn encode_examples() {
        assert_eq!(Taxi::encode(sit(0, 0, 0, 0)), StateId(0));
        assert_eq!(Taxi::encode(sit(0, 0, 0, 1)), StateId(1));
        assert_eq!(Taxi::encode(sit(4, 4, 4, 3)), StateId(499));
        assert_eq!(Taxi::encode(sit(2, 1, 3, 2)), StateId(234));
    }

    #[test]
    fn encode_decode_roundtrip_all_states() {
        for s in 0..500 {
            let d = Taxi::decode(StateId(s));
            assert_eq!(Taxi::encode(d), StateId(s));
            assert!(d.row < 5 && d.col < 5 && d.passenger < 5 && d.destination < 4);
        }
    }

    #[test]
    fn plain_moves_clamp_at_borders() {
        let out = step(sit(0, 0, 0, 1), 1);
        assert_eq!(Taxi::decode(out.next_state), sit(0, 0, 0, 1));
        assert_eq!(out.reward, -1.0);
        let out = step(sit(4, 4, 0, 1), 0);
        assert_eq!(Taxi::decode(out.next_state), sit(4, 4, 0, 1));
        let out = step(sit(2, 0, 0, 1), 0);
        assert_eq!(Taxi::decode(out.next_state), sit(3, 0, 0, 1));
    }

    #[test]
    fn walls_block_east_and_west() {
        // East from (0,1) is walled; west from (0,2) crosses the same edge.
        let out = step(sit(0, 1, 0, 1), 2);
        assert_eq!(Taxi::decode(out.next_state).col, 1);
        let out = step(sit(0, 2, 0, 1), 3);
        assert_eq!(Taxi::decode(out.next_state).col, 2);
        // (2,*) has no walls: east from (2,1) moves.
        let out = step(sit(2, 1, 0, 1), 2);
        assert_eq!(Taxi::decode(out.next_state).col, 2);
        // West from (3,1) into the (3,0) east wall is blocked.
        let out = step(sit(3, 1, 0, 1), 3);
        assert_eq!(Taxi::decode(out.next_state).col, 1);
    }

    #[test]
    fn pickup_at_passenger_landmark() {
        let out = step(sit(0, 0, 0, 1), 4);
        assert_eq!(Taxi::decode(out.next_state), sit(0, 0, 4, 1));
        assert_eq!(out.reward, -1.0);
        assert!(!out.events.illegal_action);
    }

    #[test]
    fn pickup_elsewhere_is_illegal() {
        let out = step(sit(0, 4, 0, 1), 4);
        assert_eq!(Taxi::decode(out.next_state), sit(0, 4, 0, 1));
        assert_eq!(out.reward, -10.0);
        assert!(out.events.illegal_action);
        // At a landmark but with the passenger already aboard.
        let out = step(sit(0, 0, 4, 1), 4);
        assert_eq!(out.reward, -10.0);
        assert!(out.events.illegal_action);
    }

    #[test]
    fn dropoff_at_destination_delivers() {
        let out = step(sit(0, 4, 4, 1), 5);
        assert_eq!(Taxi::decode(out.next_state), sit(0, 4, 1, 1));
        assert_eq!(out.reward, 20.0);
        assert!(out.terminated);
        assert!(out.events.delivered);
    }

    #[test]
    fn dropoff_at_other_landmark_deposits_passenger() {
        // Passenger aboard, destination G=(0,4), dropoff at R=(0,0): the
        // passenger waits at R and the trip continues.
        let out = step(sit(0, 0, 4, 1), 5);
        assert_eq!(Taxi::decode(out.next_state), sit(0, 0, 0, 1));
        assert_eq!(out.reward, -1.0);
        assert!(!out.terminated);
        assert!(!out.events.illegal_action);
    }

    #[test]
    fn dropoff_off_landmark_or_empty_is_illegal() {
        let out = step(sit(2, 2, 4, 1), 5);
        assert_eq!(Taxi::decode(out.next_state), sit(2, 2, 4, 1));
        assert_eq!(out.reward, -10.0);
        assert!(out.events.illegal_action);
        let out = step(sit(0, 4, 0, 1), 5);
        assert_eq!(out.reward, -10.0);
        assert!(out.events.illegal_action);
    }

    #[test]
    fn delivered_states_are_terminal() {
        assert_eq!(
            Taxi.step(Taxi::encode(sit(0, 4, 1, 1)), ActionId(0)),
            Err(EnvError::TerminalState(Taxi::encode(sit(0, 4, 1, 1))))
        );
    }

    #[test]
    fn reset_consumes_four_draws_and_never_starts_terminal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let s = Taxi.reset(&mut rng);
            let d = Taxi::decode(s);
            assert!(d.passenger < 4);
            assert_ne!(d.passenger, d.destination);
        }
    }

    #[test]
    fn reset_distribution_is_uniform_over_start_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 150_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(Taxi.reset(&mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 300);
        let expected = n as f64 / 300.0;
        let sd = (expected * (1.0 - 1.0 / 300.0)).sqrt();
        for (&s, &c) in &counts {
            assert!(
                (c as f64 - expected).abs() < 5.0 * sd,
                "state {s} count {c} deviates from {expected}"
            );
        }
    }

    #[test]
    fn rewards_closed_over_all_pairs() {
        for s in 0..500 {
            let d = Taxi::decode(StateId(s));
            if d.passenger == d.destination {
                continue;
            }
            for a in 0..6 {
                let out = Taxi.step(StateId(s), ActionId(a)).unwrap();
                assert!(
                    out.reward == -1.0 || out.reward == -10.0 || out.reward == 20.0,
                    "unexpected reward {} at state {s} action {a}",
                    out.reward
                );
                assert_eq!(out.reward == 20.0, out.terminated);
                assert_eq!(out.reward == -10.0, out.events.illegal_action);
            }
        }
    }
}
