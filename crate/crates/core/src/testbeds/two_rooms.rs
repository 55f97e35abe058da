use rand::Rng;

use super::{ContinuingEnv, Dynamics, EnvId, Outcome};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

const SIDE: usize = 5;
const ROOM: usize = SIDE * SIDE;
/// The single cell joining the rooms, at row 2 between them.
pub const HALLWAY: usize = ROOM;
/// Bottom-right corner of the second room.
pub const GOAL: usize = 2 * ROOM;
const N: usize = 2 * ROOM + 1;
const HALL_ROW: usize = 2;

/// Two 5x5 rooms joined by one hallway cell. Entering the goal pays 1; the
/// next action from the goal teleports to a uniformly random non-goal cell.
pub struct TwoRooms;

impl TwoRooms {
    pub const N_STATES: usize = N;

    /// Grid coordinates `(row, col)`; columns 0-4 are room 1, column 5 the
    /// hallway, 6-10 room 2.
    pub fn coords(s: usize) -> (usize, usize) {
        if s < ROOM {
            (s / SIDE, s % SIDE)
        } else if s == HALLWAY {
            (HALL_ROW, SIDE)
        } else {
            let k = s - ROOM - 1;
            (k / SIDE, SIDE + 1 + k % SIDE)
        }
    }

    pub fn cell(row: usize, col: usize) -> Option<usize> {
        if row >= SIDE {
            return None;
        }
        match col {
            c if c < SIDE => Some(row * SIDE + c),
            c if c == SIDE => (row == HALL_ROW).then_some(HALLWAY),
            c if c <= 2 * SIDE => Some(ROOM + 1 + row * SIDE + (c - SIDE - 1)),
            _ => None,
        }
    }

    pub fn in_room1(s: usize) -> bool {
        s < ROOM
    }

    fn moved(s: usize, a: usize) -> usize {
        let (r, c) = Self::coords(s);
        let target = match a {
            UP => r.checked_sub(1).and_then(|r| Self::cell(r, c)),
            DOWN => Self::cell(r + 1, c),
            LEFT => c.checked_sub(1).and_then(|c| Self::cell(r, c)),
            _ => Self::cell(r, c + 1),
        };
        target.unwrap_or(s)
    }

    pub fn dynamics() -> Dynamics {
        let mut outcomes = vec![vec![Vec::new(); 4]; N];
        let teleport = 1.0 / (N - 1) as f64;
        for s in 0..N {
            for a in 0..4 {
                if s == GOAL {
                    outcomes[s][a] = (0..N)
                        .filter(|&t| t != GOAL)
                        .map(|t| Outcome {
                            next: t,
                            prob: teleport,
                            reward: 0.0,
                        })
                        .collect();
                } else {
                    let t = Self::moved(s, a);
                    outcomes[s][a].push(Outcome {
                        next: t,
                        prob: 1.0,
                        reward: if t == GOAL { 1.0 } else { 0.0 },
                    });
                }
            }
        }
        Dynamics {
            n_states: N,
            n_actions: 4,
            outcomes,
        }
    }

    pub fn build<R: Rng + ?Sized>(rng: &mut R) -> ContinuingEnv {
        let start = rng.random_range(0..N - 1);
        let params = vec![
            ("room_side".into(), SIDE.to_string()),
            ("hallway".into(), format!("({HALL_ROW},{SIDE})")),
            ("goal".into(), format!("({},{})", SIDE - 1, 2 * SIDE)),
            ("goal_reward".into(), "1".into()),
            ("continuing".into(), "teleport_uniform_non_goal".into()),
        ];
        ContinuingEnv::from_parts(EnvId::TwoRooms, Self::dynamics(), params, start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_round_trip() {
        for s in 0..N {
            let (r, c) = TwoRooms::coords(s);
            assert_eq!(TwoRooms::cell(r, c), Some(s));
        }
        assert_eq!(TwoRooms::coords(GOAL), (4, 10));
        assert_eq!(TwoRooms::cell(0, 5), None);
    }

    #[test]
    fn walls_bounce_and_hallway_connects() {
        assert_eq!(TwoRooms::moved(0, UP), 0);
        assert_eq!(TwoRooms::moved(0, LEFT), 0);
        assert_eq!(TwoRooms::moved(4, RIGHT), 4);
        assert_eq!(TwoRooms::moved(14, RIGHT), HALLWAY);
        assert_eq!(TwoRooms::moved(HALLWAY, UP), HALLWAY);
        assert_eq!(TwoRooms::moved(HALLWAY, RIGHT), TwoRooms::cell(2, 6).unwrap());
    }

    #[test]
    fn strongly_connected() {
        let d = TwoRooms::dynamics();
        for start in 0..N {
            let mut seen = vec![false; N];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(s) = stack.pop() {
                for a in 0..4 {
                    for o in &d.outcomes[s][a] {
                        if !seen[o.next] {
                            seen[o.next] = true;
                            stack.push(o.next);
                        }
                    }
                }
            }
            assert!(seen.iter().all(|&b| b), "not all reachable from {start}");
        }
    }

    #[test]
    fn goal_entry_pays_one() {
        let d = TwoRooms::dynamics();
        let above = TwoRooms::cell(3, 10).unwrap();
        assert_eq!(d.outcomes[above][DOWN][0].next, GOAL);
        assert_eq!(d.outcomes[above][DOWN][0].reward, 1.0);
        assert_eq!(d.outcomes[GOAL][UP].len(), N - 1);
    }
}
