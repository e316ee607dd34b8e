//! Pinned benchmark environments.
//!
//! The tabular instances are small diagnostic MDPs with fully documented
//! parameters; each also ships as a text file under `data/` (parsed and
//! compared against the constructor in tests, and regenerable with
//! `cargo run -p qreps --example dump_envs`). All tabular constructors
//! default to discount 1 (fixed-horizon episodic); use
//! [`TabularMdp::with_discount`] for discounted variants.

use crate::mdp::{MdpError, TabularMdp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Names of the tabular instances, in canonical order.
pub const TABULAR_ENV_NAMES: [&str; 7] = [
    "two-state-stochastic",
    "two-state-deterministic",
    "single-chain",
    "double-chain",
    "river-swim",
    "wide-tree",
    "windy-gridworld",
];

/// Looks up a tabular instance by its canonical name.
pub fn by_name(name: &str) -> Option<TabularMdp> {
    match name {
        "two-state-stochastic" => Some(two_state_stochastic()),
        "two-state-deterministic" => Some(two_state_deterministic()),
        "single-chain" => Some(single_chain()),
        "double-chain" => Some(double_chain()),
        "river-swim" => Some(river_swim()),
        "wide-tree" => Some(wide_tree()),
        "windy-gridworld" => Some(windy_gridworld()),
        _ => None,
    }
}

/// The serialized copy of a named instance shipped with the crate.
pub fn data_file(name: &str) -> Option<&'static str> {
    match name {
        "two-state-stochastic" => Some(include_str!("../data/two_state_stochastic.mdp")),
        "two-state-deterministic" => Some(include_str!("../data/two_state_deterministic.mdp")),
        "single-chain" => Some(include_str!("../data/single_chain.mdp")),
        "double-chain" => Some(include_str!("../data/double_chain.mdp")),
        "river-swim" => Some(include_str!("../data/river_swim.mdp")),
        "wide-tree" => Some(include_str!("../data/wide_tree.mdp")),
        "windy-gridworld" => Some(include_str!("../data/windy_gridworld.mdp")),
        _ => None,
    }
}

/// Loads a named instance from its shipped data file.
pub fn from_data_file(name: &str) -> Result<TabularMdp, MdpError> {
    let text = data_file(name)
        .ok_or_else(|| MdpError::Parse(format!("unknown environment {name:?}")))?;
    TabularMdp::from_text(text)
}

fn build(
    n_states: usize,
    n_actions: usize,
    fill: impl Fn(&mut dyn FnMut(usize, usize, usize, f64), &mut dyn FnMut(usize, usize, f64)),
    initial: usize,
) -> TabularMdp {
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    {
        let mut set_p = |x: usize, a: usize, y: usize, p: f64| {
            transition[(x * n_actions + a) * n_states + y] = p;
        };
        let mut set_r = |x: usize, a: usize, r: f64| {
            reward[x * n_actions + a] = r;
        };
        fill(&mut set_p, &mut set_r);
    }
    let mut nu = vec![0.0; n_states];
    nu[initial] = 1.0;
    TabularMdp::new(n_states, n_actions, transition, reward, 1.0, nu)
        .expect("pinned instance must validate")
}

/// Two states, one real choice. At x0, `stay` (action 0) pays 1 and stays;
/// `go` (action 1) pays 6 and moves to x1. Both actions at x1 pay −3 and
/// return to x0 or stay with probability ½ each. Start: x0. With discount
/// 0.9 the optimal policy is always-stay; without discounting, stay earns
/// average reward 1 while go earns 0 — but the noisy x1 transition makes
/// go irresistible to risk-seeking empirical losses.
pub fn two_state_stochastic() -> TabularMdp {
    build(
        2,
        2,
        |p, r| {
            p(0, 0, 0, 1.0);
            r(0, 0, 1.0);
            p(0, 1, 1, 1.0);
            r(0, 1, 6.0);
            for a in 0..2 {
                p(1, a, 0, 0.5);
                p(1, a, 1, 0.5);
                r(1, a, -3.0);
            }
        },
        0,
    )
}

/// Two states, deterministic transitions, distinct rewards. Staying at s0
/// pays 0.4; switching costs one zero-reward step but staying at s1 pays
/// 2.0 thereafter.
pub fn two_state_deterministic() -> TabularMdp {
    build(
        2,
        2,
        |p, r| {
            p(0, 0, 0, 1.0);
            r(0, 0, 0.4);
            p(0, 1, 1, 1.0);
            p(1, 0, 1, 1.0);
            r(1, 0, 2.0);
            p(1, 1, 0, 1.0);
        },
        0,
    )
}

/// Five-state chain. `advance` (action 0) moves right with probability 0.9
/// (slip: stay with 0.1) and pays 0.2 once the far end self-loops;
/// `reset` (action 1) jumps back to the start for an immediate 0.04.
pub fn single_chain() -> TabularMdp {
    build(
        5,
        2,
        |p, r| {
            for x in 0..5 {
                if x < 4 {
                    p(x, 0, x + 1, 0.9);
                    p(x, 0, x, 0.1);
                } else {
                    p(4, 0, 4, 1.0);
                    r(4, 0, 0.2);
                }
                p(x, 1, 0, 1.0);
                r(x, 1, 0.04);
            }
        },
        0,
    )
}

/// Nine states: a hub (state 0) joining two four-state chains (1–4 and
/// 5–8). At the hub, action 0 enters the first chain and action 1 the
/// second. Inside a chain, action 0 advances (0.9 success, 0.1 stay) and
/// the final states self-loop paying 2.0 (first chain) or 0.8 (second);
/// action 1 abandons the chain for the hub and an immediate 0.2.
pub fn double_chain() -> TabularMdp {
    build(
        9,
        2,
        |p, r| {
            p(0, 0, 1, 1.0);
            p(0, 1, 5, 1.0);
            for (chain_start, end_reward) in [(1usize, 2.0), (5usize, 0.8)] {
                for x in chain_start..chain_start + 4 {
                    if x < chain_start + 3 {
                        p(x, 0, x + 1, 0.9);
                        p(x, 0, x, 0.1);
                    } else {
                        p(x, 0, x, 1.0);
                        r(x, 0, end_reward);
                    }
                    p(x, 1, 0, 1.0);
                    r(x, 1, 0.2);
                }
            }
        },
        0,
    )
}

/// Six-state swim-upstream chain. Action 1 (`up`) fights the current:
/// from the bank it advances with 0.3 else stays; in the interior it
/// advances 0.3, holds 0.6, slips back 0.1; at the top it holds 0.6 /
/// slips 0.4 and pays 1.0. Action 0 (`down`) always succeeds and pays a
/// token 0.005 at the bank.
pub fn river_swim() -> TabularMdp {
    build(
        6,
        2,
        |p, r| {
            for x in 0..6 {
                p(x, 0, x.saturating_sub(1), 1.0);
                match x {
                    0 => {
                        p(0, 1, 1, 0.3);
                        p(0, 1, 0, 0.7);
                        r(0, 0, 0.005);
                    }
                    5 => {
                        p(5, 1, 5, 0.6);
                        p(5, 1, 4, 0.4);
                        r(5, 1, 1.0);
                    }
                    _ => {
                        p(x, 1, x + 1, 0.3);
                        p(x, 1, x, 0.6);
                        p(x, 1, x - 1, 0.1);
                    }
                }
            }
        },
        0,
    )
}

/// Rewards on the nine leaves of the depth-2, width-3 tree, indexed by
/// (child − 1)·3 + branch.
pub const WIDE_TREE_LEAF_REWARDS: [f64; 9] = [0.0, 0.9, 3.0, 0.3, 1.2, 0.6, 0.2, 0.8, 0.5];

/// Depth-2 ternary tree: the root (0) branches to three children (1–3),
/// each child to three leaves (4–12), all transitions deterministic and
/// selected by the action. Every leaf pays its fixed reward and returns
/// to the root, so an episode repeatedly descends the tree; the best
/// cycle collects 3.0 every third step.
pub fn wide_tree() -> TabularMdp {
    build(
        13,
        3,
        |p, r| {
            for a in 0..3 {
                p(0, a, 1 + a, 1.0);
                for c in 1..4usize {
                    p(c, a, 4 + (c - 1) * 3 + a, 1.0);
                }
                for leaf in 4..13usize {
                    p(leaf, a, 0, 1.0);
                    r(leaf, a, WIDE_TREE_LEAF_REWARDS[leaf - 4]);
                }
            }
        },
        0,
    )
}

/// Per-column upward wind strengths of the windy gridworld.
pub const WINDY_GRIDWORLD_WIND: [usize; 10] = [0, 0, 0, 1, 1, 1, 2, 2, 1, 0];
pub const WINDY_GRIDWORLD_ROWS: usize = 7;
pub const WINDY_GRIDWORLD_COLS: usize = 10;
/// Start cell (row 3, column 0) as a flat state index.
pub const WINDY_GRIDWORLD_START: usize = 3 * WINDY_GRIDWORLD_COLS;
/// Goal cell (row 3, column 7) as a flat state index.
pub const WINDY_GRIDWORLD_GOAL: usize = 3 * WINDY_GRIDWORLD_COLS + 7;

/// 7×10 gridworld with a column-dependent upward wind. Actions
/// up/down/left/right (0–3) move one cell; the wind of the departed
/// column then pushes the agent further up; all moves clamp at the
/// walls. The goal cell absorbs and pays 1 per step; everything else
/// pays nothing. The shortest start-to-goal path takes 15 moves.
pub fn windy_gridworld() -> TabularMdp {
    let rows = WINDY_GRIDWORLD_ROWS;
    let cols = WINDY_GRIDWORLD_COLS;
    build(
        rows * cols,
        4,
        |p, r| {
            for row in 0..rows {
                for col in 0..cols {
                    let x = row * cols + col;
                    for (a, (dr, dc)) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().enumerate()
                    {
                        if x == WINDY_GRIDWORLD_GOAL {
                            p(x, a, x, 1.0);
                            r(x, a, 1.0);
                            continue;
                        }
                        let wind = WINDY_GRIDWORLD_WIND[col] as i64;
                        let nr = (row as i64 + dr - wind).clamp(0, rows as i64 - 1) as usize;
                        let nc = (col as i64 + dc).clamp(0, cols as i64 - 1) as usize;
                        p(x, a, nr * cols + nc, 1.0);
                    }
                }
            }
        },
        WINDY_GRIDWORLD_START,
    )
}

/// An episodic simulator: a pure step function plus a stochastic reset.
pub trait EpisodicSimulator {
    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Draws an initial state.
    fn reset(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Applies an action: (next state, reward, terminal). Deterministic.
    fn step(&self, state: &[f64], action: usize) -> (Vec<f64>, f64, bool);
    /// Step cap per episode.
    fn horizon(&self) -> usize {
        200
    }
}

/// The classic cart-pole balancing task: Euler-integrated cart/pole
/// dynamics, ±10 N force, termination when the cart leaves ±2.4 or the
/// pole tips past 12°, reward 1 per step, 200-step episodes. State is
/// (cart position, cart velocity, pole angle, pole angular velocity),
/// reset uniformly from ±0.05.
#[derive(Debug, Clone, Copy, Default)]
pub struct CartPole;

impl CartPole {
    const GRAVITY: f64 = 9.8;
    const MASS_CART: f64 = 1.0;
    const MASS_POLE: f64 = 0.1;
    const TOTAL_MASS: f64 = Self::MASS_CART + Self::MASS_POLE;
    /// Half the pole length.
    const LENGTH: f64 = 0.5;
    const POLE_MASS_LENGTH: f64 = Self::MASS_POLE * Self::LENGTH;
    const FORCE_MAG: f64 = 10.0;
    const TAU: f64 = 0.02;
    const X_LIMIT: f64 = 2.4;
    const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
}

impl EpisodicSimulator for CartPole {
    fn state_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..4).map(|_| rng.gen_range(-0.05..0.05)).collect()
    }

    fn step(&self, state: &[f64], action: usize) -> (Vec<f64>, f64, bool) {
        let (x, x_dot, theta, theta_dot) = (state[0], state[1], state[2], state[3]);
        let force = if action == 1 { Self::FORCE_MAG } else { -Self::FORCE_MAG };
        let cos_theta = theta.cos();
        let sin_theta = theta.sin();
        let temp =
            (force + Self::POLE_MASS_LENGTH * theta_dot * theta_dot * sin_theta) / Self::TOTAL_MASS;
        let theta_acc = (Self::GRAVITY * sin_theta - cos_theta * temp)
            / (Self::LENGTH * (4.0 / 3.0 - Self::MASS_POLE * cos_theta * cos_theta / Self::TOTAL_MASS));
        let x_acc = temp - Self::POLE_MASS_LENGTH * theta_acc * cos_theta / Self::TOTAL_MASS;
        let next = vec![
            x + Self::TAU * x_dot,
            x_dot + Self::TAU * x_acc,
            theta + Self::TAU * theta_dot,
            theta_dot + Self::TAU * theta_acc,
        ];
        let terminal = next[0].abs() > Self::X_LIMIT || next[2].abs() > Self::THETA_LIMIT;
        (next, 1.0, terminal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::optimal_return_horizon;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use std::collections::VecDeque;

    #[test]
    fn two_state_stochastic_matches_its_pinned_parameters() {
        let mdp = two_state_stochastic();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (2, 2));
        assert_eq!(mdp.r(0, 0), 1.0);
        assert_eq!(mdp.r(0, 1), 6.0);
        assert_eq!(mdp.r(1, 0), -3.0);
        assert_eq!(mdp.r(1, 1), -3.0);
        assert_eq!(mdp.p(0, 0, 0), 1.0);
        assert_eq!(mdp.p(0, 1, 1), 1.0);
        assert_eq!(mdp.p(1, 0, 0), 0.5);
        assert_eq!(mdp.p(1, 1, 1), 0.5);
        assert_eq!(mdp.initial_dist(), &[1.0, 0.0]);
    }

    #[test]
    fn all_instances_validate_and_load_by_name() {
        for name in TABULAR_ENV_NAMES {
            let mdp = by_name(name).expect(name);
            assert!(mdp.validate().is_ok(), "{name} failed validation");
            assert_eq!(mdp.discount(), 1.0, "{name} must default to discount 1");
        }
        assert!(by_name("no-such-env").is_none());
    }

    #[test]
    fn data_files_match_constructors() {
        for name in TABULAR_ENV_NAMES {
            let from_file = from_data_file(name).unwrap_or_else(|e| {
                panic!("data file for {name} failed to parse: {e}; regenerate with `cargo run -p qreps --example dump_envs`")
            });
            assert_eq!(from_file, by_name(name).unwrap(), "{name} data file is stale");
        }
    }

    /// Breadth-first search over the deterministic transition graph.
    fn shortest_path_len(mdp: &TabularMdp, start: usize, goal: usize) -> usize {
        let mut dist = vec![usize::MAX; mdp.n_states()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            if x == goal {
                return dist[x];
            }
            for a in 0..mdp.n_actions() {
                let row = mdp.transition_row(x, a);
                let next = row.iter().position(|&p| p == 1.0).expect("deterministic");
                if dist[next] == usize::MAX {
                    dist[next] = dist[x] + 1;
                    queue.push_back(next);
                }
            }
        }
        unreachable!("goal not reachable")
    }

    #[test]
    fn windy_gridworld_shortest_path_is_fifteen_moves() {
        let mdp = windy_gridworld();
        assert_eq!(
            shortest_path_len(&mdp, WINDY_GRIDWORLD_START, WINDY_GRIDWORLD_GOAL),
            15
        );
    }

    #[test]
    fn windy_gridworld_optimal_average_return_reflects_the_short_path() {
        let (ret, _) = optimal_return_horizon(&windy_gridworld(), 200).unwrap();
        assert_relative_eq!(ret, 185.0 / 200.0, epsilon = 1e-12);
    }

    #[test]
    fn wide_tree_best_cycle_averages_one() {
        let (ret, policy) = optimal_return_horizon(&wide_tree(), 200).unwrap();
        // Cycle root → child 1 → leaf 6 collects 3.0 per three steps, and the
        // 200-step horizon cuts the last cycle short by two zero-reward steps.
        assert_relative_eq!(ret, (66.0 * 3.0) / 200.0, epsilon = 1e-12);
        assert_eq!(policy.prob(0, 0), 1.0);
        assert_eq!(policy.prob(1, 2), 1.0);
    }

    #[test]
    fn chain_optima_prefer_the_long_road() {
        let (_, single) = optimal_return_horizon(&single_chain(), 200).unwrap();
        for x in 0..5 {
            assert_eq!(single.prob(x, 0), 1.0, "advance is optimal at {x}");
        }
        let (_, double) = optimal_return_horizon(&double_chain(), 200).unwrap();
        assert_eq!(double.prob(0, 0), 1.0, "the richer first chain wins at the hub");
        for x in 1..5 {
            assert_eq!(double.prob(x, 0), 1.0);
        }
    }

    #[test]
    fn cart_pole_balances_under_a_lean_following_controller() {
        // Pushing toward the side the pole leans to is the classic
        // hand-built stabilizer; it should hold the pole up for the whole
        // episode, while blind alternation falls within a few dozen steps.
        let sim = CartPole;
        let mut state = vec![0.0, 0.0, 0.01, 0.0];
        let mut steps = 0;
        for t in 0..200 {
            let action = if state[2] + state[3] > 0.0 { 1 } else { 0 };
            let (next, reward, terminal) = sim.step(&state, action);
            assert_eq!(reward, 1.0);
            state = next;
            steps = t + 1;
            if terminal {
                break;
            }
        }
        assert!(steps >= 150, "controller fell after {steps} steps");

        let mut state = vec![0.0; 4];
        let mut alternating = 0;
        for t in 0..200 {
            let (next, _, terminal) = sim.step(&state, t % 2);
            state = next;
            alternating = t + 1;
            if terminal {
                break;
            }
        }
        assert!(alternating >= 10 && alternating < 150, "alternating lasted {alternating}");
    }

    #[test]
    fn cart_pole_constant_force_eventually_terminates() {
        let sim = CartPole;
        let mut state = vec![0.0; 4];
        let mut terminated = false;
        for _ in 0..200 {
            let (next, _, terminal) = sim.step(&state, 1);
            state = next;
            if terminal {
                terminated = true;
                break;
            }
        }
        assert!(terminated, "pushing one way forever must tip the pole");
        assert!(state[2].abs() > 12.0 * std::f64::consts::PI / 180.0 || state[0].abs() > 2.4);
    }

    #[test]
    fn cart_pole_reset_stays_near_the_origin() {
        let sim = CartPole;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let s = sim.reset(&mut rng);
            assert_eq!(s.len(), 4);
            assert!(s.iter().all(|v| v.abs() < 0.05));
        }
    }
}
