//! Three-state "cake" MDP: a two-step chain where the rewarded action is
//! "cake" at the first state and "no cake" at the second, used to show how
//! reward-based metrics and the policy similarity metric disagree.

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// States: s0 (start), s1, s2 (terminal). Actions: a0, a1.
/// From s0, a0 pays `r` and moves to s1; a1 pays 0 and jumps to s2.
/// From s1, a1 pays `r` and moves to s2; a0 pays 0 and moves to s2.
/// s2 is absorbing with zero reward.
pub fn cake_mdp(r: f64, gamma: f64) -> Result<TabularMdp> {
    if r <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "reward must be positive, got {r}"
        )));
    }
    let reward = vec![
        r, 0.0, // s0: a0 pays r, a1 pays 0
        0.0, r, // s1: a0 pays 0, a1 pays r
        0.0, 0.0, // s2 terminal
    ];
    let transition = vec![
        0.0, 1.0, 0.0, // s0, a0 -> s1
        0.0, 0.0, 1.0, // s0, a1 -> s2
        0.0, 0.0, 1.0, // s1, a0 -> s2
        0.0, 0.0, 1.0, // s1, a1 -> s2
        0.0, 0.0, 1.0, // s2, a0 -> s2
        0.0, 0.0, 1.0, // s2, a1 -> s2
    ];
    TabularMdp::new(
        3,
        2,
        reward,
        transition,
        gamma,
        vec![false, false, true],
        vec![0],
    )
}
