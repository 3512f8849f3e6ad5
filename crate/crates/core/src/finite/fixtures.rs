//! Small hand-built processes with known answers.

use num::{One, Zero};

use super::{q_int, FinitePomdp, Q};

fn det_row(states: usize, next: usize) -> Vec<Q> {
    (0..states).map(|s| if s == next { Q::one() } else { Q::zero() }).collect()
}

/// Two states, actions `a = 0` and `b = 1`, start in state 0. From state 0, `a` stays and
/// `b` moves to state 1; state 1 is absorbing. All rewards are 0, horizon 3.
///
/// For the history `z = (0, 1, 1)`, `a = (b, b, b)` every nonempty subset of `{0, 1, 2}`
/// pins down the next state.
pub fn two_state_multiple_mds() -> FinitePomdp {
    let layer = vec![vec![det_row(2, 0), det_row(2, 1)], vec![det_row(2, 1), det_row(2, 1)]];
    FinitePomdp::mdp(2, 2, vec![Q::one(), Q::zero()], vec![Q::zero()], vec![layer], 3).expect("fixture is valid")
}

/// The history `(z_{0:2}, a_{0:2})` used with [`two_state_multiple_mds`].
pub fn two_state_history() -> (Vec<usize>, Vec<usize>) {
    (vec![0, 1, 1], vec![1, 1, 1])
}

/// Two states and two actions; action `s` in state `s` stays and pays 1, the other action
/// switches state and pays 0. Rewards `{0, 1}`; row index is `s' * 2 + r`.
pub fn self_loop_mdp(horizon: usize) -> FinitePomdp {
    let row = |next: usize, r: usize| {
        let mut v = vec![Q::zero(); 4];
        v[next * 2 + r] = Q::one();
        v
    };
    let layer = vec![vec![row(0, 1), row(1, 0)], vec![row(0, 0), row(1, 1)]];
    FinitePomdp::mdp(2, 2, vec![Q::one(), Q::zero()], vec![q_int(0), q_int(1)], vec![layer], horizon)
        .expect("fixture is valid")
}
