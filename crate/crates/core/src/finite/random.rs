//! Seeded random tabular instances for the property suites.

use num::Zero;

use super::{q, FinitePomdp, Q};
use crate::rng::RngStream;

/// Offsets the stream id so shape and table draws never share a stream.
const SHAPE_STREAM: u64 = 0x0053_4841_5045;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub states: usize,
    pub actions: usize,
    pub obs: usize,
    pub rewards: usize,
    pub horizon: usize,
    /// One table layer for all steps instead of one per step.
    pub stationary: bool,
}

impl Shape {
    /// `|S|, |Z| <= 3`, `|A|, |R| <= 2`, horizon `<= 3`, chosen from the seed.
    pub fn small(seed: u64) -> Shape {
        let mut rng = RngStream::new(seed, SHAPE_STREAM);
        Shape {
            states: 1 + rng.below(3),
            actions: 1 + rng.below(2),
            obs: 1 + rng.below(3),
            rewards: 1 + rng.below(2),
            horizon: 1 + rng.below(3),
            stationary: rng.below(2) == 0,
        }
    }
}

/// Reward support values, distinct.
const REWARD_VALUES: [(i64, i64); 4] = [(0, 1), (1, 1), (1, 2), (-1, 1)];

/// A random distribution over `n` outcomes with weights in `0..=3`, roughly 40% zeros,
/// never all zero.
pub fn random_distribution(rng: &mut RngStream, n: usize) -> Vec<Q> {
    let mut w: Vec<i64> = (0..n).map(|_| [0, 0, 1, 2, 3][rng.below(5)]).collect();
    if w.iter().all(|&x| x == 0) {
        w[rng.below(n)] = 1;
    }
    let total: i64 = w.iter().sum();
    w.into_iter().map(|x| if x == 0 { Q::zero() } else { q(x, total) }).collect()
}

fn reward_support(n: usize) -> Vec<Q> {
    REWARD_VALUES[..n].iter().map(|&(a, b)| q(a, b)).collect()
}

fn transition_layers(
    rng: &mut RngStream,
    layers: usize,
    states: usize,
    actions: usize,
    rewards: usize,
) -> Vec<Vec<Vec<Vec<Q>>>> {
    (0..layers)
        .map(|_| {
            (0..states).map(|_| (0..actions).map(|_| random_distribution(rng, states * rewards)).collect()).collect()
        })
        .collect()
}

pub fn random_pomdp(seed: u64, shape: &Shape) -> FinitePomdp {
    let mut rng = RngStream::new(seed, 0);
    let t_layers = if shape.stationary { 1 } else { shape.horizon.max(1) };
    let o_layers = if shape.stationary { 1 } else { shape.horizon + 1 };
    let rho0 = random_distribution(&mut rng, shape.states);
    let transitions = transition_layers(&mut rng, t_layers, shape.states, shape.actions, shape.rewards);
    let observations =
        (0..o_layers).map(|_| (0..shape.states).map(|_| random_distribution(&mut rng, shape.obs)).collect()).collect();
    FinitePomdp::new(
        shape.states,
        shape.actions,
        shape.obs,
        rho0,
        reward_support(shape.rewards),
        transitions,
        observations,
        shape.horizon,
    )
    .expect("generated tables are valid")
}

pub fn random_mdp(
    seed: u64,
    states: usize,
    actions: usize,
    rewards: usize,
    horizon: usize,
    stationary: bool,
) -> FinitePomdp {
    let mut rng = RngStream::new(seed, 1);
    let layers = if stationary { 1 } else { horizon.max(1) };
    let rho0 = random_distribution(&mut rng, states);
    let transitions = transition_layers(&mut rng, layers, states, actions, rewards);
    FinitePomdp::mdp(states, actions, rho0, reward_support(rewards), transitions, horizon)
        .expect("generated tables are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::One;

    #[test]
    fn distributions_are_normalized() {
        let mut rng = RngStream::new(1, 1);
        for n in 1..6 {
            for _ in 0..50 {
                let d = random_distribution(&mut rng, n);
                assert!(d.iter().sum::<Q>().is_one());
            }
        }
    }

    #[test]
    fn shapes_respect_bounds() {
        for seed in 0..200 {
            let s = Shape::small(seed);
            assert!((1..=3).contains(&s.states) && (1..=3).contains(&s.obs));
            assert!((1..=2).contains(&s.actions) && (1..=2).contains(&s.rewards));
            assert!((1..=3).contains(&s.horizon));
        }
        assert_eq!(random_pomdp(4, &Shape::small(4)), random_pomdp(4, &Shape::small(4)));
    }
}
