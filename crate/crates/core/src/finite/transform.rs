//! Finite versions of the history wrappers: the HDP seen through a modular state
//! convolution, and the HDP whose rewards are delayed.

use std::collections::BTreeMap;

use num::{One, Zero};

use super::{FiniteHdp, FinitePomdp, HistoryKey, Q};
use crate::error::{Error, Result};
use crate::wrappers::{convolve_state, ConvolutionKernel, Sequence, Value};

fn require_mdp(mdp: &FinitePomdp) -> Result<()> {
    if mdp.is_fully_observed() {
        Ok(())
    } else {
        Err(Error::MalformedProcess("history wrappers need a fully observed process".into()))
    }
}

/// Visits every history `(s_{0:t}, a_{0:t})`, `t < horizon`, whose state path has
/// positive probability.
fn for_each_reachable(mdp: &FinitePomdp, mut visit: impl FnMut(&[usize], &[usize]) -> Result<()>) -> Result<()> {
    fn walk(
        mdp: &FinitePomdp,
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], &[usize]) -> Result<()>,
    ) -> Result<()> {
        let t = states.len() - 1;
        for a in 0..mdp.n_actions {
            actions.push(a);
            visit(states, actions)?;
            if t + 1 < mdp.horizon {
                for next in 0..mdp.n_states {
                    if !mdp.next_state_prob(t, states[t], a, next).is_zero() {
                        states.push(next);
                        walk(mdp, states, actions, visit)?;
                        states.pop();
                    }
                }
            }
            actions.pop();
        }
        Ok(())
    }
    for s0 in 0..mdp.n_states {
        if !mdp.rho0[s0].is_zero() && mdp.horizon > 0 {
            walk(mdp, &mut vec![s0], &mut Vec::new(), &mut visit)?;
        }
    }
    Ok(())
}

fn conv_obs(kernel: &ConvolutionKernel, states: &[usize]) -> Result<usize> {
    let seq = Sequence::Modular(states.iter().map(|&s| s as u64).collect());
    match convolve_state(kernel, &seq)? {
        Value::Modular(z) => Ok(z as usize),
        Value::Real(_) => Err(Error::ArithmeticModeMismatch),
    }
}

/// The HDP whose observations are `z_t = sum_i w_i s_{t-i} mod N` of the MDP states.
/// Requires a modular kernel with `N = |S|`.
pub fn has_induced_hdp(mdp: &FinitePomdp, kernel: &ConvolutionKernel) -> Result<FiniteHdp> {
    require_mdp(mdp)?;
    match kernel {
        ConvolutionKernel::Modular { modulus, .. } if *modulus as usize == mdp.n_states => {}
        ConvolutionKernel::Modular { modulus, .. } => {
            return Err(Error::WrapperIncompatible(format!("modulus {modulus} differs from {} states", mdp.n_states)))
        }
        ConvolutionKernel::Real(_) => return Err(Error::ArithmeticModeMismatch),
    }
    let (n, n_r) = (mdp.n_states, mdp.n_rewards());
    let mut rho0 = vec![Q::zero(); n];
    for s in 0..n {
        rho0[conv_obs(kernel, &[s])?] += &mdp.rho0[s];
    }
    let mut hdp = FiniteHdp::new(n, mdp.n_actions, rho0, mdp.rewards.clone(), mdp.horizon)?;
    for_each_reachable(mdp, |states, actions| {
        let t = states.len() - 1;
        let obs = (1..=states.len()).map(|len| conv_obs(kernel, &states[..len])).collect::<Result<Vec<_>>>()?;
        let mut row = vec![Q::zero(); n * n_r];
        let mut path = states.to_vec();
        for next in 0..n {
            path.push(next);
            let z = conv_obs(kernel, &path)?;
            path.pop();
            for r in 0..n_r {
                row[z * n_r + r] += mdp.transition(t, states[t], actions[t], next, r);
            }
        }
        hdp.insert(HistoryKey::new(obs, actions.to_vec()), row)
    })?;
    Ok(hdp)
}

type ValueDist = BTreeMap<Q, Q>;

fn add_into(dist: &mut ValueDist, value: Q, p: Q) {
    if !p.is_zero() {
        *dist.entry(value).or_insert_with(Q::zero) += p;
    }
}

/// Law of `r_τ / scale` given `s_τ, a_τ, s_{τ+1}`.
fn reward_posterior(mdp: &FinitePomdp, tau: usize, s: usize, a: usize, next: usize, scale: &Q) -> ValueDist {
    let norm = mdp.next_state_prob(tau, s, a, next);
    let mut d = ValueDist::new();
    for r in 0..mdp.n_rewards() {
        add_into(&mut d, &mdp.rewards[r] / scale, mdp.transition(tau, s, a, next, r) / &norm);
    }
    d
}

fn convolve_dists(a: &ValueDist, b: &ValueDist) -> ValueDist {
    let mut out = ValueDist::new();
    for (x, px) in a {
        for (y, py) in b {
            add_into(&mut out, x + y, px * py);
        }
    }
    out
}

/// The reward-delayed HDP of an MDP: same observation dynamics; `r'_t = 0` for `t < k`,
/// `r'_t = r_{t-k} / γ^k` up to `T - 2`, and the last step pays
/// `sum_{i=0..=k} r_{T-1-i} / γ^i`.
///
/// Each row is the one-step conditional law of `(z', r'_t)` given the history; the delayed
/// reward is a function of past transitions, so its law comes from their reward
/// posteriors.
pub fn delayed_hdp(mdp: &FinitePomdp, k: usize, gamma: &Q) -> Result<FiniteHdp> {
    require_mdp(mdp)?;
    let horizon = mdp.horizon;
    if k >= horizon {
        return Err(Error::DelayExceedsHorizon { delay: k, horizon });
    }
    if !(gamma > &Q::zero() && gamma <= &Q::one()) {
        return Err(Error::InvalidSpec("gamma not in (0, 1]".into()));
    }
    let n = mdp.n_states;
    let pow = |i: usize| (0..i).fold(Q::one(), |acc, _| acc * gamma);
    let mut rows: Vec<(HistoryKey, BTreeMap<(usize, Q), Q>)> = Vec::new();
    for_each_reachable(mdp, |states, actions| {
        let t = states.len() - 1;
        let (s, a) = (states[t], actions[t]);
        let mut row: BTreeMap<(usize, Q), Q> = BTreeMap::new();
        let mut put = |z: usize, v: Q, p: Q| {
            if !p.is_zero() {
                *row.entry((z, v)).or_insert_with(Q::zero) += p;
            }
        };
        if k == 0 {
            for next in 0..n {
                for r in 0..mdp.n_rewards() {
                    put(next, mdp.rewards[r].clone(), mdp.transition(t, s, a, next, r).clone());
                }
            }
        } else if t + 1 == horizon {
            let mut owed = ValueDist::from([(Q::zero(), Q::one())]);
            for i in 1..=k {
                let tau = t - i;
                let d = reward_posterior(mdp, tau, states[tau], actions[tau], states[tau + 1], &pow(i));
                owed = convolve_dists(&owed, &d);
            }
            for next in 0..n {
                for r in 0..mdp.n_rewards() {
                    let p = mdp.transition(t, s, a, next, r);
                    for (u, pu) in &owed {
                        put(next, &mdp.rewards[r] + u, p * pu);
                    }
                }
            }
        } else if t < k {
            for next in 0..n {
                put(next, Q::zero(), mdp.next_state_prob(t, s, a, next));
            }
        } else {
            let tau = t - k;
            let d = reward_posterior(mdp, tau, states[tau], actions[tau], states[tau + 1], &pow(k));
            for next in 0..n {
                let p_next = mdp.next_state_prob(t, s, a, next);
                for (v, pv) in &d {
                    put(next, v.clone(), &p_next * pv);
                }
            }
        }
        rows.push((HistoryKey::new(states.to_vec(), actions.to_vec()), row));
        Ok(())
    })?;
    let mut support: Vec<Q> = rows.iter().flat_map(|(_, row)| row.keys().map(|(_, v)| v.clone())).collect();
    support.sort();
    support.dedup();
    if support.is_empty() {
        support.push(Q::zero());
    }
    let n_r = support.len();
    let mut hdp = FiniteHdp::new(n, mdp.n_actions, mdp.rho0.clone(), support.clone(), horizon)?;
    for (key, row) in rows {
        let mut dense = vec![Q::zero(); n * n_r];
        for ((z, v), p) in row {
            let r = support.binary_search(&v).expect("value collected above");
            dense[z * n_r + r] = p;
        }
        hdp.insert(key, dense)?;
    }
    Ok(hdp)
}

#[cfg(test)]
mod tests {
    use super::super::{
        enumerate_distribution, equivalent_hdp, fixtures, q, random, DeterministicPolicy, History, Process,
    };
    use super::*;

    #[test]
    fn identity_kernel_reproduces_the_mdp() {
        let m = random::random_mdp(2, 3, 2, 2, 3, false);
        let id = ConvolutionKernel::modular(vec![1], 3).unwrap();
        assert_eq!(has_induced_hdp(&m, &id).unwrap(), equivalent_hdp(&m).unwrap());
    }

    #[test]
    fn modulus_must_match_state_count() {
        let m = random::random_mdp(2, 3, 2, 2, 3, false);
        let k = ConvolutionKernel::modular(vec![1, 1], 5).unwrap();
        assert!(matches!(has_induced_hdp(&m, &k), Err(Error::WrapperIncompatible(_))));
    }

    #[test]
    fn zero_delay_is_the_mdp() {
        let m = random::random_mdp(7, 2, 2, 2, 3, true);
        let d = delayed_hdp(&m, 0, &q(9, 10)).unwrap();
        let e = equivalent_hdp(&m).unwrap();
        // supports may be ordered differently; compare expected rewards per history
        for ((k1, r1), (k2, r2)) in d.entries().zip(e.entries()) {
            assert_eq!(k1, k2);
            assert_eq!(d.observation_marginal(r1), e.observation_marginal(r2));
        }
    }

    /// Expected discounted return of an open-loop action sequence, by enumeration.
    fn open_loop_return(h: &FiniteHdp, plan: &[usize], gamma: &Q) -> Q {
        let policy = DeterministicPolicy(|hist: &History| plan[hist.t()]);
        let d = enumerate_distribution(Process::Hdp(h), &policy).unwrap();
        d.probs
            .iter()
            .map(|(hist, p)| {
                let ret: Q = hist
                    .rewards
                    .iter()
                    .enumerate()
                    .map(|(t, &r)| (0..t).fold(Q::one(), |acc, _| acc * gamma) * &h.rewards[r])
                    .sum();
                p * ret
            })
            .sum()
    }

    #[test]
    fn delay_keeps_observation_law_and_expected_return() {
        for seed in 0..10 {
            let m = random::random_mdp(seed, 2 + (seed as usize % 2), 2, 2, 3, seed % 2 == 0);
            let base = equivalent_hdp(&m).unwrap();
            for k in 0..3 {
                for gamma in [q(1, 1), q(1, 2)] {
                    let d = delayed_hdp(&m, k, &gamma).unwrap();
                    assert_eq!(d.len(), base.len());
                    for ((k1, r1), (k2, r2)) in d.entries().zip(base.entries()) {
                        assert_eq!(k1, k2);
                        assert_eq!(d.observation_marginal(r1), base.observation_marginal(r2));
                    }
                    for plan in super::super::all_sequences(2, 3) {
                        assert_eq!(open_loop_return(&d, &plan, &gamma), open_loop_return(&base, &plan, &gamma));
                    }
                }
            }
        }
    }

    #[test]
    fn delay_must_fit() {
        let m = fixtures::self_loop_mdp(3);
        assert!(matches!(delayed_hdp(&m, 3, &q(1, 1)), Err(Error::DelayExceedsHorizon { .. })));
    }
}
