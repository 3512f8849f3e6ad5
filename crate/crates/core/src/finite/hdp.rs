use std::collections::BTreeMap;

use num::Zero;

use super::{all_sequences, check_distribution, FinitePomdp, ENUMERATION_LIMIT, Q};
use crate::error::{Error, Result};

/// The observable part of a history: `z_{0:t}` and `a_{0:t}` (same length).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistoryKey {
    pub obs: Vec<usize>,
    pub actions: Vec<usize>,
}

impl HistoryKey {
    pub fn new(obs: Vec<usize>, actions: Vec<usize>) -> Self {
        debug_assert_eq!(obs.len(), actions.len());
        HistoryKey { obs, actions }
    }

    /// Index `t` of the last observation.
    pub fn t(&self) -> usize {
        self.obs.len() - 1
    }
}

/// A finite HDP: `T_t(z', r | z_{0:t}, a_{0:t})` stored per history. Histories
/// without an entry are unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHdp {
    pub n_obs: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub rho0: Vec<Q>,
    pub rewards: Vec<Q>,
    transitions: BTreeMap<HistoryKey, Vec<Q>>,
}

impl FiniteHdp {
    pub fn new(n_obs: usize, n_actions: usize, rho0: Vec<Q>, rewards: Vec<Q>, horizon: usize) -> Result<Self> {
        if rho0.len() != n_obs {
            return Err(Error::MalformedProcess(format!("rho0 has {} entries for {n_obs} observations", rho0.len())));
        }
        check_distribution(&rho0, || "rho0".into())?;
        Ok(FiniteHdp { n_obs, n_actions, horizon, rho0, rewards, transitions: BTreeMap::new() })
    }

    pub fn n_rewards(&self) -> usize {
        self.rewards.len()
    }

    /// Adds the row `T_t(. | key)` indexed by `z' * |R| + r`.
    pub fn insert(&mut self, key: HistoryKey, row: Vec<Q>) -> Result<()> {
        if key.obs.is_empty() || key.obs.len() != key.actions.len() || key.obs.len() > self.horizon {
            return Err(Error::MalformedProcess("history key shape".into()));
        }
        if key.obs.iter().any(|&z| z >= self.n_obs) || key.actions.iter().any(|&a| a >= self.n_actions) {
            return Err(Error::MalformedProcess("history key index out of range".into()));
        }
        if row.len() != self.n_obs * self.rewards.len() {
            return Err(Error::MalformedProcess(format!("row width {}", row.len())));
        }
        check_distribution(&row, || format!("T'{key:?}"))?;
        self.transitions.insert(key, row);
        Ok(())
    }

    pub fn transition(&self, obs: &[usize], actions: &[usize]) -> Option<&[Q]> {
        // avoid cloning into a key for lookups
        self.transitions.get(&HistoryKey { obs: obs.to_vec(), actions: actions.to_vec() }).map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&HistoryKey, &[Q])> {
        self.transitions.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// `sum_r T(z', r | .)` for each `z'`.
    pub fn observation_marginal(&self, row: &[Q]) -> Vec<Q> {
        row.chunks(self.rewards.len()).map(|c| c.iter().sum()).collect()
    }
}

/// `Φ_t(z_{0:t} | s_{0:t}, a_{0:t-1})`: the joint weight of an observation sequence and a
/// state path, `ρ_0(s_0) O_0(z_0|s_0) prod_τ O_{τ+1}(z_{τ+1}|s_{τ+1}) sum_r T_τ(s_{τ+1}, r|s_τ, a_τ)`.
/// Only `a_{0:t-1}` enters; `actions` may carry `a_t` as well.
pub fn phi(pomdp: &FinitePomdp, obs: &[usize], states: &[usize], actions: &[usize]) -> Result<Q> {
    let t = obs.len().checked_sub(1).ok_or_else(|| Error::IndexOutOfRange("empty history".into()))?;
    if states.len() != t + 1 || actions.len() < t {
        return Err(Error::IndexOutOfRange(format!(
            "phi needs t+1 states and t actions, got {} and {}",
            states.len(),
            actions.len()
        )));
    }
    if obs.iter().any(|&z| z >= pomdp.n_obs)
        || states.iter().any(|&s| s >= pomdp.n_states)
        || actions.iter().any(|&a| a >= pomdp.n_actions)
    {
        return Err(Error::IndexOutOfRange("phi index".into()));
    }
    let mut p = &pomdp.rho0[states[0]] * pomdp.observation(0, states[0], obs[0]);
    for tau in 0..t {
        if p.is_zero() {
            break;
        }
        p *= pomdp.observation(tau + 1, states[tau + 1], obs[tau + 1]);
        p *= pomdp.next_state_prob(tau, states[tau], actions[tau], states[tau + 1]);
    }
    Ok(p)
}

/// The HDP indistinguishable from `pomdp`: `ρ'_0(z) = sum_s ρ_0(s) O_0(z|s)` and
/// `T'_t(z', r | z_{0:t}, a_{0:t}) = sum_{s_{0:t+1}} T_t O_{t+1} Φ_t / sum_{s_{0:t}} Φ_t`.
pub fn equivalent_hdp(pomdp: &FinitePomdp) -> Result<FiniteHdp> {
    let (n_s, n_a, n_z, n_r) = (pomdp.n_states, pomdp.n_actions, pomdp.n_obs, pomdp.n_rewards());
    let mut total = 0usize;
    for t in 0..pomdp.horizon {
        let histories = super::bounded_pow(n_z * n_a, t + 1, ENUMERATION_LIMIT)
            .zip(super::bounded_pow(n_s, t + 1, ENUMERATION_LIMIT))
            .and_then(|(h, s)| h.checked_mul(s));
        total = match histories.and_then(|h| total.checked_add(h)) {
            Some(v) if v <= ENUMERATION_LIMIT * 10 => v,
            _ => return Err(Error::EnumerationTooLarge { limit: ENUMERATION_LIMIT * 10 }),
        };
    }
    let rho0: Vec<Q> = (0..n_z).map(|z| (0..n_s).map(|s| &pomdp.rho0[s] * pomdp.observation(0, s, z)).sum()).collect();
    let mut hdp = FiniteHdp::new(n_z, n_a, rho0, pomdp.rewards.clone(), pomdp.horizon)?;
    for t in 0..pomdp.horizon {
        let paths = all_sequences(n_s, t + 1);
        for obs in all_sequences(n_z, t + 1) {
            for past in all_sequences(n_a, t) {
                let weights: Vec<(&Vec<usize>, Q)> = paths
                    .iter()
                    .map(|s| Ok((s, phi(pomdp, &obs, s, &past)?)))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .filter(|(_, p)| !p.is_zero())
                    .collect();
                let den: Q = weights.iter().map(|(_, p)| p).sum();
                if den.is_zero() {
                    if t > 0 {
                        let prev = hdp.transition(&obs[..t], &past);
                        if let Some(row) = prev {
                            let p_z: Q = row[obs[t] * n_r..(obs[t] + 1) * n_r].iter().sum();
                            if !p_z.is_zero() {
                                return Err(Error::ZeroDenominatorOnReachableHistory { t });
                            }
                        }
                    }
                    continue;
                }
                for a in 0..n_a {
                    let mut row = vec![Q::zero(); n_z * n_r];
                    for (path, w) in &weights {
                        let s_t = path[t];
                        for next in 0..n_s {
                            for r in 0..n_r {
                                let p_t = pomdp.transition(t, s_t, a, next, r);
                                if p_t.is_zero() {
                                    continue;
                                }
                                let base = w * p_t;
                                for (z, p_o) in pomdp.observation_row(t + 1, next).iter().enumerate() {
                                    if !p_o.is_zero() {
                                        row[z * n_r + r] += &base * p_o;
                                    }
                                }
                            }
                        }
                    }
                    for x in row.iter_mut() {
                        *x /= &den;
                    }
                    let mut actions = past.clone();
                    actions.push(a);
                    hdp.insert(HistoryKey::new(obs.clone(), actions), row)?;
                }
            }
        }
    }
    Ok(hdp)
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, q, random};
    use super::*;
    use num::One;

    #[test]
    fn phi_at_time_zero() {
        let p = random::random_pomdp(3, &random::Shape::small(3));
        for s in 0..p.n_states {
            for z in 0..p.n_obs {
                assert_eq!(phi(&p, &[z], &[s], &[]).unwrap(), &p.rho0[s] * p.observation(0, s, z));
            }
        }
        assert!(phi(&p, &[0, 0], &[0], &[0]).is_err());
    }

    #[test]
    fn phi_on_deterministic_chain() {
        let m = fixtures::two_state_multiple_mds();
        // s = (0, 1, 1) under actions (b, a)
        assert!(phi(&m, &[0, 1, 1], &[0, 1, 1], &[1, 0]).unwrap().is_one());
        assert!(phi(&m, &[0, 1, 1], &[0, 0, 1], &[1, 0]).unwrap().is_zero());
        assert!(phi(&m, &[0, 0, 1], &[0, 0, 1], &[1, 0]).unwrap().is_zero());
    }

    /// `P(z_{0:t}, s_{0:t} | a)` by summing the full joint over rewards path by path.
    fn joint_oracle(p: &FinitePomdp, obs: &[usize], states: &[usize], actions: &[usize]) -> Q {
        let t = obs.len() - 1;
        let mut total = Q::zero();
        for rs in all_sequences(p.n_rewards(), t) {
            let mut w = &p.rho0[states[0]] * p.observation(0, states[0], obs[0]);
            for tau in 0..t {
                w = w
                    * p.transition(tau, states[tau], actions[tau], states[tau + 1], rs[tau])
                    * p.observation(tau + 1, states[tau + 1], obs[tau + 1]);
            }
            total += w;
        }
        total
    }

    #[test]
    fn phi_matches_joint_enumeration() {
        for seed in 0..5 {
            let shape = random::Shape { states: 2, actions: 2, obs: 2, rewards: 2, horizon: 3, stationary: false };
            let p = random::random_pomdp(seed, &shape);
            for t in 0..3 {
                for obs in all_sequences(2, t + 1) {
                    for s in all_sequences(2, t + 1) {
                        for a in all_sequences(2, t) {
                            assert_eq!(phi(&p, &obs, &s, &a).unwrap(), joint_oracle(&p, &obs, &s, &a));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fully_observed_gives_back_the_mdp() {
        for seed in 0..5 {
            let m = random::random_mdp(seed, 3, 2, 2, 3, false);
            let h = equivalent_hdp(&m).unwrap();
            assert_eq!(h.rho0, m.rho0);
            for (key, row) in h.entries() {
                let t = key.t();
                assert_eq!(row, m.transition_row(t, key.obs[t], key.actions[t]));
            }
        }
    }

    #[test]
    fn single_state_process_is_history_free() {
        let shape = random::Shape { states: 1, actions: 2, obs: 3, rewards: 2, horizon: 3, stationary: true };
        let p = random::random_pomdp(9, &shape);
        let h = equivalent_hdp(&p).unwrap();
        let mut by_action: BTreeMap<usize, &[Q]> = BTreeMap::new();
        for (key, row) in h.entries() {
            let a = key.actions[key.t()];
            assert_eq!(*by_action.entry(a).or_insert(row), row);
        }
        assert_eq!(by_action.len(), 2);
    }

    #[test]
    fn rows_are_distributions() {
        let p = random::random_pomdp(1, &random::Shape::small(1));
        let h = equivalent_hdp(&p).unwrap();
        assert!(!h.is_empty());
        for (_, row) in h.entries() {
            assert_eq!(row.iter().sum::<Q>(), q(1, 1));
        }
    }
}
