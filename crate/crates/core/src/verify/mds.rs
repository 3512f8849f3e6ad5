//! Memory demand structures: which past steps of a history suffice to predict the next
//! state (or observation) and reward.
//!
//! The definition conditions on events `⋂_{τ∈D} {Z_τ = z_τ, A_τ = a_τ}` without naming a
//! policy. Probabilities here are taken under a reference action measure: uniformly
//! random actions by default, which gives every action sequence positive probability.
//! [`Measure::Strict`] additionally demands equality under every open-loop action
//! sequence that agrees with the history on `D`.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite::{all_sequences, FiniteHdp, FinitePomdp, Process, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MdsMode {
    /// Predict the next hidden state and reward.
    Pomdp,
    /// Predict the next observation and reward.
    Hdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Measure {
    #[default]
    UniformRandom,
    Strict,
}

/// Per-step action law that does not look at the history.
#[derive(Debug, Clone, PartialEq)]
enum ActionLaw {
    Uniform,
    OpenLoop(Vec<usize>),
}

impl ActionLaw {
    fn prob(&self, tau: usize, a: usize, n_actions: usize) -> Q {
        match self {
            ActionLaw::Uniform => Q::new(1.into(), (n_actions as i64).into()),
            ActionLaw::OpenLoop(plan) if plan[tau] == a => Q::one(),
            ActionLaw::OpenLoop(_) => Q::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MdsQuery<'a> {
    pub process: Process<'a>,
    /// `z_{0:t}`
    pub obs: Vec<usize>,
    /// `a_{0:t}`
    pub actions: Vec<usize>,
    pub candidate: BTreeSet<usize>,
    pub mode: MdsMode,
}

fn normalize(mut joint: Vec<Q>) -> Result<Vec<Q>> {
    let total: Q = joint.iter().sum();
    if total.is_zero() {
        return Err(Error::UndefinedConditional);
    }
    for x in joint.iter_mut() {
        *x /= &total;
    }
    Ok(joint)
}

fn pomdp_conditional(
    p: &FinitePomdp,
    mode: MdsMode,
    obs: &[usize],
    actions: &[usize],
    d: &BTreeSet<usize>,
    law: &ActionLaw,
) -> Result<Vec<Q>> {
    let t = obs.len() - 1;
    let n_r = p.n_rewards();
    let gate = |tau: usize, s: usize| -> Q {
        if d.contains(&tau) {
            p.observation(tau, s, obs[tau]).clone()
        } else {
            Q::one()
        }
    };
    let mut m: Vec<Q> = (0..p.n_states).map(|s| &p.rho0[s] * gate(0, s)).collect();
    // weight of a_τ = a given the measure and the event
    let action_weight = |tau: usize, a: usize| -> Q {
        if d.contains(&tau) && a != actions[tau] {
            Q::zero()
        } else {
            law.prob(tau, a, p.n_actions)
        }
    };
    for tau in 0..t {
        let mut next = vec![Q::zero(); p.n_states];
        for (s, ms) in m.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            for a in 0..p.n_actions {
                let wa = action_weight(tau, a);
                if wa.is_zero() {
                    continue;
                }
                for (s2, slot) in next.iter_mut().enumerate() {
                    let ps = p.next_state_prob(tau, s, a, s2);
                    if !ps.is_zero() {
                        *slot += ms * &wa * ps;
                    }
                }
            }
        }
        m = next.into_iter().enumerate().map(|(s2, x)| x * gate(tau + 1, s2)).collect();
    }
    let mut joint = vec![Q::zero(); p.n_states * n_r];
    for (s, ms) in m.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
        for a in 0..p.n_actions {
            let wa = action_weight(t, a);
            if wa.is_zero() {
                continue;
            }
            for (i, pt) in p.transition_row(t, s, a).iter().enumerate() {
                if !pt.is_zero() {
                    joint[i] += ms * &wa * pt;
                }
            }
        }
    }
    let joint = match mode {
        MdsMode::Pomdp => joint,
        MdsMode::Hdp => {
            let mut out = vec![Q::zero(); p.n_obs * n_r];
            for s2 in 0..p.n_states {
                for r in 0..n_r {
                    let w = &joint[s2 * n_r + r];
                    if w.is_zero() {
                        continue;
                    }
                    for (z, po) in p.observation_row(t + 1, s2).iter().enumerate() {
                        out[z * n_r + r] += w * po;
                    }
                }
            }
            out
        }
    };
    normalize(joint)
}

fn hdp_conditional(
    h: &FiniteHdp,
    obs: &[usize],
    actions: &[usize],
    d: &BTreeSet<usize>,
    law: &ActionLaw,
) -> Result<Vec<Q>> {
    let t = obs.len() - 1;
    let n_r = h.n_rewards();
    let action_weight = |tau: usize, a: usize| -> Q {
        if d.contains(&tau) && a != actions[tau] {
            Q::zero()
        } else {
            law.prob(tau, a, h.n_actions)
        }
    };
    // (z_{0:τ}, a_{0:τ-1}) -> probability of the prefix and the event so far
    let mut front: BTreeMap<(Vec<usize>, Vec<usize>), Q> = BTreeMap::new();
    for (z, p0) in h.rho0.iter().enumerate() {
        if !p0.is_zero() && (!d.contains(&0) || z == obs[0]) {
            front.insert((vec![z], vec![]), p0.clone());
        }
    }
    let mut joint = vec![Q::zero(); h.n_obs * n_r];
    for tau in 0..=t {
        let mut next: BTreeMap<(Vec<usize>, Vec<usize>), Q> = BTreeMap::new();
        for ((zs, as_), p) in &front {
            for a in 0..h.n_actions {
                let wa = action_weight(tau, a);
                if wa.is_zero() {
                    continue;
                }
                let mut acts = as_.clone();
                acts.push(a);
                let row = h
                    .transition(zs, &acts)
                    .ok_or_else(|| Error::MalformedProcess(format!("missing transition for {zs:?}")))?;
                if tau == t {
                    for (i, x) in row.iter().enumerate() {
                        joint[i] += p * &wa * x;
                    }
                    continue;
                }
                for z in 0..h.n_obs {
                    if d.contains(&(tau + 1)) && z != obs[tau + 1] {
                        continue;
                    }
                    let pz: Q = row[z * n_r..(z + 1) * n_r].iter().sum();
                    if pz.is_zero() {
                        continue;
                    }
                    let mut zs2 = zs.clone();
                    zs2.push(z);
                    *next.entry((zs2, acts.clone())).or_insert_with(Q::zero) += p * &wa * pz;
                }
            }
        }
        if tau < t {
            front = next;
        }
    }
    normalize(joint)
}

fn conditional(query: &MdsQuery<'_>, d: &BTreeSet<usize>, law: &ActionLaw) -> Result<Vec<Q>> {
    match (query.process, query.mode) {
        (Process::Pomdp(p), mode) => pomdp_conditional(p, mode, &query.obs, &query.actions, d, law),
        (Process::Hdp(h), MdsMode::Hdp) => hdp_conditional(h, &query.obs, &query.actions, d, law),
        (Process::Hdp(_), MdsMode::Pomdp) => {
            Err(Error::MalformedProcess("an HDP has no hidden state to predict".into()))
        }
    }
}

fn validate(query: &MdsQuery<'_>) -> Result<usize> {
    let t = query.obs.len().checked_sub(1).ok_or_else(|| Error::IndexOutOfRange("empty history".into()))?;
    if query.actions.len() != t + 1 {
        return Err(Error::IndexOutOfRange(format!("{} actions for {} observations", query.actions.len(), t + 1)));
    }
    if t >= query.process.horizon() {
        return Err(Error::IndexOutOfRange(format!("t = {t} has no next step within the horizon")));
    }
    if query.obs.iter().any(|&z| z >= query.process.n_obs())
        || query.actions.iter().any(|&a| a >= query.process.n_actions())
    {
        return Err(Error::IndexOutOfRange("history index".into()));
    }
    if let Some(&x) = query.candidate.iter().next_back() {
        if x > t {
            return Err(Error::IndexOutOfRange(format!("candidate index {x} > t = {t}")));
        }
    }
    Ok(t)
}

/// `P(x_{t+1}, r_t | z_{0:t}, a_{0:t})`, the target every MDS must reproduce.
pub fn full_conditional(query: &MdsQuery<'_>) -> Result<Vec<Q>> {
    let t = validate(query)?;
    conditional(query, &(0..=t).collect(), &ActionLaw::Uniform)
}

/// `P(x_{t+1}, r_t | ⋂_{τ∈D} {Z_τ = z_τ, A_τ = a_τ})` under the uniform action measure.
pub fn event_conditional(query: &MdsQuery<'_>) -> Result<Vec<Q>> {
    validate(query)?;
    conditional(query, &query.candidate, &ActionLaw::Uniform)
}

fn is_mds_against(query: &MdsQuery<'_>, target: &[Q], measure: Measure) -> Result<bool> {
    if conditional(query, &query.candidate, &ActionLaw::Uniform)? != target {
        return Ok(false);
    }
    if measure == Measure::Strict {
        let n_a = query.process.n_actions();
        for plan in all_sequences(n_a, query.actions.len()) {
            if query.candidate.iter().any(|&tau| plan[tau] != query.actions[tau]) {
                continue;
            }
            match conditional(query, &query.candidate, &ActionLaw::OpenLoop(plan)) {
                Ok(c) if c != target => return Ok(false),
                Ok(_) | Err(Error::UndefinedConditional) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(true)
}

pub fn is_mds(query: &MdsQuery<'_>, measure: Measure) -> Result<bool> {
    let target = full_conditional(query)?;
    is_mds_against(query, &target, measure)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MdsEnumeration {
    pub all: Vec<BTreeSet<usize>>,
    /// Fewest steps; ties broken lexicographically.
    pub minimum: Option<BTreeSet<usize>>,
    /// Oldest required step as recent as possible, then fewest steps, then lexicographic.
    /// The empty set needs no past step and ranks first.
    pub closest: Option<BTreeSet<usize>>,
}

/// Largest `t` for which all `2^(t+1)` candidate sets are tried.
pub const MAX_ENUMERATED_T: usize = 12;

pub fn enumerate_mds(
    process: Process<'_>,
    mode: MdsMode,
    obs: &[usize],
    actions: &[usize],
    measure: Measure,
) -> Result<MdsEnumeration> {
    let mut query =
        MdsQuery { process, obs: obs.to_vec(), actions: actions.to_vec(), candidate: BTreeSet::new(), mode };
    let t = validate(&query)?;
    if t > MAX_ENUMERATED_T {
        return Err(Error::EnumerationTooLarge { limit: 1 << (MAX_ENUMERATED_T + 1) });
    }
    let target = full_conditional(&query)?;
    let mut all = Vec::new();
    for mask in 0u32..(1 << (t + 1)) {
        query.candidate = (0..=t).filter(|i| mask >> i & 1 == 1).collect();
        match is_mds_against(&query, &target, measure) {
            Ok(true) => all.push(query.candidate.clone()),
            Ok(false) | Err(Error::UndefinedConditional) => {}
            Err(e) => return Err(e),
        }
    }
    let as_vec = |d: &BTreeSet<usize>| d.iter().copied().collect::<Vec<_>>();
    let minimum = all.iter().min_by(|a, b| a.len().cmp(&b.len()).then_with(|| as_vec(a).cmp(&as_vec(b)))).cloned();
    let closest = all
        .iter()
        .min_by(|a, b| {
            let oldest = |d: &BTreeSet<usize>| std::cmp::Reverse(d.first().map_or(usize::MAX, |&x| x));
            oldest(a).cmp(&oldest(b)).then(a.len().cmp(&b.len())).then_with(|| as_vec(a).cmp(&as_vec(b)))
        })
        .cloned();
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| as_vec(a).cmp(&as_vec(b))));
    Ok(MdsEnumeration { all, minimum, closest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{enumerate_distribution, equivalent_hdp, fixtures, random, UniformPolicy};

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn two_state_example() {
        let m = fixtures::two_state_multiple_mds();
        let (obs, actions) = fixtures::two_state_history();
        let e = enumerate_mds(Process::Pomdp(&m), MdsMode::Pomdp, &obs, &actions, Measure::UniformRandom).unwrap();
        let expected: Vec<BTreeSet<usize>> =
            [&[0][..], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]].iter().map(|d| set(d)).collect();
        assert_eq!(e.all, expected);
        assert_eq!(e.minimum, Some(set(&[0])));
        assert_eq!(e.closest, Some(set(&[2])));
        // with nothing known, three `a`s in a row (probability 1/8) leave the chain at 0
        let q = MdsQuery { process: Process::Pomdp(&m), obs, actions, candidate: set(&[]), mode: MdsMode::Pomdp };
        let c = event_conditional(&q).unwrap();
        assert_eq!(c, vec![crate::finite::q(1, 8), crate::finite::q(7, 8)]);
        let strict = enumerate_mds(Process::Pomdp(&m), MdsMode::Pomdp, &q.obs, &q.actions, Measure::Strict).unwrap();
        assert_eq!(strict.all, expected);
    }

    /// Sums the full path distribution under uniform actions, keeping paths in the event.
    fn brute_conditional(p: &FinitePomdp, obs: &[usize], actions: &[usize], d: &BTreeSet<usize>) -> Option<Vec<Q>> {
        let t = obs.len() - 1;
        let n_r = p.n_rewards();
        let ua = Q::new(1.into(), (p.n_actions as i64).into());
        let mut joint = vec![Q::zero(); p.n_states * n_r];
        for states in all_sequences(p.n_states, t + 2) {
            for zs in all_sequences(p.n_obs, t + 1) {
                if d.iter().any(|&tau| zs[tau] != obs[tau]) {
                    continue;
                }
                for acts in all_sequences(p.n_actions, t + 1) {
                    if d.iter().any(|&tau| acts[tau] != actions[tau]) {
                        continue;
                    }
                    let mut w = p.rho0[states[0]].clone();
                    for tau in 0..=t {
                        w = w * p.observation(tau, states[tau], zs[tau]) * &ua;
                        if tau < t {
                            w *= p.next_state_prob(tau, states[tau], acts[tau], states[tau + 1]);
                        }
                    }
                    for r in 0..n_r {
                        joint[states[t + 1] * n_r + r] += &w * p.transition(t, states[t], acts[t], states[t + 1], r);
                    }
                }
            }
        }
        normalize(joint).ok()
    }

    #[test]
    fn message_passing_matches_path_sum() {
        for seed in 0..8 {
            let shape =
                random::Shape { states: 2, actions: 2, obs: 2, rewards: 2, horizon: 3, stationary: seed % 2 == 0 };
            let p = random::random_pomdp(seed, &shape);
            let t = 2;
            for obs in all_sequences(2, t + 1) {
                let actions = vec![1, 0, 1];
                for mask in 0..8u32 {
                    let d: BTreeSet<usize> = (0..=t).filter(|i| mask >> i & 1 == 1).collect();
                    let q = MdsQuery {
                        process: Process::Pomdp(&p),
                        obs: obs.clone(),
                        actions: actions.clone(),
                        candidate: d.clone(),
                        mode: MdsMode::Pomdp,
                    };
                    assert_eq!(event_conditional(&q).ok(), brute_conditional(&p, &obs, &actions, &d));
                }
            }
        }
    }

    #[test]
    fn hdp_process_agrees_with_pomdp_in_hdp_mode() {
        for seed in 0..10 {
            let p = random::random_pomdp(seed, &random::Shape::small(seed));
            let h = equivalent_hdp(&p).unwrap();
            let dist = enumerate_distribution(Process::Pomdp(&p), &UniformPolicy).unwrap();
            for hist in dist.probs.keys().take(6) {
                for t in 0..p.horizon {
                    let obs = hist.obs[..=t].to_vec();
                    let actions = hist.actions[..=t].to_vec();
                    for mask in 0..(1u32 << (t + 1)) {
                        let d: BTreeSet<usize> = (0..=t).filter(|i| mask >> i & 1 == 1).collect();
                        let mk = |process| MdsQuery {
                            process,
                            obs: obs.clone(),
                            actions: actions.clone(),
                            candidate: d.clone(),
                            mode: MdsMode::Hdp,
                        };
                        assert_eq!(
                            event_conditional(&mk(Process::Pomdp(&p))),
                            event_conditional(&mk(Process::Hdp(&h)))
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mdp_last_step_and_full_history() {
        for seed in 0..10 {
            let m = random::random_mdp(seed, 3, 2, 2, 3, seed % 2 == 1);
            let dist = enumerate_distribution(Process::Pomdp(&m), &UniformPolicy).unwrap();
            let hist = dist.probs.keys().nth(seed as usize % dist.len()).unwrap();
            let e = enumerate_mds(
                Process::Pomdp(&m),
                MdsMode::Pomdp,
                &hist.obs[..3],
                &hist.actions[..3],
                Measure::UniformRandom,
            )
            .unwrap();
            assert!(e.all.contains(&set(&[2])));
            assert!(e.all.contains(&set(&[0, 1, 2])));
        }
    }

    #[test]
    fn query_validation() {
        let m = fixtures::two_state_multiple_mds();
        let q = MdsQuery {
            process: Process::Pomdp(&m),
            obs: vec![0, 1],
            actions: vec![1],
            candidate: set(&[]),
            mode: MdsMode::Pomdp,
        };
        assert!(is_mds(&q, Measure::UniformRandom).is_err());
        // z_1 = 0 after action b is impossible
        let q = MdsQuery {
            process: Process::Pomdp(&m),
            obs: vec![0, 0],
            actions: vec![1, 1],
            candidate: set(&[1]),
            mode: MdsMode::Pomdp,
        };
        assert_eq!(is_mds(&q, Measure::UniformRandom).unwrap_err(), Error::UndefinedConditional);
    }
}
