use std::collections::BTreeMap;

use num::{One, Zero};

use super::{FiniteHdp, FinitePomdp, Q};
use crate::error::{Error, Result};

/// Guard on the number of terminal trajectories (and on policy-space sizes elsewhere).
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// A (partial or terminal) history `z_{0:t}`, `a_{0:t-1}`, `r_{0:t-1}`; rewards are
/// indices into the process's reward support.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct History {
    pub obs: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<usize>,
}

impl History {
    pub fn t(&self) -> usize {
        self.obs.len() - 1
    }
}

pub trait Policy {
    /// `π(. | h)` over `0..n_actions`.
    fn distribution(&self, history: &History, n_actions: usize) -> Vec<Q>;
}

pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn distribution(&self, _: &History, n_actions: usize) -> Vec<Q> {
        vec![Q::new(1.into(), (n_actions as i64).into()); n_actions]
    }
}

/// A deterministic history-dependent policy given as a function.
pub struct DeterministicPolicy<F>(pub F);

impl<F: Fn(&History) -> usize> Policy for DeterministicPolicy<F> {
    fn distribution(&self, history: &History, n_actions: usize) -> Vec<Q> {
        let a = (self.0)(history);
        (0..n_actions).map(|i| if i == a { Q::one() } else { Q::zero() }).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Process<'a> {
    Pomdp(&'a FinitePomdp),
    Hdp(&'a FiniteHdp),
}

impl Process<'_> {
    pub fn n_obs(&self) -> usize {
        match self {
            Process::Pomdp(p) => p.n_obs,
            Process::Hdp(h) => h.n_obs,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Process::Pomdp(p) => p.n_actions,
            Process::Hdp(h) => h.n_actions,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Process::Pomdp(p) => p.horizon,
            Process::Hdp(h) => h.horizon,
        }
    }

    pub fn rewards(&self) -> &[Q] {
        match self {
            Process::Pomdp(p) => &p.rewards,
            Process::Hdp(h) => &h.rewards,
        }
    }
}

/// Exact probabilities of terminal trajectories `(z_{0:T}, a_{0:T-1}, r_{0:T-1})`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryDistribution {
    pub probs: BTreeMap<History, Q>,
}

impl TrajectoryDistribution {
    pub fn total(&self) -> Q {
        self.probs.values().sum()
    }

    pub fn initial_marginal(&self, n_obs: usize) -> Vec<Q> {
        let mut out = vec![Q::zero(); n_obs];
        for (h, p) in &self.probs {
            out[h.obs[0]] += p;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

struct Walker<'p> {
    policy: &'p dyn Policy,
    horizon: usize,
    n_actions: usize,
    leaves: usize,
    out: TrajectoryDistribution,
}

impl Walker<'_> {
    fn policy_at(&self, history: &History) -> Result<Vec<Q>> {
        let pi = self.policy.distribution(history, self.n_actions);
        if pi.len() != self.n_actions || pi.iter().any(|p| p < &Q::zero()) || !pi.iter().sum::<Q>().is_one() {
            return Err(Error::MalformedProcess(format!(
                "policy gave an improper action distribution at history {:?}",
                history.obs
            )));
        }
        Ok(pi)
    }

    fn leaf(&mut self, history: &History, p: Q) -> Result<()> {
        self.leaves += 1;
        if self.leaves > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge { limit: ENUMERATION_LIMIT });
        }
        *self.out.probs.entry(history.clone()).or_insert_with(Q::zero) += p;
        Ok(())
    }

    /// `alpha[s] = P(history, s_t = s)`; hidden states are summed out at the leaves.
    fn pomdp(&mut self, p: &FinitePomdp, history: &mut History, alpha: Vec<Q>) -> Result<()> {
        let t = history.t();
        if t == self.horizon {
            return self.leaf(history, alpha.iter().sum());
        }
        let pi = self.policy_at(history)?;
        let n_r = p.n_rewards();
        for (a, pa) in pi.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            for r in 0..n_r {
                for z in 0..p.n_obs {
                    let mut next = vec![Q::zero(); p.n_states];
                    let mut any = false;
                    for (s, w) in alpha.iter().enumerate().filter(|(_, w)| !w.is_zero()) {
                        for (s2, slot) in next.iter_mut().enumerate() {
                            let pt = p.transition(t, s, a, s2, r);
                            let po = p.observation(t + 1, s2, z);
                            if !pt.is_zero() && !po.is_zero() {
                                *slot += w * pa * pt * po;
                                any = true;
                            }
                        }
                    }
                    if !any {
                        continue;
                    }
                    history.obs.push(z);
                    history.actions.push(a);
                    history.rewards.push(r);
                    self.pomdp(p, history, next)?;
                    history.obs.pop();
                    history.actions.pop();
                    history.rewards.pop();
                }
            }
        }
        Ok(())
    }

    fn hdp(&mut self, h: &FiniteHdp, history: &mut History, prob: Q) -> Result<()> {
        let t = history.t();
        if t == self.horizon {
            return self.leaf(history, prob);
        }
        let pi = self.policy_at(history)?;
        let n_r = h.n_rewards();
        for (a, pa) in pi.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            history.actions.push(a);
            let row = h.transition(&history.obs, &history.actions).map(<[Q]>::to_vec);
            history.actions.pop();
            let row = row.ok_or_else(|| {
                Error::MalformedProcess(format!("no transition for reachable history {:?}", history.obs))
            })?;
            for (i, pz) in row.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
                let (z, r) = (i / n_r, i % n_r);
                history.obs.push(z);
                history.actions.push(a);
                history.rewards.push(r);
                self.hdp(h, history, &prob * pa * pz)?;
                history.obs.pop();
                history.actions.pop();
                history.rewards.pop();
            }
        }
        Ok(())
    }
}

/// Exhaustively enumerates the trajectory distribution induced by `policy`.
/// Fails fast when the worst-case branching `(|Z| |A| |R|)^T |Z|` exceeds the guard.
pub fn enumerate_distribution(process: Process<'_>, policy: &dyn Policy) -> Result<TrajectoryDistribution> {
    let branching = process.n_obs() * process.n_actions() * process.rewards().len();
    super::bounded_pow(branching, process.horizon(), ENUMERATION_LIMIT)
        .and_then(|b| b.checked_mul(process.n_obs()))
        .filter(|&b| b <= ENUMERATION_LIMIT)
        .ok_or(Error::EnumerationTooLarge { limit: ENUMERATION_LIMIT })?;
    let mut walker = Walker {
        policy,
        horizon: process.horizon(),
        n_actions: process.n_actions(),
        leaves: 0,
        out: TrajectoryDistribution::default(),
    };
    match process {
        Process::Pomdp(p) => {
            for z in 0..p.n_obs {
                let alpha: Vec<Q> = (0..p.n_states).map(|s| &p.rho0[s] * p.observation(0, s, z)).collect();
                if alpha.iter().all(Zero::is_zero) {
                    continue;
                }
                let mut history = History { obs: vec![z], ..Default::default() };
                walker.pomdp(p, &mut history, alpha)?;
            }
        }
        Process::Hdp(h) => {
            for (z, p0) in h.rho0.iter().enumerate().filter(|(_, p)| !p.is_zero()) {
                let mut history = History { obs: vec![z], ..Default::default() };
                walker.hdp(h, &mut history, p0.clone())?;
            }
        }
    }
    Ok(walker.out)
}
