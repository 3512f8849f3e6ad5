//! Exact optimal-policy sets for tiny processes, and the optimality-preservation checks
//! for the state-convolution and reward-delay constructions.
//!
//! Markov policies of an MDP are enumerated outright (`|A|^{|S| T}` of them). A
//! deterministic history-dependent policy only matters on the histories it reaches, so
//! those are enumerated as policy trees, one start observation at a time: optimality is
//! required for every start separately, hence the optimal set is the product of the
//! per-start optimal tree sets.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite::{
    bounded_pow, delayed_hdp, equivalent_hdp, has_induced_hdp, FiniteHdp, FinitePomdp, Process, ENUMERATION_LIMIT, Q,
};
use crate::wrappers::{convolve_state, ConvolutionKernel, Sequence, Value};

/// A decision point `(z_{0:t}, a_{0:t-1})`.
pub type Decision = (Vec<usize>, Vec<usize>);
/// The actions a deterministic policy takes on the decision points it reaches.
pub type PolicyTree = BTreeMap<Decision, usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOptimal {
    /// `V*_0(s)` for every start state.
    pub values: Vec<Q>,
    /// Backward-induction optimal actions `A*_t(s)`.
    pub actions: Vec<Vec<BTreeSet<usize>>>,
    /// Every deterministic Markov policy `[t][s] -> a` optimal from all start states.
    pub policies: Vec<Vec<Vec<usize>>>,
    pub considered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartOptimal {
    pub start: usize,
    pub value: Q,
    pub trees: BTreeSet<PolicyTree>,
    pub considered: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimalPolicySet {
    Markov(MarkovOptimal),
    History(Vec<StartOptimal>),
}

/// `V^π_0(s)` for each start state of a Markov policy `[t][s] -> a`.
pub fn evaluate_markov(mdp: &FinitePomdp, policy: &[Vec<usize>], gamma: &Q) -> Vec<Q> {
    let n_r = mdp.n_rewards();
    let mut v = vec![Q::zero(); mdp.n_states];
    for t in (0..mdp.horizon).rev() {
        v = (0..mdp.n_states)
            .map(|s| {
                let row = mdp.transition_row(t, s, policy[t][s]);
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| !p.is_zero())
                    .map(|(i, p)| p * (&mdp.rewards[i % n_r] + gamma * &v[i / n_r]))
                    .sum()
            })
            .collect();
    }
    v
}

/// Exhaustive Markov-policy enumeration plus backward induction on a fully observed
/// process.
pub fn markov_optimal(mdp: &FinitePomdp, gamma: &Q) -> Result<MarkovOptimal> {
    if !mdp.is_fully_observed() {
        return Err(Error::MalformedProcess("Markov optimality needs a fully observed process".into()));
    }
    let (n_s, n_a, horizon, n_r) = (mdp.n_states, mdp.n_actions, mdp.horizon, mdp.n_rewards());
    let count = bounded_pow(n_a, n_s * horizon, ENUMERATION_LIMIT).ok_or_else(|| Error::PolicySpaceTooLarge {
        size: format!("{n_a}^{}", n_s * horizon),
        limit: ENUMERATION_LIMIT,
    })?;
    // backward induction
    let mut v = vec![Q::zero(); n_s];
    let mut actions = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let q_values: Vec<Vec<Q>> = (0..n_s)
            .map(|s| {
                (0..n_a)
                    .map(|a| {
                        mdp.transition_row(t, s, a)
                            .iter()
                            .enumerate()
                            .filter(|(_, p)| !p.is_zero())
                            .map(|(i, p)| p * (&mdp.rewards[i % n_r] + gamma * &v[i / n_r]))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let best: Vec<Q> = q_values.iter().map(|qs| qs.iter().max().expect("actions nonempty").clone()).collect();
        actions[t] = q_values
            .iter()
            .zip(&best)
            .map(|(qs, b)| qs.iter().enumerate().filter(|(_, x)| *x == b).map(|(a, _)| a).collect())
            .collect();
        v = best;
    }
    // exhaustive enumeration
    let mut scored = Vec::with_capacity(count);
    let mut best: Option<Vec<Q>> = None;
    for code in 0..count {
        let mut c = code;
        let policy: Vec<Vec<usize>> = (0..horizon)
            .map(|_| {
                (0..n_s)
                    .map(|_| {
                        let a = c % n_a;
                        c /= n_a;
                        a
                    })
                    .collect()
            })
            .collect();
        let values = evaluate_markov(mdp, &policy, gamma);
        best = Some(match best {
            None => values.clone(),
            Some(b) => b.into_iter().zip(&values).map(|(x, y)| if *y > x { y.clone() } else { x }).collect(),
        });
        scored.push((policy, values));
    }
    let best = best.expect("at least one policy");
    if best != v {
        return Err(Error::MalformedProcess("enumeration and backward induction disagree".into()));
    }
    let policies = scored.into_iter().filter(|(_, vals)| *vals == best).map(|(p, _)| p).collect();
    Ok(MarkovOptimal { values: best, actions, policies, considered: count })
}

fn row_at<'h>(hdp: &'h FiniteHdp, obs: &[usize], acts: &[usize]) -> Result<&'h [Q]> {
    hdp.transition(obs, acts)
        .ok_or_else(|| Error::MalformedProcess(format!("no transition for reachable history {obs:?} {acts:?}")))
}

/// Successor observations with positive probability, with that probability.
fn successors(hdp: &FiniteHdp, row: &[Q]) -> Vec<(usize, Q)> {
    hdp.observation_marginal(row).into_iter().enumerate().filter(|(_, p)| !p.is_zero()).collect()
}

fn expected_reward(hdp: &FiniteHdp, row: &[Q]) -> Q {
    let n_r = hdp.n_rewards();
    row.iter().enumerate().filter(|(_, p)| !p.is_zero()).map(|(i, p)| p * &hdp.rewards[i % n_r]).sum()
}

/// Number of policy trees below a decision point, capped at `limit + 1`.
fn count_trees(hdp: &FiniteHdp, obs: &mut Vec<usize>, acts: &mut Vec<usize>, limit: usize) -> Result<usize> {
    if obs.len() > hdp.horizon {
        return Ok(1);
    }
    let mut total = 0usize;
    for a in 0..hdp.n_actions {
        acts.push(a);
        let row = row_at(hdp, obs, acts)?.to_vec();
        let mut product = 1usize;
        if obs.len() < hdp.horizon {
            for (z, _) in successors(hdp, &row) {
                obs.push(z);
                let c = count_trees(hdp, obs, acts, limit)?;
                obs.pop();
                product = product.saturating_mul(c).min(limit + 1);
            }
        }
        acts.pop();
        total = total.saturating_add(product).min(limit + 1);
    }
    Ok(total)
}

/// Every policy tree below a decision point with its expected discounted return from there.
fn trees(hdp: &FiniteHdp, obs: &mut Vec<usize>, acts: &mut Vec<usize>, gamma: &Q) -> Result<Vec<(PolicyTree, Q)>> {
    let mut out = Vec::new();
    for a in 0..hdp.n_actions {
        acts.push(a);
        let row = row_at(hdp, obs, acts)?.to_vec();
        let immediate = expected_reward(hdp, &row);
        let mut partial: Vec<(PolicyTree, Q)> = vec![(PolicyTree::new(), immediate)];
        if obs.len() < hdp.horizon {
            for (z, pz) in successors(hdp, &row) {
                obs.push(z);
                let below = trees(hdp, obs, acts, gamma)?;
                obs.pop();
                let weight = gamma * &pz;
                let mut next = Vec::with_capacity(partial.len() * below.len());
                for (tree, value) in &partial {
                    for (sub, sub_value) in &below {
                        let mut merged = tree.clone();
                        merged.extend(sub.iter().map(|(k, v)| (k.clone(), *v)));
                        next.push((merged, value + &weight * sub_value));
                    }
                }
                partial = next;
            }
        }
        acts.pop();
        let key = (obs.clone(), acts.clone());
        for (tree, value) in partial {
            let mut tree = tree;
            tree.insert(key.clone(), a);
            out.push((tree, value));
        }
    }
    Ok(out)
}

/// Optimal policy trees of an HDP, per start observation with positive probability.
pub fn history_optimal(hdp: &FiniteHdp, gamma: &Q) -> Result<Vec<StartOptimal>> {
    let mut out = Vec::new();
    for (z0, p0) in hdp.rho0.iter().enumerate() {
        if p0.is_zero() {
            continue;
        }
        let (mut obs, mut acts) = (vec![z0], Vec::new());
        let count = count_trees(hdp, &mut obs, &mut acts, ENUMERATION_LIMIT)?;
        if count > ENUMERATION_LIMIT {
            return Err(Error::PolicySpaceTooLarge {
                size: format!("more than {ENUMERATION_LIMIT}"),
                limit: ENUMERATION_LIMIT,
            });
        }
        let all = trees(hdp, &mut obs, &mut acts, gamma)?;
        let value = all.iter().map(|(_, v)| v).max().expect("nonempty").clone();
        let trees = all.iter().filter(|(_, v)| *v == value).map(|(t, _)| t.clone()).collect();
        out.push(StartOptimal { start: z0, value, trees, considered: all.len() });
    }
    Ok(out)
}

/// Optimal actions at every reachable decision point, by backward induction, with
/// `V*(z_0)` per start.
pub fn history_backward_induction(
    hdp: &FiniteHdp,
    gamma: &Q,
) -> Result<(BTreeMap<Decision, BTreeSet<usize>>, BTreeMap<usize, Q>)> {
    fn solve(
        hdp: &FiniteHdp,
        obs: &mut Vec<usize>,
        acts: &mut Vec<usize>,
        gamma: &Q,
        out: &mut BTreeMap<Decision, BTreeSet<usize>>,
    ) -> Result<Q> {
        let mut q_values = Vec::with_capacity(hdp.n_actions);
        for a in 0..hdp.n_actions {
            acts.push(a);
            let row = row_at(hdp, obs, acts)?.to_vec();
            let mut q = expected_reward(hdp, &row);
            if obs.len() < hdp.horizon {
                for (z, pz) in successors(hdp, &row) {
                    obs.push(z);
                    let v = solve(hdp, obs, acts, gamma, out)?;
                    obs.pop();
                    q += gamma * pz * v;
                }
            }
            acts.pop();
            q_values.push(q);
        }
        let best = q_values.iter().max().expect("actions nonempty").clone();
        let set = q_values.iter().enumerate().filter(|(_, x)| **x == best).map(|(a, _)| a).collect();
        out.insert((obs.clone(), acts.clone()), set);
        Ok(best)
    }
    let mut sets = BTreeMap::new();
    let mut values = BTreeMap::new();
    for (z0, p0) in hdp.rho0.iter().enumerate() {
        if !p0.is_zero() {
            values.insert(z0, solve(hdp, &mut vec![z0], &mut Vec::new(), gamma, &mut sets)?);
        }
    }
    Ok((sets, values))
}

/// The tree a Markov policy traces from `s_0`, with decision points renamed by `rename`
/// (state history to observation history).
fn markov_tree(
    mdp: &FinitePomdp,
    policy: &[Vec<usize>],
    s0: usize,
    rename: &dyn Fn(&[usize]) -> Result<Vec<usize>>,
) -> Result<PolicyTree> {
    fn walk(
        mdp: &FinitePomdp,
        policy: &[Vec<usize>],
        states: &mut Vec<usize>,
        acts: &mut Vec<usize>,
        rename: &dyn Fn(&[usize]) -> Result<Vec<usize>>,
        out: &mut PolicyTree,
    ) -> Result<()> {
        let t = states.len() - 1;
        let a = policy[t][states[t]];
        out.insert((rename(states)?, acts.clone()), a);
        if t + 1 < mdp.horizon {
            acts.push(a);
            for next in 0..mdp.n_states {
                if !mdp.next_state_prob(t, states[t], a, next).is_zero() {
                    states.push(next);
                    walk(mdp, policy, states, acts, rename, out)?;
                    states.pop();
                }
            }
            acts.pop();
        }
        Ok(())
    }
    let mut out = PolicyTree::new();
    walk(mdp, policy, &mut vec![s0], &mut Vec::new(), rename, &mut out)?;
    Ok(out)
}

/// Optimal policies of a process: Markov policies (`as_mdp`, fully observed only) or
/// history-dependent policy trees.
pub fn optimal_policy_set(process: Process<'_>, as_mdp: bool, gamma: &Q) -> Result<OptimalPolicySet> {
    match (process, as_mdp) {
        (Process::Pomdp(p), true) => Ok(OptimalPolicySet::Markov(markov_optimal(p, gamma)?)),
        (Process::Hdp(_), true) => Err(Error::MalformedProcess("an HDP has no Markov state".into())),
        (Process::Pomdp(p), false) => Ok(OptimalPolicySet::History(history_optimal(&equivalent_hdp(p)?, gamma)?)),
        (Process::Hdp(h), false) => Ok(OptimalPolicySet::History(history_optimal(h, gamma)?)),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub passed: bool,
    pub markov_policies: usize,
    pub optimal_markov_policies: usize,
    pub history_trees: usize,
    pub optimal_history_trees: usize,
    pub failures: Vec<String>,
}

fn rename_by_kernel(kernel: &ConvolutionKernel) -> impl Fn(&[usize]) -> Result<Vec<usize>> + '_ {
    move |states: &[usize]| {
        (1..=states.len())
            .map(|len| {
                match convolve_state(kernel, &Sequence::Modular(states[..len].iter().map(|&s| s as u64).collect()))? {
                    Value::Modular(z) => Ok(z as usize),
                    Value::Real(_) => Err(Error::ArithmeticModeMismatch),
                }
            })
            .collect()
    }
}

fn rename_tree(tree: &PolicyTree, rename: &dyn Fn(&[usize]) -> Result<Vec<usize>>) -> Result<PolicyTree> {
    tree.iter().map(|((obs, acts), a)| Ok(((rename(obs)?, acts.clone()), *a))).collect()
}

/// Compares an MDP with a wrapped HDP of it whose decision points correspond through
/// `rename`: optimal tree sets, optimal values, Markov images and per-history optimal
/// action sets must all match exactly.
fn compare(
    mdp: &FinitePomdp,
    wrapped: &FiniteHdp,
    rename: &dyn Fn(&[usize]) -> Result<Vec<usize>>,
    gamma: &Q,
) -> Result<OptimalityReport> {
    let base = equivalent_hdp(mdp)?;
    let markov = markov_optimal(mdp, gamma)?;
    let base_opt = history_optimal(&base, gamma)?;
    let wrapped_opt = history_optimal(wrapped, gamma)?;
    let mut report = OptimalityReport {
        markov_policies: markov.considered,
        optimal_markov_policies: markov.policies.len(),
        history_trees: wrapped_opt.iter().map(|s| s.considered).sum(),
        optimal_history_trees: wrapped_opt.iter().map(|s| s.trees.len()).sum(),
        ..Default::default()
    };
    let by_start: BTreeMap<usize, &StartOptimal> = wrapped_opt.iter().map(|s| (s.start, s)).collect();
    for start in &base_opt {
        let z0 = rename(&[start.start])?[0];
        let Some(target) = by_start.get(&z0) else {
            report.failures.push(format!("start {} has no counterpart", start.start));
            continue;
        };
        if start.value != target.value {
            report.failures.push(format!("start {}: optimal values {} vs {}", start.start, start.value, target.value));
        }
        if start.value != markov.values[start.start] {
            report.failures.push(format!("start {}: history and Markov optimal values differ", start.start));
        }
        let image: BTreeSet<PolicyTree> = start.trees.iter().map(|t| rename_tree(t, rename)).collect::<Result<_>>()?;
        if image != target.trees {
            report.failures.push(format!(
                "start {}: {} optimal trees map to {}, wrapped process has {}",
                start.start,
                start.trees.len(),
                image.len(),
                target.trees.len()
            ));
        }
        for policy in &markov.policies {
            let tree = markov_tree(mdp, policy, start.start, rename)?;
            if !target.trees.contains(&tree) {
                report
                    .failures
                    .push(format!("start {}: image of optimal Markov policy {policy:?} is not optimal", start.start));
                break;
            }
        }
    }
    let (sets, _) = history_backward_induction(wrapped, gamma)?;
    let (base_sets, _) = history_backward_induction(&base, gamma)?;
    for ((obs, acts), set) in &base_sets {
        let t = obs.len() - 1;
        if *set != markov.actions[t][obs[t]] {
            report.failures.push(format!("history {obs:?}: optimal actions differ from A*_{t}"));
        }
        match sets.get(&(rename(obs)?, acts.clone())) {
            Some(w) if w == set => {}
            _ => report.failures.push(format!("history {obs:?} {acts:?}: wrapped optimal actions differ")),
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

/// Optimality preservation under a reversible modular state convolution.
pub fn check_has_optimality(mdp: &FinitePomdp, kernel: &ConvolutionKernel, gamma: &Q) -> Result<OptimalityReport> {
    let wrapped = has_induced_hdp(mdp, kernel)?;
    compare(mdp, &wrapped, &rename_by_kernel(kernel), gamma)
}

/// Optimality preservation under a `k`-step reward delay with discount `gamma`.
pub fn check_delay_optimality(mdp: &FinitePomdp, k: usize, gamma: &Q) -> Result<OptimalityReport> {
    let wrapped = delayed_hdp(mdp, k, gamma)?;
    compare(mdp, &wrapped, &|s: &[usize]| Ok(s.to_vec()), gamma)
}
