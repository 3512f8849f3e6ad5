//! Equivalence relations on histories and transition-invariance checks.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::lattice::Partition;
use crate::error::{Error, Result};
use crate::finite::{FiniteHdp, HistoryKey};
use crate::linproc::{interval_of, CoefficientSchedule};
use crate::spec::EnvSpec;

/// A relation on histories `h_t = (z_{0:t}, a_{0:t})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Relation {
    /// All histories equivalent.
    Top,
    /// Only identical histories equivalent.
    Bottom,
    /// Equal most recent `k` observation-action pairs (`≃_k`).
    LastK(usize),
    /// Equal time block `⌊t/n⌋` (`≃^n`).
    TimeBlock(usize),
    /// Equal initial-observation interval `⌊m z_0⌋` (`≃^{⌊m z_0⌋}`).
    InitialBucket(usize),
    /// Intersection of the parts.
    Meet(Vec<Relation>),
}

impl Relation {
    /// Flattening meet; a single part is returned as is.
    pub fn meet_of(parts: impl IntoIterator<Item = Relation>) -> Relation {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Relation::Meet(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Relation::Meet(flat)
        }
    }

    pub fn parts(&self) -> Vec<&Relation> {
        match self {
            Relation::Meet(ps) => ps.iter().flat_map(|p| p.parts()).collect(),
            other => vec![other],
        }
    }

    /// A key such that two histories are compared iff their keys are equal. The current
    /// action `a_t` is always part of the key: transitions are compared action by action,
    /// so a bandit (one state, action-dependent rewards) is `≃^⊤`-invariant. For
    /// `InitialBucket(m)` on `n_obs` discrete observations the bucket is `⌊m z_0 / n_obs⌋`.
    pub fn key(&self, history: &HistoryKey, n_obs: usize) -> Vec<Vec<usize>> {
        let current = vec![*history.actions.last().expect("nonempty history")];
        std::iter::once(current)
            .chain(self.parts().into_iter().map(|p| match p {
                Relation::Top => vec![],
                Relation::Bottom => {
                    let mut k = history.obs.clone();
                    k.push(usize::MAX);
                    k.extend(&history.actions);
                    k
                }
                Relation::LastK(k) => {
                    let len = history.obs.len();
                    let from = len - (*k).min(len);
                    history.obs[from..].iter().zip(&history.actions[from..]).flat_map(|(&z, &a)| [z, a]).collect()
                }
                Relation::TimeBlock(n) => vec![history.t() / n.max(&1)],
                Relation::InitialBucket(m) => vec![history.obs[0] * m / n_obs],
                Relation::Meet(_) => unreachable!("parts are flat"),
            }))
            .collect()
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Top => write!(f, "≃^⊤"),
            Relation::Bottom => write!(f, "≃^⊥"),
            Relation::LastK(k) => write!(f, "≃_{k}"),
            Relation::TimeBlock(n) => write!(f, "≃^{n}"),
            Relation::InitialBucket(m) => write!(f, "≃^{{⌊{m}z_0⌋}}"),
            Relation::Meet(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ∧ ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub invariant: bool,
    pub histories: usize,
    pub classes: usize,
    /// Two related histories with different transitions, if any.
    pub counterexample: Option<(String, String)>,
}

/// Checks `T(.|h) = T(.|h')` for every related pair of histories that have entries.
pub fn check_invariance_hdp(hdp: &FiniteHdp, relation: &Relation) -> InvarianceReport {
    let mut classes: HashMap<Vec<Vec<usize>>, (&HistoryKey, &[crate::finite::Q])> = HashMap::new();
    let mut counterexample = None;
    for (key, row) in hdp.entries() {
        let rk = relation.key(key, hdp.n_obs);
        match classes.get(&rk) {
            Some((first, first_row)) => {
                if *first_row != row && counterexample.is_none() {
                    counterexample = Some((format!("{first:?}"), format!("{key:?}")));
                }
            }
            None => {
                classes.insert(rk, (key, row));
            }
        }
    }
    InvarianceReport {
        invariant: counterexample.is_none(),
        histories: hdp.len(),
        classes: classes.len(),
        counterexample,
    }
}

/// The relation restricted to the HDP's histories, as a partition in entry order.
pub fn relation_partition(hdp: &FiniteHdp, relation: &Relation) -> Partition {
    Partition::from_keys(hdp.entries().map(|(k, _)| relation.key(k, hdp.n_obs)))
}

/// Invariance of a LinProc environment, checked on its generator.
///
/// The transition at step `t` is a function of the window `z_{t-k+1:t}` (its length
/// `min(t+1, k)`) and of the coefficients picked by `(⌊t/n⌋, ⌊m z_0⌋)`. A relation is
/// respected iff it fixes the whole window (it contains `≃_j` with `j >= k`, or `k = 0`)
/// and related `(t, z_0)` points always select the same coefficients. Points are `t` in
/// `0..T` and `z_0` on a grid fine enough to separate every bucket of either relation.
pub fn check_invariance_linproc(spec: &EnvSpec, relation: &Relation) -> Result<bool> {
    if !spec.family.is_linproc() {
        return Err(Error::NotLinProc(spec.family.name().into()));
    }
    spec.validate()?;
    let parts = relation.parts();
    if parts.contains(&&Relation::Bottom) {
        return Ok(true);
    }
    let k = spec.order_k;
    let window = parts.iter().filter_map(|p| if let Relation::LastK(j) = p { Some(*j) } else { None }).max();
    if k > 0 && window.is_none_or(|j| j < k) {
        return Ok(false);
    }
    let schedule = CoefficientSchedule::for_spec(spec)?;
    let m = spec.num_intervals_m;
    let mut grid = m;
    for p in &parts {
        if let Relation::InitialBucket(m2) = p {
            grid = grid * m2 / crate::spec::gcd(grid as u64, *m2 as u64) as usize;
        }
    }
    let grid = 2 * grid;
    // signature of the transition at a point; related points must agree
    let mut seen: HashMap<Vec<usize>, Vec<u32>> = HashMap::new();
    for t in 0..spec.horizon_t {
        for g in 0..grid {
            let z0 = (g as f64 + 0.5) / grid as f64;
            let seg = t / spec.segment_len_n;
            let bucket = interval_of(z0, m);
            let window_len = (t + 1).min(k);
            let mut sig = schedule.numerators(seg, bucket)?;
            sig.truncate(window_len);
            let mut rel_key = vec![window_len];
            for p in &parts {
                match p {
                    Relation::TimeBlock(n) => rel_key.push(t / (*n).max(1)),
                    Relation::InitialBucket(m2) => rel_key.push(interval_of(z0, *m2)),
                    Relation::LastK(j) if *j > t => {
                        // the key still holds the whole history, so t itself is fixed
                        rel_key.push(usize::MAX - t)
                    }
                    _ => {}
                }
            }
            match seen.get(&rel_key) {
                Some(prev) if *prev != sig => return Ok(false),
                Some(_) => {}
                None => {
                    seen.insert(rel_key, sig);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite::{equivalent_hdp, random, FinitePomdp};
    use crate::spec::Family;

    #[test]
    fn display_forms() {
        let r = Relation::meet_of([Relation::LastK(2), Relation::TimeBlock(8), Relation::InitialBucket(8)]);
        assert_eq!(r.to_string(), "≃_2 ∧ ≃^8 ∧ ≃^{⌊8z_0⌋}");
        assert_eq!(Relation::Top.to_string(), "≃^⊤");
        assert_eq!(Relation::meet_of([Relation::Top]), Relation::Top);
    }

    #[test]
    fn stationary_mdp_is_last_one_invariant() {
        for seed in 0..10 {
            let m = random::random_mdp(seed, 3, 2, 2, 3, true);
            let h = equivalent_hdp(&m).unwrap();
            assert!(check_invariance_hdp(&h, &Relation::LastK(1)).invariant);
            assert!(check_invariance_hdp(&h, &Relation::Bottom).invariant);
        }
    }

    #[test]
    fn single_state_process_is_top_invariant() {
        let shape = random::Shape { states: 1, actions: 2, obs: 3, rewards: 2, horizon: 3, stationary: true };
        let p: FinitePomdp = random::random_pomdp(4, &shape);
        let h = equivalent_hdp(&p).unwrap();
        assert!(check_invariance_hdp(&h, &Relation::Top).invariant);
        assert_eq!(relation_partition(&h, &Relation::Top).num_blocks(), 2);
    }

    #[test]
    fn nonstationary_mdp_breaks_last_one() {
        let found = (0..20).any(|seed| {
            let m = random::random_mdp(seed, 2, 2, 2, 3, false);
            !check_invariance_hdp(&equivalent_hdp(&m).unwrap(), &Relation::LastK(1)).invariant
        });
        assert!(found);
    }

    #[test]
    fn relation_partition_meet_matches_lattice_meet() {
        let m = random::random_mdp(1, 3, 2, 2, 3, false);
        let h = equivalent_hdp(&m).unwrap();
        let a = Relation::LastK(1);
        let b = Relation::TimeBlock(2);
        let meet = relation_partition(&h, &Relation::meet_of([a.clone(), b.clone()]));
        assert_eq!(meet, relation_partition(&h, &a).meet(&relation_partition(&h, &b)).unwrap());
    }

    #[test]
    fn linproc_labels_and_coarser_relations() {
        for family in Family::LINPROC {
            for k in 1..=8 {
                let spec = EnvSpec::linproc(family, k);
                let label = crate::linproc::invariance_class(&spec).unwrap();
                assert!(check_invariance_linproc(&spec, &label).unwrap(), "{family:?} {k}");
                assert!(!check_invariance_linproc(&spec, &Relation::LastK(k - 1)).unwrap());
                assert!(check_invariance_linproc(&spec, &Relation::Bottom).unwrap());
            }
        }
        let time = EnvSpec::linproc(Family::TimeEq, 2);
        assert!(!check_invariance_linproc(&time, &Relation::LastK(2)).unwrap());
        let traj = EnvSpec::linproc(Family::TrajEq, 2);
        assert!(!check_invariance_linproc(&traj, &Relation::LastK(2)).unwrap());
    }
}
