//! Property suites with fixed default instance counts and seeds, producing
//! machine-readable reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num::Zero;
use rayon::prelude::*;
use serde::Serialize;

use super::invariance::{check_invariance_hdp, check_invariance_linproc, Relation};
use super::lattice::Partition;
use super::mds::{enumerate_mds, full_conditional, MdsEnumeration, MdsMode, MdsQuery, Measure};
use super::optimality::{check_delay_optimality, check_has_optimality};
use super::returns::check_return_equivalence;
use crate::agents::{Agent, UniformRandomAgent};
use crate::env::{make_env, make_tabular_env, Environment};
use crate::error::{Error, Result};
use crate::finite::{
    all_sequences, enumerate_distribution, equivalent_hdp, fixtures, format_rational, q, random, DeterministicPolicy,
    FinitePomdp, History, Policy, Process, TrajectoryDistribution, UniformPolicy, Q,
};
use crate::rng::{mix64, RngStream};
use crate::spec::{ConvMode, EnvSpec, Family, Sign, WrapperSpec};
use crate::wrappers::{deconvolve, ConvolutionKernel, RewardDelayEnv, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Mds,
    Lattice,
    Equivalence,
    Invariance,
    Optimality,
    ReturnEquiv,
    Deconv,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Mds,
        Suite::Lattice,
        Suite::Equivalence,
        Suite::Invariance,
        Suite::Optimality,
        Suite::ReturnEquiv,
        Suite::Deconv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Mds => "mds",
            Suite::Lattice => "lattice",
            Suite::Equivalence => "thm1",
            Suite::Invariance => "invariance",
            Suite::Optimality => "optimality",
            Suite::ReturnEquiv => "return_equiv",
            Suite::Deconv => "deconv",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Parse(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Overrides the suite's main instance count.
    pub instances: Option<usize>,
    /// Overrides the episode count of simulation suites.
    pub episodes: Option<u64>,
    pub seed: u64,
    /// Restricts the mds suite to a named fixture.
    pub fixture: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub instances: usize,
    pub passed: bool,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl PropertyReport {
    fn new(name: impl Into<String>, instances: usize, failures: Vec<String>) -> Self {
        PropertyReport { name: name.into(), instances, passed: failures.is_empty(), failures, detail: None }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub properties: Vec<PropertyReport>,
}

impl SuiteReport {
    pub fn property(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.name == name)
    }
}

pub fn run_suite(suite: Suite, options: &SuiteOptions) -> Result<SuiteReport> {
    if options.fixture.is_some() && suite != Suite::Mds {
        return Err(Error::InvalidSpec(format!("suite {suite} takes no fixture")));
    }
    let properties = match suite {
        Suite::Mds => mds_suite(options)?,
        Suite::Lattice => lattice_suite(options)?,
        Suite::Equivalence => equivalence_suite(options)?,
        Suite::Invariance => invariance_suite(options)?,
        Suite::Optimality => optimality_suite(options)?,
        Suite::ReturnEquiv => return_equiv_suite(options)?,
        Suite::Deconv => deconv_suite(options)?,
    };
    Ok(SuiteReport {
        suite: suite.name().into(),
        seed: options.seed,
        passed: properties.iter().all(|p| p.passed),
        properties,
    })
}

fn instance_seed(base: u64, i: usize) -> u64 {
    mix64(base ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `check` on instances `0..n` in parallel; each returns its failure messages.
fn per_instance(n: usize, check: impl Fn(usize) -> Result<Vec<String>> + Sync) -> Result<Vec<String>> {
    let results: Vec<Result<Vec<String>>> = (0..n).into_par_iter().map(&check).collect();
    let mut failures = Vec::new();
    for r in results {
        failures.extend(r?);
    }
    Ok(failures)
}

fn fmt_set(d: &BTreeSet<usize>) -> String {
    format!("{{{}}}", d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
}

// ---------------------------------------------------------------- mds

pub const TWO_STATE_FIXTURE: &str = "two_state";
const FIXTURE_ALIASES: [&str; 2] = [TWO_STATE_FIXTURE, "fig9"];

fn power_set(n: usize) -> Vec<BTreeSet<usize>> {
    let mut out: Vec<BTreeSet<usize>> =
        (0u32..1 << n).map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect()).collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter())));
    out
}

fn two_state_fixture() -> Result<Vec<PropertyReport>> {
    let m = fixtures::two_state_multiple_mds();
    let (obs, actions) = fixtures::two_state_history();
    let e = enumerate_mds(Process::Pomdp(&m), MdsMode::Pomdp, &obs, &actions, Measure::UniformRandom)?;
    let strict = enumerate_mds(Process::Pomdp(&m), MdsMode::Pomdp, &obs, &actions, Measure::Strict)?;
    let found: BTreeSet<_> = e.all.iter().cloned().collect();
    let mut out = Vec::new();

    let expected = power_set(3);
    let mut failures = Vec::new();
    for d in &expected {
        if !found.contains(d) {
            let query = MdsQuery {
                process: Process::Pomdp(&m),
                obs: obs.clone(),
                actions: actions.clone(),
                candidate: d.clone(),
                mode: MdsMode::Pomdp,
            };
            let full = full_conditional(&query)?;
            let on_d = super::mds::event_conditional(&query)?;
            let show = |v: &[Q]| v.iter().map(format_rational).collect::<Vec<_>>().join(", ");
            failures.push(format!(
                "{} is not an MDS: P(s_3 | history) = ({}) but P(s_3 | {}) = ({})",
                fmt_set(d),
                show(&full),
                fmt_set(d),
                show(&on_d)
            ));
        }
    }
    for d in &e.all {
        if !expected.contains(d) {
            failures.push(format!("unexpected MDS {}", fmt_set(d)));
        }
    }
    out.push(
        PropertyReport::new("fixture_power_set", 1, failures)
            .with_detail(format!("found {}", e.all.iter().map(fmt_set).collect::<Vec<_>>().join(" "))),
    );

    let singletons: Vec<String> = (0..3)
        .map(|i| BTreeSet::from([i]))
        .filter(|d| !found.contains(d))
        .map(|d| format!("{} is not an MDS", fmt_set(&d)))
        .collect();
    out.push(PropertyReport::new("fixture_singletons", 1, singletons));

    let mut sel = Vec::new();
    if e.minimum != Some(BTreeSet::from([0])) {
        sel.push(format!("minimum selection {:?}", e.minimum));
    }
    if e.closest != Some(BTreeSet::from([2])) {
        sel.push(format!("closest selection {:?}", e.closest));
    }
    out.push(PropertyReport::new("fixture_selections", 1, sel).with_detail("minimum {0}, closest {2}"));

    let agree = if strict.all == e.all { Vec::new() } else { vec!["strict measure disagrees".into()] };
    out.push(PropertyReport::new("fixture_strict_measure", 1, agree));
    Ok(out)
}

/// A positive-probability history of `process` under uniformly random actions, picked by
/// `seed`.
fn sample_history(process: Process<'_>, seed: u64) -> Result<History> {
    let dist = enumerate_distribution(process, &UniformPolicy)?;
    let positive: Vec<&History> = dist.probs.iter().filter(|(_, p)| !p.is_zero()).map(|(h, _)| h).collect();
    let mut rng = RngStream::new(seed, 2);
    Ok(positive[rng.below(positive.len())].clone())
}

/// Supersets of every MDS must be MDSs.
fn superset_failures(e: &MdsEnumeration, t: usize, tag: &str) -> Vec<String> {
    let found: BTreeSet<_> = e.all.iter().cloned().collect();
    let mut out = Vec::new();
    for d in &e.all {
        for extra in 0..=t {
            let mut bigger = d.clone();
            if bigger.insert(extra) && !found.contains(&bigger) {
                out.push(format!("{tag}: {} is an MDS but {} is not", fmt_set(d), fmt_set(&bigger)));
            }
        }
    }
    out
}

fn random_small_mdp(seed: u64) -> FinitePomdp {
    let mut rng = RngStream::new(seed, 3);
    let states = 1 + rng.below(3);
    let actions = 1 + rng.below(2);
    let rewards = 1 + rng.below(2);
    let horizon = 1 + rng.below(3);
    random::random_mdp(seed, states, actions, rewards, horizon, rng.below(2) == 0)
}

fn mds_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    if let Some(name) = &options.fixture {
        if !FIXTURE_ALIASES.contains(&name.as_str()) {
            return Err(Error::InvalidSpec(format!("unknown fixture {name:?}; known: {TWO_STATE_FIXTURE}")));
        }
        return two_state_fixture();
    }
    let mut out = two_state_fixture()?;

    let n = options.instances.unwrap_or(100);
    let results: Vec<Result<(Vec<String>, Vec<String>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = instance_seed(options.seed, i);
            let m = random_small_mdp(seed);
            let h = sample_history(Process::Pomdp(&m), seed)?;
            let (mut closure, mut singleton) = (Vec::new(), Vec::new());
            for t in 0..m.horizon {
                let e = enumerate_mds(
                    Process::Pomdp(&m),
                    MdsMode::Pomdp,
                    &h.obs[..=t],
                    &h.actions[..=t],
                    Measure::UniformRandom,
                )?;
                closure.extend(superset_failures(&e, t, &format!("seed {seed} t={t}")));
                if !e.all.contains(&BTreeSet::from([t])) {
                    singleton.push(format!("seed {seed}: {{{t}}} is not an MDS"));
                }
            }
            Ok((closure, singleton))
        })
        .collect();
    let (mut closure, mut singleton) = (Vec::new(), Vec::new());
    for r in results {
        let (c, s) = r?;
        closure.extend(c);
        singleton.extend(s);
    }
    out.push(
        PropertyReport::new("superset_closure", n, closure)
            .with_detail("random MDPs, every prefix of a sampled history"),
    );
    out.push(PropertyReport::new("singleton_t_for_mdps", n, singleton));

    let pairs = 25;
    let inclusion = per_instance(pairs, |i| {
        let seed = instance_seed(options.seed ^ 0xB2, i);
        let p = random::random_pomdp(seed, &random::Shape::small(seed));
        let h = sample_history(Process::Pomdp(&p), seed)?;
        let hdp = equivalent_hdp(&p)?;
        let t = p.horizon - 1;
        let (obs, acts) = (&h.obs[..=t], &h.actions[..=t]);
        let pomdp_mode = enumerate_mds(Process::Pomdp(&p), MdsMode::Pomdp, obs, acts, Measure::UniformRandom)?;
        let hdp_mode = enumerate_mds(Process::Hdp(&hdp), MdsMode::Hdp, obs, acts, Measure::UniformRandom)?;
        Ok(pomdp_mode
            .all
            .iter()
            .filter(|d| !hdp_mode.all.contains(d))
            .map(|d| format!("seed {seed}: {} is a POMDP-mode MDS but not an HDP-mode MDS", fmt_set(d)))
            .collect())
    })?;
    out.push(PropertyReport::new("pomdp_mds_within_hdp_mds", pairs, inclusion));
    Ok(out)
}

// ---------------------------------------------------------------- lattice

fn random_partition(rng: &mut RngStream, n: usize) -> Partition {
    let blocks = 1 + rng.below(n);
    Partition::from_labels(&(0..n).map(|_| rng.below(blocks)).collect::<Vec<_>>())
}

/// Meet and join by direct definition: pairs related in both, and the transitive closure
/// of pairs related in either.
#[allow(clippy::needless_range_loop)]
fn naive_meet_join(a: &Partition, b: &Partition) -> (Partition, Partition) {
    let n = a.len();
    let meet = Partition::from_keys((0..n).map(|i| (a.labels()[i], b.labels()[i])));
    let mut rel = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            rel[i][j] = a.same_block(i, j) || b.same_block(i, j);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if rel[i][k] && rel[k][j] {
                    rel[i][j] = true;
                }
            }
        }
    }
    let join = Partition::from_keys((0..n).map(|i| rel[i].iter().position(|&x| x).expect("reflexive")));
    (meet, join)
}

fn lattice_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let n_inst = options.instances.unwrap_or(200);
    let mut names: Vec<(&str, Vec<String>)> = [
        "commutativity",
        "associativity",
        "absorption",
        "meet_is_infimum",
        "join_is_supremum",
        "matches_direct_definition",
    ]
    .into_iter()
    .map(|s| (s, Vec::new()))
    .collect();
    for i in 0..n_inst {
        let seed = instance_seed(options.seed, i);
        let mut rng = RngStream::new(seed, 4);
        let n = 1 + rng.below(8);
        let (a, b, c) = (random_partition(&mut rng, n), random_partition(&mut rng, n), random_partition(&mut rng, n));
        let tag = |what: &str| format!("seed {seed} (n={n}): {what}");
        let (ab_m, ab_j) = (a.meet(&b)?, a.join(&b)?);
        if ab_m != b.meet(&a)? || ab_j != b.join(&a)? {
            names[0].1.push(tag("a∧b != b∧a or a∨b != b∨a"));
        }
        if a.meet(&b.meet(&c)?)? != ab_m.meet(&c)? || a.join(&b.join(&c)?)? != ab_j.join(&c)? {
            names[1].1.push(tag("not associative"));
        }
        if a.meet(&ab_j)? != a || a.join(&ab_m)? != a {
            names[2].1.push(tag("absorption fails"));
        }
        // c below both iff c below the meet; c above both iff c above the join
        let lower = c.refines(&a)? && c.refines(&b)?;
        if !ab_m.refines(&a)? || !ab_m.refines(&b)? || lower != c.refines(&ab_m)? {
            names[3].1.push(tag("meet is not the greatest lower bound"));
        }
        let upper = a.refines(&c)? && b.refines(&c)?;
        if !a.refines(&ab_j)? || !b.refines(&ab_j)? || upper != ab_j.refines(&c)? {
            names[4].1.push(tag("join is not the least upper bound"));
        }
        let (m, j) = naive_meet_join(&a, &b);
        if m != ab_m || j != ab_j {
            names[5].1.push(tag("differs from the direct definition"));
        }
    }
    Ok(names.into_iter().map(|(name, f)| PropertyReport::new(name, n_inst, f)).collect())
}

// ---------------------------------------------------------------- equivalence

fn positive(mut d: TrajectoryDistribution) -> TrajectoryDistribution {
    d.probs.retain(|_, p| !p.is_zero());
    d
}

/// Sums out rewards, leaving the law of `(z_{0:T}, a_{0:T-1})`.
fn observation_action_law(d: &TrajectoryDistribution) -> BTreeMap<(Vec<usize>, Vec<usize>), Q> {
    let mut out: BTreeMap<_, Q> = BTreeMap::new();
    for (h, p) in &d.probs {
        *out.entry((h.obs.clone(), h.actions.clone())).or_insert_with(Q::zero) += p;
    }
    out.retain(|_, p| !p.is_zero());
    out
}

#[derive(Default)]
struct EquivalenceOutcome {
    joint: Vec<String>,
    observation_action: Vec<String>,
    one_step: Vec<String>,
    reward_free: Vec<String>,
    reward_free_instances: usize,
}

fn equivalence_instance(seed: u64) -> Result<EquivalenceOutcome> {
    let shape = random::Shape::small(seed);
    let p = random::random_pomdp(seed, &shape);
    let hdp = equivalent_hdp(&p)?;
    let mut out = EquivalenceOutcome { reward_free_instances: usize::from(shape.rewards == 1), ..Default::default() };
    let mut policies: Vec<(String, Box<dyn Policy>)> = Vec::new();
    // Under a deterministic policy P(h) is the open-loop probability of h when the policy
    // follows h and 0 otherwise, so the open-loop plans already cover every deterministic
    // policy; reactive and history-hashed ones are run as literal checks.
    for plan in all_sequences(p.n_actions, p.horizon) {
        policies
            .push((format!("open-loop plan {plan:?}"), Box::new(DeterministicPolicy(move |h: &History| plan[h.t()]))));
    }
    for table in all_sequences(p.n_actions, p.n_obs) {
        policies.push((
            format!("reactive policy {table:?}"),
            Box::new(DeterministicPolicy(move |h: &History| table[h.obs[h.t()]])),
        ));
    }
    for salt in 0..8u64 {
        let n_actions = p.n_actions as u64;
        let policy = DeterministicPolicy(move |h: &History| {
            let mut x = salt;
            for v in h.obs.iter().chain(&h.actions) {
                x = mix64(x ^ *v as u64);
            }
            (x % n_actions) as usize
        });
        policies.push((format!("history-dependent policy {salt}"), Box::new(policy)));
    }
    policies.push(("uniform policy".into(), Box::new(UniformPolicy)));
    for (name, policy) in &policies {
        let a = positive(enumerate_distribution(Process::Pomdp(&p), policy.as_ref())?);
        let b = positive(enumerate_distribution(Process::Hdp(&hdp), policy.as_ref())?);
        if a != b {
            let msg = format!("seed {seed}: joint (z, a, r) law differs under {name}");
            if shape.rewards == 1 {
                out.reward_free.push(msg.clone());
            }
            if out.joint.is_empty() {
                out.joint.push(msg);
            }
        }
        if observation_action_law(&a) != observation_action_law(&b) {
            out.observation_action.push(format!("seed {seed}: (z, a) law differs under {name}"));
        }
    }
    // One-step conditionals P(z_{t+1}, r_t | z_{0:t}, a_{0:t}) read off the POMDP's own
    // joint law under uniform actions, against the constructed table.
    let joint = enumerate_distribution(Process::Pomdp(&p), &UniformPolicy)?;
    let n_r = p.n_rewards();
    for t in 0..p.horizon {
        let mut rows: BTreeMap<(Vec<usize>, Vec<usize>), Vec<Q>> = BTreeMap::new();
        for (h, prob) in &joint.probs {
            let row = rows
                .entry((h.obs[..=t].to_vec(), h.actions[..=t].to_vec()))
                .or_insert_with(|| vec![Q::zero(); p.n_obs * n_r]);
            row[h.obs[t + 1] * n_r + h.rewards[t]] += prob;
        }
        for ((obs, acts), row) in rows {
            let total: Q = row.iter().sum();
            if total.is_zero() {
                continue;
            }
            let expected: Vec<Q> = row.into_iter().map(|x| x / &total).collect();
            if hdp.transition(&obs, &acts) != Some(expected.as_slice()) {
                out.one_step.push(format!("seed {seed}: T' differs at {obs:?} {acts:?}"));
            }
        }
    }
    Ok(out)
}

fn equivalence_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let n = options.instances.unwrap_or(50);
    let results: Vec<Result<EquivalenceOutcome>> =
        (0..n).into_par_iter().map(|i| equivalence_instance(instance_seed(options.seed, i))).collect();
    let mut all = EquivalenceOutcome::default();
    for r in results {
        let r = r?;
        all.joint.extend(r.joint);
        all.observation_action.extend(r.observation_action);
        all.one_step.extend(r.one_step);
        all.reward_free.extend(r.reward_free);
        all.reward_free_instances += r.reward_free_instances;
    }
    let mismatched = all.joint.len();
    Ok(vec![
        PropertyReport::new("joint_trajectory_law", n, all.joint).with_detail(format!(
            "{mismatched} of {n} instances differ; the constructed table conditions on (z, a) only, so reward \
             histories that carry information about the hidden state are not reproduced"
        )),
        PropertyReport::new("observation_action_law", n, all.observation_action),
        PropertyReport::new("one_step_conditionals", n, all.one_step),
        PropertyReport::new("reward_free_joint_law", all.reward_free_instances, all.reward_free),
    ])
}

// ---------------------------------------------------------------- invariance

/// The declared relation and strictly finer variants that the construction must violate.
fn label_cases(family: Family, spec: &EnvSpec) -> (Relation, Vec<Relation>) {
    let k = spec.order_k;
    let time = Relation::TimeBlock(spec.segment_len_n);
    let traj = Relation::InitialBucket(spec.num_intervals_m);
    let last = |j: usize| Relation::LastK(j);
    let with = |j: usize, extra: &[Relation]| Relation::meet_of(std::iter::once(last(j)).chain(extra.iter().cloned()));
    match family {
        Family::AllEqOne | Family::AllEq => (last(k), vec![last(k - 1)]),
        Family::TimeEq => (with(k, std::slice::from_ref(&time)), vec![last(k), with(k - 1, &[time])]),
        Family::TrajEq => (with(k, std::slice::from_ref(&traj)), vec![last(k), with(k - 1, &[traj])]),
        _ => (
            with(k, &[time.clone(), traj.clone()]),
            vec![
                last(k),
                with(k, std::slice::from_ref(&time)),
                with(k, std::slice::from_ref(&traj)),
                with(k - 1, &[time, traj]),
            ],
        ),
    }
}

fn invariance_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let mut declared = Vec::new();
    let mut finer = Vec::new();
    let mut cases = 0;
    for family in Family::LINPROC {
        for k in 1..=7 {
            let spec = EnvSpec::linproc(family, k).with_seed(options.seed);
            let crate_label = crate::linproc::invariance_class(&spec)?;
            let (label, stricter) = label_cases(family, &spec);
            cases += 1;
            if crate_label != label {
                declared.push(format!("{} k={k}: declared {crate_label}, expected {label}", family.name()));
            }
            if !check_invariance_linproc(&spec, &label)? {
                declared.push(format!("{} k={k}: fails its label {label}", family.name()));
            }
            for r in stricter {
                if check_invariance_linproc(&spec, &r)? {
                    finer.push(format!("{} k={k}: unexpectedly invariant under {r}", family.name()));
                }
            }
        }
    }
    let n = options.instances.unwrap_or(20);
    let finite = per_instance(n, |i| {
        let seed = instance_seed(options.seed, i);
        let mut out = Vec::new();
        // one-state processes are bandits: invariant under the trivial relation
        let bandit = equivalent_hdp(&random::random_mdp(seed, 1, 2, 2, 3, true))?;
        let r = check_invariance_hdp(&bandit, &Relation::Top);
        if !r.invariant {
            out.push(format!("seed {seed}: bandit not ≃^⊤-invariant ({:?})", r.counterexample));
        }
        let mdp = equivalent_hdp(&random::random_mdp(seed, 3, 2, 2, 3, true))?;
        let r = check_invariance_hdp(&mdp, &Relation::LastK(1));
        if !r.invariant {
            out.push(format!("seed {seed}: stationary MDP not ≃_1-invariant ({:?})", r.counterexample));
        }
        Ok(out)
    })?;
    Ok(vec![
        PropertyReport::new("linproc_declared_labels", cases, declared),
        PropertyReport::new("linproc_finer_labels_fail", cases, finer),
        PropertyReport::new("tabular_labels", n, finite),
    ])
}

// ---------------------------------------------------------------- optimality

fn random_unit_kernel(rng: &mut RngStream, n: usize) -> ConvolutionKernel {
    let units: Vec<u64> = (1..n as u64).filter(|&w| crate::spec::gcd(w, n as u64) == 1).collect();
    let len = 1 + rng.below(3);
    let mut w = vec![units[rng.below(units.len())]];
    w.extend((1..len).map(|_| rng.below(n) as u64));
    ConvolutionKernel::modular(w, n as u64).expect("w_0 is a unit")
}

fn optimality_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let n = options.instances.unwrap_or(20);
    let results: Vec<Result<(Vec<String>, Vec<String>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = instance_seed(options.seed, i);
            let mut rng = RngStream::new(seed, 5);
            let states = 2 + rng.below(2);
            let mdp = random::random_mdp(seed, states, 2, 2, 3, rng.below(2) == 0);
            let kernel = random_unit_kernel(&mut rng, states);
            let has = check_has_optimality(&mdp, &kernel, &q(1, 1))?;
            let has_f = has.failures.iter().map(|f| format!("seed {seed} kernel {kernel:?}: {f}")).collect();
            let mut delay_f = Vec::new();
            for k in [1, 2] {
                for gamma in [q(1, 1), q(9, 10)] {
                    let r = check_delay_optimality(&mdp, k, &gamma)?;
                    delay_f.extend(r.failures.iter().map(|f| format!("seed {seed} k={k} gamma={gamma}: {f}")));
                }
            }
            Ok((has_f, delay_f))
        })
        .collect();
    let (mut has, mut delay) = (Vec::new(), Vec::new());
    for r in results {
        let (a, b) = r?;
        has.extend(a);
        delay.extend(b);
    }
    Ok(vec![
        PropertyReport::new("state_conv_preserves_optimal_set", n, has),
        PropertyReport::new("reward_delay_preserves_optimal_set", n, delay)
            .with_detail("k in {1, 2}, gamma in {1, 9/10}"),
    ])
}

// ---------------------------------------------------------------- return_equiv

pub const DELAYS: [usize; 5] = [0, 8, 16, 24, 32];
pub const GAMMAS: [f64; 2] = [0.9, 1.0];

fn return_equiv_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let episodes = options.episodes.unwrap_or(1000);
    let spec = EnvSpec::reward_when_inside().with_seed(options.seed);
    let mut combos: Vec<(usize, f64)> = DELAYS.iter().flat_map(|&k| GAMMAS.iter().map(move |&g| (k, g))).collect();
    combos.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<PropertyReport> = combos
        .par_iter()
        .map(|&(k, gamma)| {
            let mut base = make_env(&spec)?;
            let mut wrapped = RewardDelayEnv::new(make_env(&spec)?, k, gamma)?;
            let r = check_return_equivalence(base.as_mut(), &mut wrapped, episodes, gamma, options.seed)?;
            let mut p = PropertyReport::new(format!("delay_{k}_gamma_{gamma}"), episodes as usize, r.failures.clone())
                .with_detail(format!(
                    "max |return diff| = {:e}, observation mismatches = {}",
                    r.max_return_diff, r.obs_mismatches
                ));
            p.passed = r.passed;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    // At gamma = 0.9 a 256-step tail is discounted below the tolerance (0.9^248 ~ 5e-12),
    // so that case runs on a 64-step horizon.
    let mut undetected = Vec::new();
    for (gamma, horizon) in [(1.0, spec.horizon_t), (0.9, 64)] {
        let mut short = spec.clone();
        short.horizon_t = horizon;
        let mut base = make_env(&short)?;
        let mut broken = RewardDelayEnv::without_catch_up(make_env(&short)?, 8, gamma)?;
        let r = check_return_equivalence(base.as_mut(), &mut broken, episodes, gamma, options.seed)?;
        if r.passed {
            undetected.push(format!("gamma {gamma}, T={horizon}: missing terminal catch-up went unnoticed"));
        }
    }
    out.push(
        PropertyReport::new("broken_delay_detected", 2, undetected)
            .with_detail("k=8; gamma 1 at T=256, gamma 0.9 at T=64"),
    );
    Ok(out)
}

// ---------------------------------------------------------------- deconv

pub const DECONV_TOLERANCE: f64 = 1e-9;

/// Plays `episodes` paired episodes and returns the hidden and the wrapped observation
/// streams of each.
fn paired_streams(
    base: &mut dyn Environment,
    wrapped: &mut dyn Environment,
    episodes: u64,
    seed: u64,
    mut visit: impl FnMut(u64, Vec<Vec<f64>>, Vec<Vec<f64>>) -> Result<()>,
) -> Result<()> {
    let mut agent = UniformRandomAgent::new(base.num_actions(), seed);
    for ep in 0..episodes {
        agent.reset(ep);
        let (mut hidden, mut seen) = (vec![base.reset(ep)], vec![wrapped.reset(ep)]);
        loop {
            let a = agent.act(hidden.last().expect("nonempty"))?;
            let (x, y) = (base.step(a)?, wrapped.step(a)?);
            if x.done {
                break;
            }
            hidden.push(x.observation);
            seen.push(y.observation);
        }
        visit(ep, hidden, seen)?;
    }
    Ok(())
}

fn deconv_suite(options: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let episodes = options.episodes.unwrap_or(1000);
    let spec = EnvSpec::reward_when_inside().with_seed(options.seed);
    let mut presets = Vec::new();
    for level in 0..=5 {
        for sign in [Sign::Positive, Sign::Negative] {
            presets.push((level, sign));
        }
    }
    let mut out: Vec<PropertyReport> = presets
        .par_iter()
        .map(|&(level, sign)| {
            let w = WrapperSpec::state_conv_preset(level, sign)?;
            let kernel = ConvolutionKernel::from_wrapper(&w)?;
            let mut base = make_env(&spec)?;
            let mut wrapped = make_env(&spec.clone().with_wrapper(w))?;
            let mut max_err = 0.0f64;
            paired_streams(base.as_mut(), wrapped.as_mut(), episodes, options.seed, |_, hidden, seen| {
                let Sequence::Real(rec) = deconvolve(&kernel, &Sequence::Real(seen))? else {
                    return Err(Error::ArithmeticModeMismatch);
                };
                for (r, h) in rec.iter().zip(&hidden) {
                    for (x, y) in r.iter().zip(h) {
                        max_err = max_err.max((x - y).abs());
                    }
                }
                Ok(())
            })?;
            let sign_name = if sign == Sign::Positive { "p" } else { "n" };
            let failures =
                if max_err <= DECONV_TOLERANCE { Vec::new() } else { vec![format!("max abs error {max_err:e}")] };
            Ok(PropertyReport::new(format!("level_{level}_{sign_name}"), episodes as usize, failures)
                .with_detail(format!("max abs error {max_err:e}")))
        })
        .collect::<Result<_>>()?;

    // modular kernels on a fully observed 5-state process are exactly reversible
    let mut failures = Vec::new();
    let kernels: [&[u64]; 3] = [&[1, 1], &[2, 3, 1], &[4, 0, 0, 2]];
    let mdp = random::random_mdp(options.seed, 5, 2, 2, 1, true);
    let base_spec = EnvSpec {
        family: Family::FiniteTabular,
        order_k: 0,
        horizon_t: 64,
        num_intervals_m: 2,
        segment_len_n: 1,
        wrappers: Vec::new(),
        seed: options.seed,
    };
    let modular_episodes = episodes.min(200);
    for w in kernels {
        let wrapper = WrapperSpec::StateConv { w: w.iter().map(|&x| x as f64).collect(), mode: ConvMode::Mod(5) };
        let kernel = ConvolutionKernel::from_wrapper(&wrapper)?;
        let mut base = make_tabular_env(&base_spec, &mdp)?;
        let mut wrapped = make_tabular_env(&base_spec.clone().with_wrapper(wrapper), &mdp)?;
        paired_streams(base.as_mut(), wrapped.as_mut(), modular_episodes, options.seed, |ep, hidden, seen| {
            let seen = seen.iter().map(|z| z[0] as u64).collect();
            let Sequence::Modular(rec) = deconvolve(&kernel, &Sequence::Modular(seen))? else {
                return Err(Error::ArithmeticModeMismatch);
            };
            let hidden: Vec<u64> = hidden.iter().map(|s| s[0] as u64).collect();
            if rec != hidden && failures.len() < 10 {
                failures.push(format!("kernel {w:?} episode {ep}: recovered states differ"));
            }
            Ok(())
        })?;
    }
    out.push(PropertyReport::new("modular_tabular_exact", kernels.len() * modular_episodes as usize, failures));
    Ok(out)
}
