//! The seeded reset/step interface and the non-autoregressive base environments.

use crate::agents::Agent;
use crate::error::{Error, Result};
use crate::finite::{FinitePomdp, Q};
use crate::linproc::{interval_of, LinProcEnv};
use crate::rng::RngStream;
use crate::spec::{ConvMode, EnvSpec, Family, WrapperSpec};
use crate::trajectory::{Step, Trajectory};
use crate::wrappers::{ConvolutionKernel, RewardDelayEnv, StateConvEnv};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A fixed-horizon episodic environment. `reset(i)` starts episode `i`; the pair
/// `(seed, i)` fully determines the episode under a deterministic policy. `done` is
/// reported exactly on the step taken at `t = horizon - 1`.
pub trait Environment: Send {
    fn reset(&mut self, episode: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn reset(&mut self, episode: u64) -> Vec<f64> {
        (**self).reset(episode)
    }
    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        (**self).step(action)
    }
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
}

/// States are i.i.d. `U(0,1)`; the reward is 1 for naming the interval of the
/// *current* state.
pub struct RewardWhenInsideEnv {
    seed: u64,
    horizon: usize,
    m: usize,
    rng: RngStream,
    state: Option<f64>,
    t: usize,
}

impl RewardWhenInsideEnv {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(RewardWhenInsideEnv {
            seed: spec.seed,
            horizon: spec.horizon_t,
            m: spec.num_intervals_m,
            rng: RngStream::new(spec.seed, 0),
            state: None,
            t: 0,
        })
    }
}

impl Environment for RewardWhenInsideEnv {
    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.rng = RngStream::new(self.seed, episode);
        self.t = 0;
        let s = self.rng.uniform01();
        self.state = Some(s);
        vec![s]
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let s = self.state.ok_or(Error::NotReset)?;
        if self.t >= self.horizon {
            return Err(Error::EpisodeFinished);
        }
        if action >= self.m {
            return Err(Error::ActionOutOfRange { action, num_actions: self.m });
        }
        let reward = if action == interval_of(s, self.m) { 1.0 } else { 0.0 };
        self.t += 1;
        let next = self.rng.uniform01();
        self.state = Some(next);
        Ok(StepOutcome { observation: vec![next], reward, done: self.t == self.horizon })
    }

    fn num_actions(&self) -> usize {
        self.m
    }

    fn horizon(&self) -> usize {
        self.horizon
    }
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn sample(cdf: &[f64], u: f64) -> usize {
    // last index with positive mass absorbs rounding slack
    let total = *cdf.last().unwrap_or(&1.0);
    let u = u * total;
    cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
        let mut i = cdf.len() - 1;
        while i > 0 && cdf[i] == cdf[i - 1] {
            i -= 1;
        }
        i
    })
}

/// Simulates a finite tabular POMDP. Observations are the observation index as a
/// one-element real vector; rewards are the support values as `f64`.
pub struct TabularEnv {
    seed: u64,
    horizon: usize,
    n_actions: usize,
    n_obs: usize,
    rho0_cdf: Vec<f64>,
    // [t][s][a] over (s', r), [t][s] over z
    transition_cdf: Vec<Vec<Vec<Vec<f64>>>>,
    observation_cdf: Vec<Vec<Vec<f64>>>,
    reward_values: Vec<f64>,
    n_rewards: usize,
    rng: RngStream,
    hidden: Option<usize>,
    t: usize,
}

fn to_f64(q: &Q) -> f64 {
    use num::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

impl TabularEnv {
    pub fn new(spec: &EnvSpec, process: &FinitePomdp) -> Result<Self> {
        spec.validate()?;
        if spec.family != Family::FiniteTabular {
            return Err(Error::InvalidSpec(format!(
                "tabular environment needs family finite_tabular, got {}",
                spec.family.name()
            )));
        }
        if spec.num_intervals_m != process.n_actions {
            return Err(Error::InvalidSpec(format!(
                "num_intervals_m {} must equal the process action count {}",
                spec.num_intervals_m, process.n_actions
            )));
        }
        if !process.supports_horizon(spec.horizon_t) {
            return Err(Error::InvalidSpec(format!("process tables do not cover horizon {}", spec.horizon_t)));
        }
        let n_r = process.rewards.len();
        let transition_cdf = (0..process.transition_layers())
            .map(|t| {
                (0..process.n_states)
                    .map(|s| {
                        (0..process.n_actions)
                            .map(|a| cumulative(process.transition_row(t, s, a).iter().map(to_f64)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let observation_cdf = (0..process.observation_layers())
            .map(|t| {
                (0..process.n_states).map(|s| cumulative(process.observation_row(t, s).iter().map(to_f64))).collect()
            })
            .collect();
        Ok(TabularEnv {
            seed: spec.seed,
            horizon: spec.horizon_t,
            n_actions: process.n_actions,
            n_obs: process.n_obs,
            rho0_cdf: cumulative(process.rho0.iter().map(to_f64)),
            transition_cdf,
            observation_cdf,
            reward_values: process.rewards.iter().map(to_f64).collect(),
            n_rewards: n_r,
            rng: RngStream::new(spec.seed, 0),
            hidden: None,
            t: 0,
        })
    }

    pub fn num_observations(&self) -> usize {
        self.n_obs
    }

    /// The current hidden state.
    pub fn hidden_state(&self) -> Option<usize> {
        self.hidden
    }

    fn observe(&mut self, s: usize) -> usize {
        let layer = self.t.min(self.observation_cdf.len() - 1);
        let u = self.rng.uniform01();
        sample(&self.observation_cdf[layer][s], u)
    }
}

impl Environment for TabularEnv {
    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.rng = RngStream::new(self.seed, episode);
        self.t = 0;
        let u = self.rng.uniform01();
        let s = sample(&self.rho0_cdf, u);
        self.hidden = Some(s);
        vec![self.observe(s) as f64]
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let s = self.hidden.ok_or(Error::NotReset)?;
        if self.t >= self.horizon {
            return Err(Error::EpisodeFinished);
        }
        if action >= self.n_actions {
            return Err(Error::ActionOutOfRange { action, num_actions: self.n_actions });
        }
        let layer = self.t.min(self.transition_cdf.len() - 1);
        let u = self.rng.uniform01();
        let joint = sample(&self.transition_cdf[layer][s][action], u);
        let (next, r) = (joint / self.n_rewards, joint % self.n_rewards);
        self.t += 1;
        self.hidden = Some(next);
        let z = self.observe(next);
        Ok(StepOutcome { observation: vec![z as f64], reward: self.reward_values[r], done: self.t == self.horizon })
    }

    fn num_actions(&self) -> usize {
        self.n_actions
    }

    fn horizon(&self) -> usize {
        self.horizon
    }
}

pub type BoxedEnv = Box<dyn Environment>;

/// Builds the environment described by `spec`. The `finite_tabular` family carries its
/// tables separately; use [`make_tabular_env`] for it.
pub fn make_env(spec: &EnvSpec) -> Result<BoxedEnv> {
    spec.validate()?;
    let base: BoxedEnv = match spec.family {
        f if f.is_linproc() => Box::new(LinProcEnv::new(spec)?),
        Family::RewardWhenInside => Box::new(RewardWhenInsideEnv::new(spec)?),
        Family::FiniteTabular => {
            return Err(Error::InvalidSpec("finite_tabular needs a process table (make_tabular_env)".into()))
        }
        _ => unreachable!(),
    };
    apply_wrappers(base, spec, None)
}

pub fn make_tabular_env(spec: &EnvSpec, process: &FinitePomdp) -> Result<BoxedEnv> {
    let base = TabularEnv::new(spec, process)?;
    let n_obs = base.num_observations();
    apply_wrappers(Box::new(base), spec, Some(n_obs))
}

/// Wraps `base` with the spec's wrappers in list order; the last one is outermost.
fn apply_wrappers(base: BoxedEnv, spec: &EnvSpec, discrete_obs: Option<usize>) -> Result<BoxedEnv> {
    let mut env = base;
    let mut discrete_obs = discrete_obs;
    for w in &spec.wrappers {
        env = match w {
            WrapperSpec::StateConv { mode, .. } => {
                if let ConvMode::Mod(n) = mode {
                    match discrete_obs {
                        Some(levels) if levels as u64 == *n => {}
                        Some(levels) => {
                            return Err(Error::WrapperIncompatible(format!(
                                "modulus {n} differs from the {levels} observation values"
                            )))
                        }
                        None => {
                            return Err(Error::WrapperIncompatible(
                                "modular state_conv on a real-state environment".into(),
                            ))
                        }
                    }
                }
                if *mode == ConvMode::Real {
                    // real weights leave the finite observation alphabet
                    discrete_obs = None;
                }
                Box::new(StateConvEnv::new(env, ConvolutionKernel::from_wrapper(w)?))
            }
            WrapperSpec::RewardDelay { k, gamma } => Box::new(RewardDelayEnv::new(env, *k, *gamma)?),
        };
    }
    Ok(env)
}

/// Plays one episode with `agent`, recording observations `z_0..z_{T-1}`.
pub fn rollout(
    env: &mut dyn Environment,
    agent: &mut dyn Agent,
    episode: u64,
    spec_digest: &str,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new(spec_digest, episode);
    let mut obs = env.reset(episode);
    agent.reset(episode);
    for t in 0..env.horizon() {
        let action = agent.act(&obs)?;
        let out = env.step(action)?;
        traj.steps.push(Step { t, observation: obs, action, reward: out.reward });
        obs = out.observation;
        if out.done {
            traj.terminal = true;
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ScriptedAgent, UniformRandomAgent};
    use crate::finite::fixtures;

    #[test]
    fn all_eq_one_order_zero_is_fresh_noise() {
        let spec = EnvSpec::linproc(Family::AllEqOne, 0).with_seed(3);
        let mut env = make_env(&spec).unwrap();
        let mut agent = ScriptedAgent::new(vec![2]);
        let mut total = 0.0;
        let episodes = 2000;
        for ep in 0..episodes {
            let traj = rollout(env.as_mut(), &mut agent, ep, "x").unwrap();
            assert_eq!(traj.len(), 64);
            total += traj.total_reward();
        }
        // Bernoulli(1/8) per step, 3 sigma
        let mean = total / (episodes as f64 * 64.0);
        let sigma = (0.125f64 * 0.875 / (episodes as f64 * 64.0)).sqrt();
        assert!((mean - 0.125).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn reward_when_inside_scripted_zero() {
        let spec = EnvSpec::reward_when_inside().with_seed(8);
        let mut env = make_env(&spec).unwrap();
        let mut agent = ScriptedAgent::new(vec![0]);
        let episodes = 2000;
        let mean: f64 =
            (0..episodes).map(|ep| rollout(env.as_mut(), &mut agent, ep, "x").unwrap().total_reward()).sum::<f64>()
                / episodes as f64;
        // sd of a single episode is sqrt(256 * 7/64) ~ 5.3
        assert!((mean - 32.0).abs() < 3.0 * 5.3 / (episodes as f64).sqrt(), "{mean}");
    }

    #[test]
    fn reward_when_inside_done_at_horizon() {
        let mut spec = EnvSpec::reward_when_inside();
        spec.horizon_t = 3;
        let mut env = make_env(&spec).unwrap();
        env.reset(0);
        assert!(!env.step(0).unwrap().done);
        assert!(!env.step(0).unwrap().done);
        assert!(env.step(0).unwrap().done);
        assert_eq!(env.step(0).unwrap_err(), Error::EpisodeFinished);
    }

    #[test]
    fn determinism_across_handles() {
        let spec = EnvSpec::linproc(Family::NoEq, 3).with_seed(21);
        let digest = spec.digest();
        let mut a = make_env(&spec).unwrap();
        let mut b = make_env(&spec).unwrap();
        let mut pa = UniformRandomAgent::new(8, 5);
        let mut pb = UniformRandomAgent::new(8, 5);
        for ep in 0..5 {
            let ta = rollout(a.as_mut(), &mut pa, ep, &digest).unwrap();
            let tb = rollout(b.as_mut(), &mut pb, ep, &digest).unwrap();
            assert_eq!(ta.to_jsonl().unwrap(), tb.to_jsonl().unwrap());
        }
    }

    #[test]
    fn prefix_matches_mid_episode_view() {
        let spec = EnvSpec::linproc(Family::TimeEq, 2).with_seed(4);
        let mut env = make_env(&spec).unwrap();
        let mut agent = UniformRandomAgent::new(8, 1);
        let full = rollout(env.as_mut(), &mut agent, 7, "d").unwrap();
        // replay the first 10 steps by hand
        let mut env = make_env(&spec).unwrap();
        let mut obs = env.reset(7);
        for step in &full.prefix(10).steps {
            assert_eq!(obs, step.observation);
            let out = env.step(step.action).unwrap();
            assert_eq!(out.reward, step.reward);
            obs = out.observation;
        }
    }

    #[test]
    fn tabular_family_needs_table() {
        let mut spec = EnvSpec::linproc(Family::AllEq, 0);
        spec.family = Family::FiniteTabular;
        assert!(matches!(make_env(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn modular_wrapper_on_real_family_rejected() {
        let spec = EnvSpec::reward_when_inside()
            .with_wrapper(WrapperSpec::StateConv { w: vec![1.0, 1.0], mode: ConvMode::Mod(5) });
        assert!(matches!(make_env(&spec), Err(Error::WrapperIncompatible(_))));
    }

    #[test]
    fn tabular_env_follows_deterministic_chain() {
        let mdp = fixtures::two_state_multiple_mds();
        let spec = EnvSpec {
            family: Family::FiniteTabular,
            order_k: 0,
            horizon_t: 3,
            num_intervals_m: 2,
            segment_len_n: 1,
            wrappers: vec![],
            seed: 0,
        };
        let mut env = make_tabular_env(&spec, &mdp).unwrap();
        assert_eq!(env.reset(0), vec![0.0]);
        assert_eq!(env.step(1).unwrap().observation, vec![1.0]);
        assert_eq!(env.step(0).unwrap().observation, vec![1.0]);
        let last = env.step(1).unwrap();
        assert!(last.done);
        assert_eq!(last.observation, vec![1.0]);
        // action a from state 0 keeps the chain at 0
        env.reset(1);
        assert_eq!(env.step(0).unwrap().observation, vec![0.0]);
    }

    #[test]
    fn sampling_skips_zero_mass_tail() {
        let cdf = cumulative([0.5, 0.5, 0.0].into_iter());
        assert_eq!(sample(&cdf, 0.999_999_999_999), 1);
        assert_eq!(sample(&cdf, 0.25), 0);
    }
}
