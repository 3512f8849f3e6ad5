//! Reference policies: uniform-random guessing, the clairvoyant linear-process predictor
//! and scripted action replay.

use crate::error::{Error, Result};
use crate::linproc::{ar_step, interval_of, CoefficientSchedule, LinProcState};
use crate::rng::{mix64, RngStream};
use crate::spec::{EnvSpec, WrapperSpec};

/// Keeps policy randomness apart from environment randomness under equal seeds.
const POLICY_SALT: u64 = 0x5DEE_CE66_D1CE_4E5B;

pub trait Agent: Send {
    /// Starts episode `episode`; randomized agents reseed from it.
    fn reset(&mut self, episode: u64);
    /// Chooses `a_t` given the current observation `z_t`.
    fn act(&mut self, observation: &[f64]) -> Result<usize>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn reset(&mut self, episode: u64) {
        (**self).reset(episode)
    }
    fn act(&mut self, observation: &[f64]) -> Result<usize> {
        (**self).act(observation)
    }
}

fn policy_stream(seed: u64, episode: u64) -> RngStream {
    RngStream::new(mix64(seed ^ POLICY_SALT), episode)
}

pub struct UniformRandomAgent {
    n_actions: usize,
    seed: u64,
    rng: RngStream,
}

impl UniformRandomAgent {
    pub fn new(n_actions: usize, seed: u64) -> Self {
        UniformRandomAgent { n_actions, seed, rng: policy_stream(seed, 0) }
    }
}

impl Agent for UniformRandomAgent {
    fn reset(&mut self, episode: u64) {
        self.rng = policy_stream(self.seed, episode);
    }

    fn act(&mut self, _observation: &[f64]) -> Result<usize> {
        Ok(self.rng.below(self.n_actions))
    }
}

/// Replays a fixed action list, repeating it cyclically when the episode is longer.
pub struct ScriptedAgent {
    actions: Vec<usize>,
    cursor: usize,
}

impl ScriptedAgent {
    pub fn new(actions: Vec<usize>) -> Self {
        ScriptedAgent { actions, cursor: 0 }
    }
}

impl Agent for ScriptedAgent {
    fn reset(&mut self, _episode: u64) {
        self.cursor = 0;
    }

    fn act(&mut self, _observation: &[f64]) -> Result<usize> {
        if self.actions.is_empty() {
            return Err(Error::PolicyEnvMismatch("empty action script".into()));
        }
        let a = self.actions[self.cursor % self.actions.len()];
        self.cursor += 1;
        Ok(a)
    }
}

/// Mirrors the generator's window and predicts the interval of `z_{t+1}` once it is
/// deterministic; guesses uniformly during warm-up.
pub struct ClairvoyantAgent {
    spec: EnvSpec,
    schedule: CoefficientSchedule,
    state: Option<LinProcState>,
    fallback: UniformRandomAgent,
}

impl ClairvoyantAgent {
    pub fn new(spec: &EnvSpec, seed: u64) -> Result<Self> {
        if !spec.family.is_linproc() {
            return Err(Error::PolicyEnvMismatch(format!(
                "clairvoyant policy needs a linear process, got {}",
                spec.family.name()
            )));
        }
        if spec.wrappers.iter().any(|w| matches!(w, WrapperSpec::StateConv { .. })) {
            return Err(Error::PolicyEnvMismatch("clairvoyant policy cannot see through state convolution".into()));
        }
        spec.validate()?;
        Ok(ClairvoyantAgent {
            schedule: CoefficientSchedule::for_spec(spec)?,
            spec: spec.clone(),
            state: None,
            fallback: UniformRandomAgent::new(spec.num_intervals_m, seed),
        })
    }
}

impl Agent for ClairvoyantAgent {
    fn reset(&mut self, episode: u64) {
        self.state = None;
        self.fallback.reset(episode);
    }

    fn act(&mut self, observation: &[f64]) -> Result<usize> {
        let &[z] = observation else {
            return Err(Error::PolicyEnvMismatch(format!(
                "expected a scalar observation, got {} values",
                observation.len()
            )));
        };
        let (k, m) = (self.spec.order_k, self.spec.num_intervals_m);
        match &mut self.state {
            None => self.state = Some(LinProcState::start(z, k, m)),
            Some(state) => state.push(z, k, self.spec.segment_len_n),
        }
        let state = self.state.as_ref().expect("just set");
        if state.is_warm(k) {
            Ok(interval_of(ar_step(state, &self.schedule)?, m))
        } else {
            self.fallback.act(observation)
        }
    }
}

/// Which reference policy to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyKind {
    UniformRandom,
    ClairvoyantLinProc,
    Scripted(Vec<usize>),
}

impl PolicyKind {
    /// Builds the policy for `spec`; `seed` drives any randomness.
    pub fn bind(&self, spec: &EnvSpec, num_actions: usize, seed: u64) -> Result<Box<dyn Agent>> {
        Ok(match self {
            PolicyKind::UniformRandom => Box::new(UniformRandomAgent::new(num_actions, seed)),
            PolicyKind::ClairvoyantLinProc => Box::new(ClairvoyantAgent::new(spec, seed)?),
            PolicyKind::Scripted(actions) => {
                if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
                    return Err(Error::ActionOutOfRange { action: a, num_actions });
                }
                Box::new(ScriptedAgent::new(actions.clone()))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, rollout};
    use crate::spec::{Family, Sign};

    #[test]
    fn clairvoyant_hits_every_deterministic_step() {
        for family in [Family::AllEqOne, Family::AllEq, Family::TimeEq, Family::TrajEq, Family::NoEq] {
            for k in 1..=7 {
                let spec = EnvSpec::linproc(family, k).with_seed(11);
                let mut env = make_env(&spec).unwrap();
                let mut agent = ClairvoyantAgent::new(&spec, 3).unwrap();
                for ep in 0..20 {
                    let traj = rollout(env.as_mut(), &mut agent, ep, "").unwrap();
                    for step in &traj.steps[k - 1..] {
                        assert_eq!(step.reward, 1.0, "{family:?} k={k} t={}", step.t);
                    }
                }
            }
        }
    }

    #[test]
    fn clairvoyant_refuses_other_envs() {
        assert!(matches!(ClairvoyantAgent::new(&EnvSpec::reward_when_inside(), 0), Err(Error::PolicyEnvMismatch(_))));
        let wrapped =
            EnvSpec::linproc(Family::AllEq, 2).with_wrapper(WrapperSpec::state_conv_preset(1, Sign::Positive).unwrap());
        assert!(matches!(ClairvoyantAgent::new(&wrapped, 0), Err(Error::PolicyEnvMismatch(_))));
    }

    #[test]
    fn random_agent_is_reproducible_and_in_range() {
        let mut a = UniformRandomAgent::new(5, 9);
        let mut b = UniformRandomAgent::new(5, 9);
        for ep in [0, 7] {
            a.reset(ep);
            b.reset(ep);
            for _ in 0..100 {
                let x = a.act(&[0.0]).unwrap();
                assert!(x < 5);
                assert_eq!(x, b.act(&[0.0]).unwrap());
            }
        }
    }

    #[test]
    fn random_agent_is_not_the_env_stream() {
        // equal seeds must not make the first guess track z_0
        let spec = EnvSpec::linproc(Family::AllEqOne, 0).with_seed(4);
        let mut env = make_env(&spec).unwrap();
        let mut agent = UniformRandomAgent::new(8, 4);
        let hits: f64 = (0..2000).map(|ep| rollout(env.as_mut(), &mut agent, ep, "").unwrap().steps[0].reward).sum();
        assert!(hits < 400.0, "{hits}");
    }

    #[test]
    fn scripted_cycles_and_validates() {
        let mut s = ScriptedAgent::new(vec![1, 2]);
        let seq: Vec<usize> = (0..5).map(|_| s.act(&[]).unwrap()).collect();
        assert_eq!(seq, vec![1, 2, 1, 2, 1]);
        s.reset(0);
        assert_eq!(s.act(&[]).unwrap(), 1);
        let spec = EnvSpec::reward_when_inside();
        assert!(PolicyKind::Scripted(vec![9]).bind(&spec, 8, 0).is_err());
    }
}
