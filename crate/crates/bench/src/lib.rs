//! Shared inputs for the benchmarks.

use pomdp_forge::finite::random::{random_pomdp, Shape};
use pomdp_forge::wrappers::{ConvolutionKernel, Sequence};
use pomdp_forge::{make_env, EnvSpec, Environment, Family, FinitePomdp, RngStream, Sign, WrapperSpec};

/// The largest shape the exact suites draw from.
pub const LARGEST: Shape = Shape { states: 3, actions: 2, obs: 3, rewards: 2, horizon: 3, stationary: false };

pub fn linproc_spec(family: Family, k: usize, wrapped: bool) -> EnvSpec {
    let spec = EnvSpec::linproc(family, k).with_seed(1);
    if wrapped {
        spec.with_wrapper(WrapperSpec::state_conv_preset(3, Sign::Positive).expect("valid level"))
            .with_wrapper(WrapperSpec::RewardDelay { k: 8, gamma: 0.9 })
    } else {
        spec
    }
}

/// Plays one episode with a fixed action cycle and returns the total reward.
pub fn play_episode(env: &mut dyn Environment, episode: u64) -> f64 {
    env.reset(episode);
    let n = env.num_actions();
    let mut total = 0.0;
    for t in 0..env.horizon() {
        let out = env.step(t % n).expect("in-range action");
        total += out.reward;
    }
    total
}

pub fn fresh_env(spec: &EnvSpec) -> Box<dyn Environment> {
    make_env(spec).expect("benchmark spec is valid")
}

/// A random scalar state sequence and a two-tap kernel.
pub fn real_sequence(len: usize) -> (ConvolutionKernel, Sequence) {
    let mut rng = RngStream::new(3, 0);
    let s = (0..len).map(|_| vec![rng.uniform01()]).collect();
    (ConvolutionKernel::real(vec![1.0, -0.875]).expect("w_0 != 0"), Sequence::Real(s))
}

pub fn pomdps(count: u64) -> Vec<FinitePomdp> {
    (0..count).map(|seed| random_pomdp(seed, &LARGEST)).collect()
}
