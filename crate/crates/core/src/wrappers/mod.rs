//! Wrappers that turn a Markov environment into a history-dependent one: state
//! convolution (observations aggregate past states) and reward delay.

mod conv;
mod delay;

pub use conv::{
    convolve_all, convolve_state, deconvolve, mds_of_kernel, mod_inverse, ConvolutionKernel, Sequence, StateConvEnv,
    ToeplitzView, Value, DEFAULT_MDS_TOLERANCE,
};
pub use delay::{delay_rewards, DelayBuffer, RewardDelayEnv};
