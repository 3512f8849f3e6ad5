//! Paired-episode check that a reward transformation keeps observations and discounted
//! returns intact.

use serde::Serialize;

use crate::agents::{Agent, UniformRandomAgent};
use crate::env::Environment;
use crate::error::{Error, Result};

pub const RETURN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReturnReport {
    pub passed: bool,
    pub episodes: u64,
    pub max_return_diff: f64,
    pub obs_mismatches: u64,
    /// The first few offending episodes.
    pub failures: Vec<String>,
}

const MAX_LISTED: usize = 10;

/// Runs both environments on episodes `0..episodes` with one shared uniform-random action
/// stream and compares per-episode discounted returns and observation streams.
pub fn check_return_equivalence(
    base: &mut dyn Environment,
    wrapped: &mut dyn Environment,
    episodes: u64,
    gamma: f64,
    policy_seed: u64,
) -> Result<ReturnReport> {
    if base.num_actions() != wrapped.num_actions() || base.horizon() != wrapped.horizon() {
        return Err(Error::WrapperIncompatible("paired environments differ in shape".into()));
    }
    let mut agent = UniformRandomAgent::new(base.num_actions(), policy_seed);
    let mut report = ReturnReport { episodes, ..Default::default() };
    for ep in 0..episodes {
        agent.reset(ep);
        let mut obs = base.reset(ep);
        let mut same_obs = obs == wrapped.reset(ep);
        let (mut ret, mut ret_w, mut discount) = (0.0, 0.0, 1.0);
        loop {
            let a = agent.act(&obs)?;
            let out = base.step(a)?;
            let out_w = wrapped.step(a)?;
            ret += discount * out.reward;
            ret_w += discount * out_w.reward;
            discount *= gamma;
            same_obs &= out.observation == out_w.observation && out.done == out_w.done;
            obs = out.observation;
            if out.done || out_w.done {
                break;
            }
        }
        let diff = (ret - ret_w).abs();
        report.max_return_diff = report.max_return_diff.max(diff);
        if !same_obs {
            report.obs_mismatches += 1;
        }
        if (diff > RETURN_TOLERANCE || !same_obs) && report.failures.len() < MAX_LISTED {
            report.failures.push(format!("episode {ep}: returns {ret} vs {ret_w}, observations equal: {same_obs}"));
        }
    }
    report.passed = report.max_return_diff <= RETURN_TOLERANCE && report.obs_mismatches == 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_env;
    use crate::spec::EnvSpec;
    use crate::wrappers::RewardDelayEnv;

    #[test]
    fn delay_passes_and_broken_delay_fails() {
        let spec = EnvSpec::reward_when_inside();
        for (k, gamma) in [(0, 0.9), (8, 0.9), (8, 1.0)] {
            let mut base = make_env(&spec).unwrap();
            let mut wrapped = RewardDelayEnv::new(make_env(&spec).unwrap(), k, gamma).unwrap();
            let r = check_return_equivalence(base.as_mut(), &mut wrapped, 50, gamma, 1).unwrap();
            assert!(r.passed, "{k} {gamma}: {r:?}");
        }
        let mut base = make_env(&spec).unwrap();
        let mut broken = RewardDelayEnv::without_catch_up(make_env(&spec).unwrap(), 8, 1.0).unwrap();
        let r = check_return_equivalence(base.as_mut(), &mut broken, 50, 1.0, 1).unwrap();
        assert!(!r.passed, "{r:?}");
        assert_eq!(r.obs_mismatches, 0);
    }

    #[test]
    fn late_losses_vanish_under_heavy_discounting() {
        // 0.9^248 is far below the tolerance, so over 256 steps the dropped tail is invisible
        let spec = EnvSpec::reward_when_inside();
        let mut base = make_env(&spec).unwrap();
        let mut broken = RewardDelayEnv::without_catch_up(make_env(&spec).unwrap(), 8, 0.9).unwrap();
        let r = check_return_equivalence(base.as_mut(), &mut broken, 20, 0.9, 1).unwrap();
        assert!(r.max_return_diff < 1e-9);
        let mut short = spec.clone();
        short.horizon_t = 64;
        let mut base = make_env(&short).unwrap();
        let mut broken = RewardDelayEnv::without_catch_up(make_env(&short).unwrap(), 8, 0.9).unwrap();
        assert!(!check_return_equivalence(base.as_mut(), &mut broken, 20, 0.9, 1).unwrap().passed);
    }
}
