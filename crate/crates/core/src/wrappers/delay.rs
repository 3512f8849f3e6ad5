use std::collections::VecDeque;

use crate::env::{BoxedEnv, Environment, StepOutcome};
use crate::error::{Error, Result};

/// Whole-episode form of the delay: `r'_t = 0` for `t < k`,
/// `r'_t = r_{t-k} / γ^k` for `k <= t <= T-2`, and the last step pays out
/// `sum_{i=0..=k} r_{T-1-i} / γ^i`.
pub fn delay_rewards(rewards: &[f64], k: usize, gamma: f64) -> Vec<f64> {
    let len = rewards.len();
    let mut out = vec![0.0; len];
    if len == 0 {
        return out;
    }
    if k == 0 {
        return rewards.to_vec();
    }
    let scale = gamma.powi(k as i32);
    for t in k..len - 1 {
        out[t] = rewards[t - k] / scale;
    }
    out[len - 1] = (0..=k.min(len - 1)).map(|i| rewards[len - 1 - i] / gamma.powi(i as i32)).sum();
    out
}

/// Online delay state: rewards not yet paid out, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    pending: VecDeque<f64>,
    delay: usize,
    gamma: f64,
    catch_up: bool,
}

impl DelayBuffer {
    pub fn new(delay: usize, gamma: f64) -> Self {
        DelayBuffer { pending: VecDeque::with_capacity(delay + 1), delay, gamma, catch_up: true }
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Takes the raw reward for this step and returns the reward to emit.
    pub fn push(&mut self, reward: f64, last: bool) -> f64 {
        self.pending.push_back(reward);
        if last {
            if !self.catch_up {
                return self.shifted();
            }
            // pending holds r_{T-1-k..=T-1} (fewer if the episode is short); newest has i = 0
            let out = self.pending.iter().rev().enumerate().map(|(i, r)| r / self.gamma.powi(i as i32)).sum();
            self.pending.clear();
            return out;
        }
        self.shifted()
    }

    fn shifted(&mut self) -> f64 {
        if self.pending.len() > self.delay {
            let r = self.pending.pop_front().unwrap_or(0.0);
            r / self.gamma.powi(self.delay as i32)
        } else {
            0.0
        }
    }
}

/// Delays rewards by `k` steps with discount compensation; the final step pays what is
/// still owed so the discounted return is unchanged.
pub struct RewardDelayEnv {
    inner: BoxedEnv,
    buffer: DelayBuffer,
}

impl RewardDelayEnv {
    pub fn new(inner: BoxedEnv, delay: usize, gamma: f64) -> Result<Self> {
        if delay >= inner.horizon() {
            return Err(Error::DelayExceedsHorizon { delay, horizon: inner.horizon() });
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidSpec(format!("gamma {gamma} not in (0, 1]")));
        }
        Ok(RewardDelayEnv { inner, buffer: DelayBuffer::new(delay, gamma) })
    }

    /// A faulty variant that drops the terminal catch-up; used as a negative control.
    pub fn without_catch_up(inner: BoxedEnv, delay: usize, gamma: f64) -> Result<Self> {
        let mut env = Self::new(inner, delay, gamma)?;
        env.buffer.catch_up = false;
        Ok(env)
    }
}

impl Environment for RewardDelayEnv {
    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.buffer.clear();
        self.inner.reset(episode)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let out = self.inner.step(action)?;
        let reward = self.buffer.push(out.reward, out.done);
        Ok(StepOutcome { reward, ..out })
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn online(rewards: &[f64], k: usize, gamma: f64) -> Vec<f64> {
        let mut buf = DelayBuffer::new(k, gamma);
        rewards.iter().enumerate().map(|(t, &r)| buf.push(r, t + 1 == rewards.len())).collect()
    }

    #[test]
    fn worked_example() {
        let r = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(delay_rewards(&r, 1, 1.0), vec![0.0, 1.0, 2.0, 7.0]);
        assert_eq!(online(&r, 1, 1.0), vec![0.0, 1.0, 2.0, 7.0]);
        assert_eq!(delay_rewards(&r, 1, 1.0).iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn zero_delay_is_identity() {
        let r = [0.5, 0.0, 1.0];
        assert_eq!(delay_rewards(&r, 0, 0.9), r.to_vec());
        assert_eq!(online(&r, 0, 0.9), r.to_vec());
    }

    #[test]
    fn queue_length_tracks_min_t_k() {
        let mut buf = DelayBuffer::new(3, 0.9);
        for t in 0..10 {
            buf.push(1.0, false);
            assert_eq!(buf.len(), (t + 1).min(3));
        }
    }

    #[test]
    fn online_matches_offline_and_preserves_return() {
        let mut rng = RngStream::new(12, 3);
        for _ in 0..500 {
            let len = 1 + rng.below(40);
            let k = rng.below(len);
            let gamma = [1.0, 0.9, 0.5][rng.below(3)];
            let r: Vec<f64> = (0..len).map(|_| rng.below(3) as f64).collect();
            let off = delay_rewards(&r, k, gamma);
            let on = online(&r, k, gamma);
            for (a, b) in off.iter().zip(&on) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            assert!(off[..k.min(len - 1)].iter().all(|&x| x == 0.0));
            let ret = |xs: &[f64]| xs.iter().enumerate().map(|(t, x)| gamma.powi(t as i32) * x).sum::<f64>();
            assert!((ret(&r) - ret(&off)).abs() < 1e-9);
        }
    }
}
