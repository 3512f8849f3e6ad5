//! Autoregressive interval-prediction processes.
//!
//! Observations live in `[0, 1)`. The first `k` are i.i.d. uniform; afterwards
//! `z_{t+1} = (sum_i w_i z_{t-i}) mod 1` with coefficients picked from a circulant
//! schedule by time segment and by the interval of `z_0`. The agent is rewarded for
//! naming the interval (out of `m`) the next observation falls in.

use std::collections::VecDeque;

use crate::env::{Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::spec::{EnvSpec, Family};
use crate::verify::invariance::Relation;

pub const COEFFICIENT_WIDTH: usize = 8;
/// Coefficients are `BASE_NUMERATORS / COEFFICIENT_DENOMINATOR`, i.e. `(8..=15)/8`.
pub const BASE_NUMERATORS: [u32; COEFFICIENT_WIDTH] = [8, 9, 10, 11, 12, 13, 14, 15];
pub const COEFFICIENT_DENOMINATOR: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleMode {
    AllOne,
    Fixed,
    /// row `seg` is `σ^seg(base)`
    TimeCirculant,
    /// row `bucket` is `σ^-bucket(base)`
    TrajCirculant,
    /// `σ^(seg - bucket)(base)`
    TimeTrajCirculant,
}

impl ScheduleMode {
    pub fn for_family(family: Family) -> Result<ScheduleMode> {
        Ok(match family {
            Family::AllEqOne => ScheduleMode::AllOne,
            Family::AllEq => ScheduleMode::Fixed,
            Family::TimeEq => ScheduleMode::TimeCirculant,
            Family::TrajEq => ScheduleMode::TrajCirculant,
            Family::NoEq => ScheduleMode::TimeTrajCirculant,
            other => return Err(Error::NotLinProc(other.name().into())),
        })
    }

    pub fn uses_segment(self) -> bool {
        matches!(self, ScheduleMode::TimeCirculant | ScheduleMode::TimeTrajCirculant)
    }

    pub fn uses_bucket(self) -> bool {
        matches!(self, ScheduleMode::TrajCirculant | ScheduleMode::TimeTrajCirculant)
    }
}

/// `σ^shift(base)` where `σ(w_0..w_7) = (w_7, w_0..w_6)`.
pub fn circulant_row(shift: i64) -> [u32; COEFFICIENT_WIDTH] {
    let width = COEFFICIENT_WIDTH as i64;
    std::array::from_fn(|i| BASE_NUMERATORS[(i as i64 - shift).rem_euclid(width) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientSchedule {
    pub mode: ScheduleMode,
    pub order_k: usize,
}

impl CoefficientSchedule {
    pub fn new(mode: ScheduleMode, order_k: usize) -> Result<Self> {
        if order_k > COEFFICIENT_WIDTH {
            return Err(Error::IndexOutOfRange(format!("order {order_k} exceeds table width {COEFFICIENT_WIDTH}")));
        }
        Ok(CoefficientSchedule { mode, order_k })
    }

    pub fn for_spec(spec: &EnvSpec) -> Result<Self> {
        Self::new(ScheduleMode::for_family(spec.family)?, spec.order_k)
    }

    /// Numerators (over 8) of the `k` coefficients in effect for a time segment and
    /// initial-observation bucket. Only the components the mode actually uses are
    /// range-checked.
    pub fn numerators(&self, seg: usize, z0_bucket: usize) -> Result<Vec<u32>> {
        if self.mode.uses_segment() && seg >= COEFFICIENT_WIDTH {
            return Err(Error::IndexOutOfRange(format!("segment {seg} not in 0..8")));
        }
        if self.mode.uses_bucket() && z0_bucket >= COEFFICIENT_WIDTH {
            return Err(Error::IndexOutOfRange(format!("bucket {z0_bucket} not in 0..8")));
        }
        let row = match self.mode {
            ScheduleMode::AllOne => [COEFFICIENT_DENOMINATOR; COEFFICIENT_WIDTH],
            ScheduleMode::Fixed => BASE_NUMERATORS,
            ScheduleMode::TimeCirculant => circulant_row(seg as i64),
            ScheduleMode::TrajCirculant => circulant_row(-(z0_bucket as i64)),
            ScheduleMode::TimeTrajCirculant => circulant_row(seg as i64 - z0_bucket as i64),
        };
        Ok(row[..self.order_k].to_vec())
    }

    pub fn coeffs_for(&self, seg: usize, z0_bucket: usize) -> Result<Vec<f64>> {
        Ok(self.numerators(seg, z0_bucket)?.into_iter().map(|n| n as f64 / COEFFICIENT_DENOMINATOR as f64).collect())
    }
}

/// Index of the interval `[i/m, (i+1)/m)` containing `z`.
pub fn interval_of(z: f64, m: usize) -> usize {
    ((m as f64 * z).floor().max(0.0) as usize).min(m.saturating_sub(1))
}

pub fn interval_reward(action: usize, next_obs: f64, m: usize) -> Result<f64> {
    if action >= m {
        return Err(Error::ActionOutOfRange { action, num_actions: m });
    }
    Ok(if action == interval_of(next_obs, m) { 1.0 } else { 0.0 })
}

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    // x - floor(x) is exact for the magnitudes seen here; guard anyway
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinProcState {
    /// Most recent first; holds `min(t + 1, k)` observations.
    pub window: VecDeque<f64>,
    pub t: usize,
    pub z0_bucket: usize,
    pub seg: usize,
}

impl LinProcState {
    pub fn start(z0: f64, order_k: usize, m: usize) -> Self {
        let mut window = VecDeque::with_capacity(order_k.max(1));
        if order_k > 0 {
            window.push_front(z0);
        }
        LinProcState { window, t: 0, z0_bucket: interval_of(z0, m), seg: 0 }
    }

    pub fn push(&mut self, z: f64, order_k: usize, segment_len: usize) {
        self.t += 1;
        self.seg = self.t / segment_len;
        if order_k > 0 {
            if self.window.len() == order_k {
                self.window.pop_back();
            }
            self.window.push_front(z);
        }
    }

    /// True once `t + 1 >= k`, i.e. the next observation is deterministic.
    pub fn is_warm(&self, order_k: usize) -> bool {
        order_k > 0 && self.window.len() == order_k
    }
}

/// `(sum_i w_i * window[i]) mod 1` over the current window, which during warm-up is the
/// truncated sum used for rewards.
pub fn window_dot(state: &LinProcState, schedule: &CoefficientSchedule) -> Result<f64> {
    let coeffs = schedule.coeffs_for(state.seg, state.z0_bucket)?;
    let sum: f64 = coeffs.iter().zip(&state.window).map(|(w, z)| w * z).sum();
    Ok(frac(sum))
}

/// Next observation once the window is full (`t + 1 >= k`).
pub fn ar_step(state: &LinProcState, schedule: &CoefficientSchedule) -> Result<f64> {
    debug_assert!(state.is_warm(schedule.order_k));
    window_dot(state, schedule)
}

/// Equivalence relation under which the family's transitions are invariant.
pub fn invariance_class(spec: &EnvSpec) -> Result<Relation> {
    let k = Relation::LastK(spec.order_k);
    let time = Relation::TimeBlock(spec.segment_len_n);
    let traj = Relation::InitialBucket(spec.num_intervals_m);
    Ok(match spec.family {
        Family::AllEqOne | Family::AllEq => k,
        Family::TimeEq => Relation::meet_of([k, time]),
        Family::TrajEq => Relation::meet_of([k, traj]),
        Family::NoEq => Relation::meet_of([k, time, traj]),
        other => return Err(Error::NotLinProc(other.name().into())),
    })
}

pub struct LinProcEnv {
    spec: EnvSpec,
    schedule: CoefficientSchedule,
    rng: RngStream,
    state: Option<LinProcState>,
    done: bool,
}

impl LinProcEnv {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(LinProcEnv {
            schedule: CoefficientSchedule::for_spec(spec)?,
            spec: spec.clone(),
            rng: RngStream::new(spec.seed, 0),
            state: None,
            done: false,
        })
    }

    pub fn state(&self) -> Option<&LinProcState> {
        self.state.as_ref()
    }

    pub fn schedule(&self) -> &CoefficientSchedule {
        &self.schedule
    }
}

impl Environment for LinProcEnv {
    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.rng = RngStream::new(self.spec.seed, episode);
        let z0 = self.rng.uniform01();
        self.state = Some(LinProcState::start(z0, self.spec.order_k, self.spec.num_intervals_m));
        self.done = false;
        vec![z0]
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let m = self.spec.num_intervals_m;
        let k = self.spec.order_k;
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let state = self.state.as_mut().ok_or(Error::NotReset)?;
        if action >= m {
            return Err(Error::ActionOutOfRange { action, num_actions: m });
        }
        let (next, target) = if state.is_warm(k) {
            let next = ar_step(state, &self.schedule)?;
            (next, next)
        } else if k == 0 {
            let next = self.rng.uniform01();
            (next, next)
        } else {
            // warm-up: the reward uses the truncated sum over what has been seen so far
            let target = window_dot(state, &self.schedule)?;
            (self.rng.uniform01(), target)
        };
        let reward = interval_reward(action, target, m)?;
        let done = state.t + 1 == self.spec.horizon_t;
        state.push(next, k, self.spec.segment_len_n);
        self.done = done;
        Ok(StepOutcome { observation: vec![next], reward, done })
    }

    fn num_actions(&self) -> usize {
        self.spec.num_intervals_m
    }

    fn horizon(&self) -> usize {
        self.spec.horizon_t
    }
}
