//! Declarative environment descriptions and their canonical JSON form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linproc::COEFFICIENT_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    AllEqOne,
    AllEq,
    TimeEq,
    TrajEq,
    NoEq,
    RewardWhenInside,
    FiniteTabular,
}

impl Family {
    pub const LINPROC: [Family; 5] = [Family::AllEqOne, Family::AllEq, Family::TimeEq, Family::TrajEq, Family::NoEq];

    pub fn is_linproc(self) -> bool {
        Self::LINPROC.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::AllEqOne => "all_eq_one",
            Family::AllEq => "all_eq",
            Family::TimeEq => "time_eq",
            Family::TrajEq => "traj_eq",
            Family::NoEq => "no_eq",
            Family::RewardWhenInside => "reward_when_inside",
            Family::FiniteTabular => "finite_tabular",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        [Self::LINPROC.as_slice(), &[Family::RewardWhenInside, Family::FiniteTabular]]
            .concat()
            .into_iter()
            .find(|f| f.name() == name)
    }

    fn uses_segments(self) -> bool {
        matches!(self, Family::TimeEq | Family::NoEq)
    }

    fn uses_initial_bucket(self) -> bool {
        matches!(self, Family::TrajEq | Family::NoEq)
    }
}

/// Arithmetic used by a state-convolution wrapper: `"real"` or `{"mod": N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    Real,
    #[serde(rename = "mod")]
    Mod(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WrapperSpec {
    StateConv { w: Vec<f64>, mode: ConvMode },
    RewardDelay { k: usize, gamma: f64 },
}

impl WrapperSpec {
    /// Two-tap kernel `(1, ±w1)` with `w1 = 1 - 2^-level` for levels 0..=4 and
    /// `w1 = 1` at level 5.
    pub fn state_conv_preset(level: u32, sign: Sign) -> Result<WrapperSpec> {
        let w1 = match level {
            0..=4 => 1.0 - 0.5f64.powi(level as i32),
            5 => 1.0,
            _ => return Err(Error::InvalidSpec(format!("state_conv level {level} not in 0..=5"))),
        };
        let w1 = match sign {
            Sign::Positive => w1,
            // avoid serializing -0.0 at level 0
            Sign::Negative if w1 == 0.0 => 0.0,
            Sign::Negative => -w1,
        };
        Ok(WrapperSpec::StateConv { w: vec![1.0, w1], mode: ConvMode::Real })
    }

    /// Delay of `8 * level` steps, the schedule used by the delayed-reward series.
    pub fn reward_delay_preset(level: usize, gamma: f64) -> WrapperSpec {
        WrapperSpec::RewardDelay { k: 8 * level, gamma }
    }

    pub fn validate(&self, family: Family, horizon: usize) -> Result<()> {
        match self {
            WrapperSpec::StateConv { w, mode } => {
                let Some(&w0) = w.first() else {
                    return Err(Error::InvalidSpec("state_conv kernel is empty".into()));
                };
                if w.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSpec("state_conv weights must be finite".into()));
                }
                match *mode {
                    ConvMode::Real => {
                        if w0 == 0.0 {
                            return Err(Error::InvalidSpec("state_conv requires w_0 != 0".into()));
                        }
                    }
                    ConvMode::Mod(n) => {
                        if family != Family::FiniteTabular {
                            return Err(Error::WrapperIncompatible(format!(
                                "modular state_conv needs discrete states, {} has real states",
                                family.name()
                            )));
                        }
                        if n < 2 {
                            return Err(Error::InvalidSpec("modulus must be at least 2".into()));
                        }
                        if w.iter().any(|x| x.fract() != 0.0 || *x < 0.0 || *x >= n as f64) {
                            return Err(Error::InvalidSpec(format!("modular weights must be integers in 0..{n}")));
                        }
                        if gcd(w0 as u64, n) != 1 {
                            return Err(Error::InvalidSpec(format!(
                                "state_conv requires gcd(w_0, {n}) = 1, got w_0 = {w0}"
                            )));
                        }
                    }
                }
            }
            WrapperSpec::RewardDelay { k, gamma } => {
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::InvalidSpec(format!("gamma {gamma} not in (0, 1]")));
                }
                if *k >= horizon {
                    return Err(Error::DelayExceedsHorizon { delay: *k, horizon });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub family: Family,
    pub order_k: usize,
    pub horizon_t: usize,
    pub num_intervals_m: usize,
    pub segment_len_n: usize,
    pub wrappers: Vec<WrapperSpec>,
    pub seed: u64,
}

impl EnvSpec {
    /// A LinProc spec with the experiment defaults: 64 steps, 8 intervals, 8-step segments.
    pub fn linproc(family: Family, order_k: usize) -> EnvSpec {
        EnvSpec { family, order_k, horizon_t: 64, num_intervals_m: 8, segment_len_n: 8, wrappers: Vec::new(), seed: 0 }
    }

    /// The 256-step interval-identification bandit with 8 intervals.
    pub fn reward_when_inside() -> EnvSpec {
        EnvSpec {
            family: Family::RewardWhenInside,
            order_k: 0,
            horizon_t: 256,
            num_intervals_m: 8,
            segment_len_n: 1,
            wrappers: Vec::new(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_wrapper(mut self, wrapper: WrapperSpec) -> Self {
        self.wrappers.push(wrapper);
        self
    }

    pub fn num_segments(&self) -> usize {
        self.horizon_t.div_ceil(self.segment_len_n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.horizon_t == 0 {
            return bad("horizon_t must be at least 1".into());
        }
        if self.num_intervals_m == 0 {
            return bad("num_intervals_m must be at least 1".into());
        }
        if self.segment_len_n == 0 {
            return bad("segment_len_n must be at least 1".into());
        }
        if self.family.is_linproc() {
            if self.order_k > COEFFICIENT_WIDTH {
                return bad(format!("order_k {} exceeds coefficient table width {COEFFICIENT_WIDTH}", self.order_k));
            }
            if self.horizon_t < self.order_k {
                return bad(format!("horizon_t {} shorter than order_k {}", self.horizon_t, self.order_k));
            }
            if self.family.uses_initial_bucket() && self.num_intervals_m > COEFFICIENT_WIDTH {
                return bad(format!(
                    "num_intervals_m {} exceeds the {COEFFICIENT_WIDTH} trajectory categories",
                    self.num_intervals_m
                ));
            }
            if self.family.uses_segments() && self.num_segments() > COEFFICIENT_WIDTH {
                return bad(format!(
                    "{} time segments exceed the {COEFFICIENT_WIDTH} coefficient rows",
                    self.num_segments()
                ));
            }
        } else if self.family == Family::RewardWhenInside && self.order_k != 0 {
            return bad("reward_when_inside has order_k 0".into());
        }
        for w in &self.wrappers {
            w.validate(self.family, self.horizon_t)?;
        }
        Ok(())
    }

    /// Canonical compact JSON (declaration-order keys).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("EnvSpec serializes")
    }

    pub fn from_json(text: &str) -> Result<EnvSpec> {
        Ok(serde_json::from_str(text)?)
    }

    /// Lowercase hex SHA-256 of the canonical JSON bytes.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_shape() {
        let spec = EnvSpec::linproc(Family::AllEqOne, 3).with_wrapper(WrapperSpec::RewardDelay { k: 8, gamma: 0.9 });
        assert_eq!(
            spec.to_canonical_json(),
            r#"{"family":"all_eq_one","order_k":3,"horizon_t":64,"num_intervals_m":8,"segment_len_n":8,"wrappers":[{"kind":"reward_delay","k":8,"gamma":0.9}],"seed":0}"#
        );
        assert_eq!(EnvSpec::from_json(&spec.to_canonical_json()).unwrap(), spec);
    }

    #[test]
    fn wrapper_json_forms() {
        let w: WrapperSpec = serde_json::from_str(r#"{"kind":"state_conv","w":[1,1],"mode":{"mod":5}}"#).unwrap();
        assert_eq!(w, WrapperSpec::StateConv { w: vec![1.0, 1.0], mode: ConvMode::Mod(5) });
        let w: WrapperSpec = serde_json::from_str(r#"{"kind":"state_conv","w":[1,0.5],"mode":"real"}"#).unwrap();
        assert_eq!(w, WrapperSpec::StateConv { w: vec![1.0, 0.5], mode: ConvMode::Real });
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"family":"all_eq","order_k":1,"horizon_t":64,"num_intervals_m":8,"segment_len_n":8,"wrappers":[],"seed":0,"extra":1}"#;
        assert!(EnvSpec::from_json(text).is_err());
        let w = r#"{"kind":"reward_delay","k":1,"gamma":1.0,"bogus":2}"#;
        assert!(serde_json::from_str::<WrapperSpec>(w).is_err());
    }

    #[test]
    fn digest_is_stable_hex() {
        let a = EnvSpec::linproc(Family::AllEq, 2);
        let d = a.digest();
        assert_eq!(d.len(), 64);
        assert!(d.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(d, a.clone().digest());
        assert_ne!(d, a.with_seed(1).digest());
    }

    #[test]
    fn order_beyond_table_width_rejected() {
        let spec = EnvSpec::linproc(Family::AllEqOne, 9);
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(m)) if m.contains("width")));
        assert!(EnvSpec::linproc(Family::AllEqOne, 8).validate().is_ok());
    }

    #[test]
    fn horizon_must_cover_warmup() {
        let mut spec = EnvSpec::linproc(Family::AllEq, 5);
        spec.horizon_t = 4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn segment_and_bucket_limits() {
        let mut spec = EnvSpec::linproc(Family::TimeEq, 2);
        spec.segment_len_n = 4;
        assert!(spec.validate().is_err());
        let mut spec = EnvSpec::linproc(Family::TrajEq, 2);
        spec.num_intervals_m = 9;
        assert!(spec.validate().is_err());
        // categories only matter for the trajectory-dependent families
        let mut spec = EnvSpec::linproc(Family::AllEq, 2);
        spec.num_intervals_m = 16;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn wrapper_invariants() {
        let real_zero = WrapperSpec::StateConv { w: vec![0.0, 1.0], mode: ConvMode::Real };
        assert!(real_zero.validate(Family::AllEq, 64).is_err());
        let modular = WrapperSpec::StateConv { w: vec![2.0, 1.0], mode: ConvMode::Mod(4) };
        assert!(modular.validate(Family::FiniteTabular, 64).is_err());
        let modular = WrapperSpec::StateConv { w: vec![3.0, 1.0], mode: ConvMode::Mod(4) };
        assert!(modular.validate(Family::FiniteTabular, 64).is_ok());
        assert!(matches!(modular.validate(Family::AllEq, 64), Err(Error::WrapperIncompatible(_))));
        let delay = WrapperSpec::RewardDelay { k: 64, gamma: 1.0 };
        assert!(matches!(delay.validate(Family::AllEq, 64), Err(Error::DelayExceedsHorizon { .. })));
        let delay = WrapperSpec::RewardDelay { k: 3, gamma: 0.0 };
        assert!(delay.validate(Family::AllEq, 64).is_err());
    }

    #[test]
    fn state_conv_presets() {
        let w1 = |level, sign| match WrapperSpec::state_conv_preset(level, sign).unwrap() {
            WrapperSpec::StateConv { w, .. } => w[1],
            _ => unreachable!(),
        };
        assert_eq!(w1(0, Sign::Positive), 0.0);
        assert_eq!(w1(0, Sign::Negative).to_bits(), 0.0f64.to_bits());
        assert_eq!(w1(3, Sign::Positive), 0.875);
        assert_eq!(w1(5, Sign::Positive), 1.0);
        assert_eq!(w1(5, Sign::Negative), -1.0);
        assert!(WrapperSpec::state_conv_preset(6, Sign::Positive).is_err());
    }
}
