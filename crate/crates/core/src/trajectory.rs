//! Episode records and their JSON-Lines form.
//!
//! One episode per line:
//! `{"spec_digest": hex, "episode": int, "obs": [[...]], "act": [...], "rew": [...], "terminal": bool}`.
//! Reals are written with 17 significant digits so parsing recovers the exact bits.

use std::fmt::Write;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub t: usize,
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub spec_digest: String,
    pub episode_index: u64,
    pub steps: Vec<Step>,
    pub terminal: bool,
}

/// Writes `x` in scientific notation with 17 significant digits.
pub fn write_real(out: &mut String, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::SerializationOverflow(x));
    }
    write!(out, "{x:.16e}").expect("writing to a String");
    Ok(())
}

pub fn write_real_list(out: &mut String, xs: &[f64]) -> Result<()> {
    out.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_real(out, x)?;
    }
    out.push(']');
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    spec_digest: String,
    episode: u64,
    obs: Vec<Vec<f64>>,
    act: Vec<usize>,
    rew: Vec<f64>,
    terminal: bool,
}

impl Trajectory {
    pub fn new(spec_digest: impl Into<String>, episode_index: u64) -> Self {
        Trajectory { spec_digest: spec_digest.into(), episode_index, steps: Vec::new(), terminal: false }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 1.0;
        let mut acc = 0.0;
        for s in &self.steps {
            acc += g * s.reward;
            g *= gamma;
        }
        acc
    }

    /// The first `len` steps as a (non-terminal) trajectory.
    pub fn prefix(&self, len: usize) -> Trajectory {
        let len = len.min(self.steps.len());
        Trajectory {
            spec_digest: self.spec_digest.clone(),
            episode_index: self.episode_index,
            steps: self.steps[..len].to_vec(),
            terminal: self.terminal && len == self.steps.len(),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.observation.as_slice())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::with_capacity(64 + self.steps.len() * 48);
        // digests are hex, so no escaping is needed; anything else goes through serde
        let digest = serde_json::to_string(&self.spec_digest)?;
        write!(out, "{{\"spec_digest\":{digest},\"episode\":{},\"obs\":[", self.episode_index).unwrap();
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_real_list(&mut out, &s.observation)?;
        }
        out.push_str("],\"act\":[");
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}", s.action).unwrap();
        }
        out.push_str("],\"rew\":");
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.reward).collect();
        write_real_list(&mut out, &rewards)?;
        write!(out, ",\"terminal\":{}}}", self.terminal).unwrap();
        Ok(out)
    }

    pub fn from_jsonl(line: &str) -> Result<Trajectory> {
        let rec: Record = serde_json::from_str(line)?;
        if rec.obs.len() != rec.act.len() || rec.act.len() != rec.rew.len() {
            return Err(Error::Parse(format!(
                "obs/act/rew lengths differ: {}/{}/{}",
                rec.obs.len(),
                rec.act.len(),
                rec.rew.len()
            )));
        }
        let steps = rec
            .obs
            .into_iter()
            .zip(rec.act)
            .zip(rec.rew)
            .enumerate()
            .map(|(t, ((observation, action), reward))| Step { t, observation, action, reward })
            .collect();
        Ok(Trajectory { spec_digest: rec.spec_digest, episode_index: rec.episode, steps, terminal: rec.terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_record() {
        let t = Trajectory::new("ab", 3);
        let line = t.to_jsonl().unwrap();
        assert_eq!(line, r#"{"spec_digest":"ab","episode":3,"obs":[],"act":[],"rew":[],"terminal":false}"#);
        assert_eq!(Trajectory::from_jsonl(&line).unwrap(), t);
    }

    #[test]
    fn seventeen_digits() {
        let mut s = String::new();
        write_real(&mut s, 0.1).unwrap();
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn non_finite_rejected() {
        let mut t = Trajectory::new("x", 0);
        t.steps.push(Step { t: 0, observation: vec![f64::NAN], action: 0, reward: 0.0 });
        assert!(matches!(t.to_jsonl(), Err(Error::SerializationOverflow(_))));
        t.steps[0].observation[0] = 0.5;
        t.steps[0].reward = f64::INFINITY;
        assert!(matches!(t.to_jsonl(), Err(Error::SerializationOverflow(_))));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let line = r#"{"spec_digest":"ab","episode":0,"obs":[[0.5]],"act":[],"rew":[],"terminal":false}"#;
        assert!(Trajectory::from_jsonl(line).is_err());
    }

    #[test]
    fn prefix_truncates() {
        let mut t = Trajectory::new("d", 0);
        for i in 0..4 {
            t.steps.push(Step { t: i, observation: vec![i as f64], action: i, reward: 1.0 });
        }
        t.terminal = true;
        let p = t.prefix(2);
        assert_eq!(p.len(), 2);
        assert!(!p.terminal);
        assert!(t.prefix(4).terminal);
    }

    fn arb_trajectory() -> impl Strategy<Value = Trajectory> {
        let step = (prop::collection::vec(-1e6f64..1e6, 1..3), 0usize..8, -10f64..10f64);
        (any::<u64>(), prop::collection::vec(step, 0..20), any::<bool>()).prop_map(|(ep, steps, terminal)| Trajectory {
            spec_digest: "0f".repeat(32),
            episode_index: ep,
            steps: steps
                .into_iter()
                .enumerate()
                .map(|(t, (observation, action, reward))| Step { t, observation, action, reward })
                .collect(),
            terminal,
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn jsonl_round_trip(t in arb_trajectory()) {
            let line = t.to_jsonl().unwrap();
            let back = Trajectory::from_jsonl(&line).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.to_jsonl().unwrap(), line);
        }
    }
}
