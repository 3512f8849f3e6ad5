use num::{One, Zero};
use serde::{Deserialize, Serialize};

use super::{check_distribution, format_rational, parse_rational, Q};
use crate::error::{Error, Result};

/// A finite POMDP with exact rational tables.
///
/// Tables are either stationary (one layer) or given per step: `horizon` transition
/// layers and `horizon + 1` observation layers. Transition rows are indexed by
/// `s' * |R| + r` where `r` indexes `rewards`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePomdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub horizon: usize,
    pub rho0: Vec<Q>,
    pub rewards: Vec<Q>,
    transitions: Vec<Vec<Vec<Vec<Q>>>>,
    observations: Vec<Vec<Vec<Q>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PomdpJson {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "Z")]
    z: usize,
    rho0: Vec<String>,
    #[serde(rename = "T")]
    t: Vec<Vec<Vec<Vec<(usize, usize, String)>>>>,
    #[serde(rename = "O")]
    o: Vec<Vec<Vec<(usize, String)>>>,
    rewards: Vec<String>,
    horizon: usize,
}

impl FinitePomdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_obs: usize,
        rho0: Vec<Q>,
        rewards: Vec<Q>,
        transitions: Vec<Vec<Vec<Vec<Q>>>>,
        observations: Vec<Vec<Vec<Q>>>,
        horizon: usize,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::MalformedProcess(msg));
        if n_states == 0 || n_actions == 0 || n_obs == 0 || rewards.is_empty() {
            return bad("state, action, observation and reward sets must be nonempty".into());
        }
        if rho0.len() != n_states {
            return bad(format!("rho0 has {} entries for {n_states} states", rho0.len()));
        }
        check_distribution(&rho0, || "rho0".into())?;
        for (i, r) in rewards.iter().enumerate() {
            if rewards[..i].contains(r) {
                return bad(format!("reward value {} listed twice", format_rational(r)));
            }
        }
        if !(transitions.len() == 1 || transitions.len() >= horizon) || transitions.is_empty() {
            return bad(format!("{} transition layers for horizon {horizon}", transitions.len()));
        }
        if !(observations.len() == 1 || observations.len() > horizon) || observations.is_empty() {
            return bad(format!("{} observation layers for horizon {horizon}", observations.len()));
        }
        let width = n_states * rewards.len();
        for (t, layer) in transitions.iter().enumerate() {
            if layer.len() != n_states {
                return bad(format!("transition layer {t} has {} states", layer.len()));
            }
            for (s, per_action) in layer.iter().enumerate() {
                if per_action.len() != n_actions {
                    return bad(format!("transition T[{t}][{s}] has {} actions", per_action.len()));
                }
                for (a, row) in per_action.iter().enumerate() {
                    if row.len() != width {
                        return bad(format!("transition row T[{t}][{s}][{a}] has width {}", row.len()));
                    }
                    check_distribution(row, || format!("T[{t}][{s}][{a}]"))?;
                }
            }
        }
        for (t, layer) in observations.iter().enumerate() {
            if layer.len() != n_states {
                return bad(format!("observation layer {t} has {} states", layer.len()));
            }
            for (s, row) in layer.iter().enumerate() {
                if row.len() != n_obs {
                    return bad(format!("observation row O[{t}][{s}] has width {}", row.len()));
                }
                check_distribution(row, || format!("O[{t}][{s}]"))?;
            }
        }
        Ok(FinitePomdp { n_states, n_actions, n_obs, horizon, rho0, rewards, transitions, observations })
    }

    /// A fully observed POMDP (`Z = S`, identity observations).
    pub fn mdp(
        n_states: usize,
        n_actions: usize,
        rho0: Vec<Q>,
        rewards: Vec<Q>,
        transitions: Vec<Vec<Vec<Vec<Q>>>>,
        horizon: usize,
    ) -> Result<Self> {
        let identity =
            (0..n_states).map(|s| (0..n_states).map(|z| if z == s { Q::one() } else { Q::zero() }).collect()).collect();
        Self::new(n_states, n_actions, n_states, rho0, rewards, transitions, vec![identity], horizon)
    }

    pub fn n_rewards(&self) -> usize {
        self.rewards.len()
    }

    pub fn transition_layers(&self) -> usize {
        self.transitions.len()
    }

    pub fn observation_layers(&self) -> usize {
        self.observations.len()
    }

    /// True if the tables cover an episode of `horizon` steps.
    pub fn supports_horizon(&self, horizon: usize) -> bool {
        (self.transitions.len() == 1 || self.transitions.len() >= horizon)
            && (self.observations.len() == 1 || self.observations.len() > horizon)
    }

    fn t_layer(&self, t: usize) -> usize {
        if self.transitions.len() == 1 {
            0
        } else {
            t
        }
    }

    fn o_layer(&self, t: usize) -> usize {
        if self.observations.len() == 1 {
            0
        } else {
            t
        }
    }

    /// `T_t(s', r | s, a)` over `s' * |R| + r`.
    pub fn transition_row(&self, t: usize, s: usize, a: usize) -> &[Q] {
        &self.transitions[self.t_layer(t)][s][a]
    }

    pub fn transition(&self, t: usize, s: usize, a: usize, next: usize, r: usize) -> &Q {
        &self.transition_row(t, s, a)[next * self.rewards.len() + r]
    }

    /// `sum_r T_t(s', r | s, a)`.
    pub fn next_state_prob(&self, t: usize, s: usize, a: usize, next: usize) -> Q {
        let w = self.rewards.len();
        self.transition_row(t, s, a)[next * w..(next + 1) * w].iter().sum()
    }

    pub fn observation_row(&self, t: usize, s: usize) -> &[Q] {
        &self.observations[self.o_layer(t)][s]
    }

    pub fn observation(&self, t: usize, s: usize, z: usize) -> &Q {
        &self.observation_row(t, s)[z]
    }

    pub fn is_fully_observed(&self) -> bool {
        self.n_obs == self.n_states
            && self.observations.iter().all(|layer| {
                layer.iter().enumerate().all(|(s, row)| row.iter().enumerate().all(|(z, p)| p.is_one() == (z == s)))
            })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PomdpJson = serde_json::from_str(text)?;
        let parse_all = |xs: &[String]| xs.iter().map(|x| parse_rational(x)).collect::<Result<Vec<Q>>>();
        let n_r = raw.rewards.len();
        let mut transitions = Vec::with_capacity(raw.t.len());
        for layer in &raw.t {
            let mut l = Vec::with_capacity(layer.len());
            for per_action in layer {
                let mut rows = Vec::with_capacity(per_action.len());
                for entries in per_action {
                    let mut row = vec![Q::zero(); raw.s * n_r];
                    for (next, r, p) in entries {
                        if *next >= raw.s || *r >= n_r {
                            return Err(Error::MalformedProcess(format!(
                                "transition entry ({next}, {r}) out of range"
                            )));
                        }
                        row[next * n_r + r] += parse_rational(p)?;
                    }
                    rows.push(row);
                }
                l.push(rows);
            }
            transitions.push(l);
        }
        let mut observations = Vec::with_capacity(raw.o.len());
        for layer in &raw.o {
            let mut l = Vec::with_capacity(layer.len());
            for entries in layer {
                let mut row = vec![Q::zero(); raw.z];
                for (z, p) in entries {
                    if *z >= raw.z {
                        return Err(Error::MalformedProcess(format!("observation {z} out of range")));
                    }
                    row[*z] += parse_rational(p)?;
                }
                l.push(row);
            }
            observations.push(l);
        }
        Self::new(
            raw.s,
            raw.a,
            raw.z,
            parse_all(&raw.rho0)?,
            parse_all(&raw.rewards)?,
            transitions,
            observations,
            raw.horizon,
        )
    }

    /// Sparse JSON form; zero entries are omitted.
    pub fn to_json(&self) -> String {
        let n_r = self.rewards.len();
        let t = self
            .transitions
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|per_action| {
                        per_action
                            .iter()
                            .map(|row| {
                                row.iter()
                                    .enumerate()
                                    .filter(|(_, p)| !p.is_zero())
                                    .map(|(i, p)| (i / n_r, i % n_r, format_rational(p)))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let o = self
            .observations
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(_, p)| !p.is_zero())
                            .map(|(z, p)| (z, format_rational(p)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let raw = PomdpJson {
            s: self.n_states,
            a: self.n_actions,
            z: self.n_obs,
            rho0: self.rho0.iter().map(format_rational).collect(),
            t,
            o,
            rewards: self.rewards.iter().map(format_rational).collect(),
            horizon: self.horizon,
        };
        serde_json::to_string(&raw).expect("process serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, q, random};
    use super::*;

    #[test]
    fn json_round_trip() {
        for seed in 0..10 {
            let p = random::random_pomdp(seed, &random::Shape::small(seed));
            assert_eq!(FinitePomdp::from_json(&p.to_json()).unwrap(), p);
        }
        let m = fixtures::two_state_multiple_mds();
        assert_eq!(FinitePomdp::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_rows() {
        let text = r#"{"S":1,"A":1,"Z":1,"rho0":["1/1"],"T":[[[[[0,0,"1/2"]]]]],"O":[[[[0,"1/1"]]]],"rewards":["0/1"],"horizon":1}"#;
        assert!(matches!(FinitePomdp::from_json(text), Err(Error::MalformedProcess(_))));
        let text = r#"{"S":1,"A":1,"Z":1,"rho0":["1/1"],"T":[[[[[0,0,"1/1"]]]]],"O":[[[[0,"1/1"]]]],"rewards":["0/1"],"horizon":1,"x":0}"#;
        assert!(FinitePomdp::from_json(text).is_err());
        let ok = r#"{"S":1,"A":1,"Z":1,"rho0":["1/1"],"T":[[[[[0,0,"1/1"]]]]],"O":[[[[0,"1/1"]]]],"rewards":["0/1"],"horizon":1}"#;
        assert!(FinitePomdp::from_json(ok).is_ok());
    }

    #[test]
    fn mdp_is_fully_observed() {
        let m = fixtures::two_state_multiple_mds();
        assert!(m.is_fully_observed());
        assert_eq!(m.next_state_prob(0, 0, 1, 1), q(1, 1));
    }
}
