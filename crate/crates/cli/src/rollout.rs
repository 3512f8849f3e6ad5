use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use pomdp_forge::{make_env, make_tabular_env, rollout, BoxedEnv, EnvSpec, Error, Family, FinitePomdp, PolicyKind};
use rayon::prelude::*;
use serde::Serialize;

/// Episodes simulated between writes; bounds memory for long runs.
const BATCH: u64 = 512;

#[derive(Debug, Serialize)]
pub struct RolloutStats {
    pub spec_digest: String,
    pub episodes: u64,
    pub mean_return: Option<f64>,
    /// Sample standard deviation (0 for a single episode).
    pub std_return: Option<f64>,
    pub per_step_reward_mean: Option<f64>,
}

pub fn build_env(spec: &EnvSpec, process: Option<&FinitePomdp>) -> Result<BoxedEnv, Error> {
    match (spec.family, process) {
        (Family::FiniteTabular, Some(p)) => make_tabular_env(spec, p),
        (Family::FiniteTabular, None) => Err(Error::InvalidSpec("finite_tabular needs --process".into())),
        (_, Some(_)) => Err(Error::InvalidSpec("--process only applies to finite_tabular".into())),
        (_, None) => make_env(spec),
    }
}

pub fn run(
    spec: &EnvSpec,
    process: Option<&FinitePomdp>,
    policy: &PolicyKind,
    episodes: u64,
    policy_seed: u64,
    out: Option<&PathBuf>,
) -> Result<RolloutStats, Error> {
    let digest = spec.digest();
    // fail fast on an incompatible policy before spawning workers
    let probe = build_env(spec, process)?;
    policy.bind(spec, probe.num_actions(), policy_seed)?;
    let mut writer = out
        .map(|p| File::create(p).map(BufWriter::new).map_err(|e| Error::Parse(format!("{}: {e}", p.display()))))
        .transpose()?;
    let (mut returns, mut steps) = (Vec::with_capacity(episodes as usize), 0usize);
    let mut start = 0;
    while start < episodes {
        let end = (start + BATCH).min(episodes);
        let batch: Vec<(f64, usize, String)> = (start..end)
            .into_par_iter()
            .map_init(
                || -> Result<_, Error> {
                    let env = build_env(spec, process)?;
                    let agent = policy.bind(spec, env.num_actions(), policy_seed)?;
                    Ok((env, agent))
                },
                |state, ep| {
                    let (env, agent) = state.as_mut().map_err(|e| e.clone())?;
                    let traj = rollout(env.as_mut(), agent.as_mut(), ep, &digest)?;
                    Ok((traj.total_reward(), traj.len(), traj.to_jsonl()?))
                },
            )
            .collect::<Result<_, Error>>()?;
        for (ret, len, line) in batch {
            returns.push(ret);
            steps += len;
            if let Some(w) = writer.as_mut() {
                writeln!(w, "{line}").map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        start = end;
    }
    if let Some(mut w) = writer {
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    }
    let n = returns.len() as f64;
    let mean = (!returns.is_empty()).then(|| returns.iter().sum::<f64>() / n);
    let std = mean.map(|mu| {
        if returns.len() < 2 {
            0.0
        } else {
            (returns.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        }
    });
    let per_step = (steps > 0).then(|| returns.iter().sum::<f64>() / steps as f64);
    Ok(RolloutStats {
        spec_digest: digest,
        episodes,
        mean_return: mean,
        std_return: std,
        per_step_reward_mean: per_step,
    })
}
