//! `pomdp-forge`: generate environment specs, roll out reference policies, run the
//! verification suites and serve environments over stdio.

mod args;
mod rollout;
mod serve;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pomdp_forge::verify::{run_suite, Suite, SuiteOptions};
use pomdp_forge::{EnvSpec, Error, Family, FinitePomdp};

/// Exit status for usage and infrastructure errors; property failures exit with 1.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "pomdp-forge", version, about = "Synthetic POMDP environments and exact verification oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a canonical environment spec and print its digest.
    Generate {
        #[arg(long)]
        family: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        /// `state_conv:level=L,sign=p|n`, `state_conv:w=1/-0.5[,mod=N]`,
        /// `reward_delay:k=K,gamma=G` or `reward_delay:level=L,gamma=G`; repeatable,
        /// applied in order.
        #[arg(long = "wrapper")]
        wrappers: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; the spec goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run episodes 0..E-1 and write JSONL trajectories plus summary statistics.
    Rollout {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: u64,
        /// `random`, `clairvoyant` or `scripted:<file>`.
        #[arg(long, default_value = "random")]
        policy: String,
        /// Seed for policy randomness; defaults to the spec seed.
        #[arg(long)]
        policy_seed: Option<u64>,
        /// Process table for `finite_tabular` specs.
        #[arg(long)]
        process: Option<PathBuf>,
        /// Trajectory output; skipped when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Statistics output; printed to stdout when absent.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run a property suite and print its JSON report.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one environment over newline-delimited JSON on stdin/stdout.
    Serve {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        process: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// Reads a spec file and applies the `POMDP_FORGE_SEED` override.
pub(crate) fn load_spec(path: &PathBuf) -> Result<EnvSpec, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut spec = EnvSpec::from_json(&text)?;
    if let Ok(seed) = std::env::var("POMDP_FORGE_SEED") {
        spec.seed = seed.trim().parse().map_err(|_| Error::Parse(format!("POMDP_FORGE_SEED={seed:?} is not a u64")))?;
    }
    spec.validate()?;
    Ok(spec)
}

pub(crate) fn load_process(path: Option<&PathBuf>) -> Result<Option<FinitePomdp>, Error> {
    path.map(|p| {
        let text = fs::read_to_string(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
        FinitePomdp::from_json(&text)
    })
    .transpose()
}

fn write_out(path: &PathBuf, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Generate { family, k, horizon, m, n, wrappers, seed, out } => {
            let family =
                Family::from_name(&family).ok_or_else(|| Error::InvalidSpec(format!("unknown family {family:?}")))?;
            let mut spec = match family {
                Family::RewardWhenInside => EnvSpec::reward_when_inside(),
                _ => EnvSpec::linproc(family, 0),
            };
            spec.family = family;
            if let Some(k) = k {
                spec.order_k = k;
            }
            if let Some(t) = horizon {
                spec.horizon_t = t;
            }
            if let Some(m) = m {
                spec.num_intervals_m = m;
            }
            if let Some(n) = n {
                spec.segment_len_n = n;
            }
            for w in &wrappers {
                spec.wrappers.push(args::parse_wrapper(w)?);
            }
            spec.seed = seed;
            spec.validate()?;
            let json = spec.to_canonical_json();
            match out {
                Some(path) => {
                    write_out(&path, &format!("{json}\n"))?;
                    println!("{}", spec.digest());
                }
                None => {
                    println!("{json}");
                    eprintln!("spec_digest {}", spec.digest());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Rollout { spec, episodes, policy, policy_seed, process, out, stats } => {
            let spec = load_spec(&spec)?;
            let process = load_process(process.as_ref())?;
            let policy = args::parse_policy(&policy)?;
            let summary = rollout::run(
                &spec,
                process.as_ref(),
                &policy,
                episodes,
                policy_seed.unwrap_or(spec.seed),
                out.as_ref(),
            )?;
            let json = serde_json::to_string_pretty(&summary)?;
            match stats {
                Some(path) => write_out(&path, &format!("{json}\n"))?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, instances, episodes, seed, fixture, out } => {
            let suite: Suite = suite.parse()?;
            let report = run_suite(suite, &SuiteOptions { instances, episodes, seed, fixture })?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(path) = out {
                write_out(&path, &format!("{json}\n"))?;
            }
            println!("{json}");
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Serve { spec, process } => {
            let spec = load_spec(&spec)?;
            let process = load_process(process.as_ref())?;
            serve::serve(&spec, process.as_ref(), std::io::stdin().lock(), std::io::stdout().lock())
        }
    }
}
