//! Line-delimited JSON session serving one environment.
//!
//! Requests carry an `op` (`hello`, `reset`, `step`, `close`) and optionally an integer
//! `id`. Every response echoes an id: the request's own, which must exceed the previous
//! one, or else the next value of a server counter. `hello` must come first; a client
//! that sends a different protocol version or spec digest gets an error and the session
//! ends.

use std::io::{BufRead, Write};
use std::process::ExitCode;

use pomdp_forge::{EnvSpec, Error, FinitePomdp};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::rollout::build_env;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Request {
    op: String,
    #[serde(default)]
    id: Option<u64>,
    #[serde(default)]
    protocol: Option<String>,
    #[serde(default)]
    spec_digest: Option<String>,
    #[serde(default)]
    episode: Option<u64>,
    #[serde(default)]
    action: Option<usize>,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::EpisodeFinished => "EpisodeFinished",
        Error::NotReset => "NotReset",
        Error::ActionOutOfRange { .. } => "ActionOutOfRange",
        _ => "Error",
    }
}

fn fail(id: u64, kind: &str, message: impl Into<String>) -> Value {
    json!({"id": id, "ok": false, "error": {"kind": kind, "message": message.into()}})
}

pub fn serve(
    spec: &EnvSpec,
    process: Option<&FinitePomdp>,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<ExitCode, Error> {
    let digest = spec.digest();
    let mut env = build_env(spec, process)?;
    let mut greeted = false;
    let mut next_id = 0u64;
    let mut last_id: Option<u64> = None;
    let io = |e: std::io::Error| Error::Parse(format!("stdio: {e}"));
    for line in input.lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fatal = false;
        let mut close = false;
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => fail(next_id, "ProtocolError", format!("malformed request: {e}")),
            Ok(req) => {
                if let Some(bad) = req.id.filter(|&id| last_id.is_some_and(|last| id <= last)) {
                    fail(next_id, "ProtocolError", format!("request id {bad} does not increase"))
                } else {
                    let id = req.id.unwrap_or(next_id);
                    match req.op.as_str() {
                        "hello" => {
                            if req.protocol.as_deref().is_some_and(|p| p != PROTOCOL_VERSION) {
                                fatal = true;
                                fail(id, "ProtocolMismatch", format!("server speaks protocol {PROTOCOL_VERSION}"))
                            } else if req.spec_digest.as_deref().is_some_and(|d| d != digest) {
                                fatal = true;
                                fail(id, "SpecMismatch", format!("server spec digest is {digest}"))
                            } else {
                                greeted = true;
                                json!({
                                    "id": id, "ok": true, "op": "hello",
                                    "protocol": PROTOCOL_VERSION, "spec_digest": digest,
                                    "num_actions": env.num_actions(), "horizon": env.horizon(),
                                })
                            }
                        }
                        _ if !greeted => fail(id, "ProtocolError", "hello must come first"),
                        "reset" => match req.episode {
                            Some(ep) => json!({"id": id, "ok": true, "observation": env.reset(ep)}),
                            None => fail(id, "ProtocolError", "reset needs an episode"),
                        },
                        "step" => match req.action.map(|a| env.step(a)) {
                            Some(Ok(out)) => json!({
                                "id": id, "ok": true, "observation": out.observation,
                                "reward": out.reward, "done": out.done,
                            }),
                            Some(Err(e)) => fail(id, error_kind(&e), e.to_string()),
                            None => fail(id, "ProtocolError", "step needs an action"),
                        },
                        "close" => {
                            close = true;
                            json!({"id": id, "ok": true, "op": "close"})
                        }
                        other => fail(id, "ProtocolError", format!("unknown op {other:?}")),
                    }
                }
            }
        };
        let sent = response["id"].as_u64().unwrap_or(next_id);
        last_id = Some(sent);
        next_id = sent + 1;
        writeln!(output, "{response}").map_err(io)?;
        output.flush().map_err(io)?;
        if fatal {
            return Ok(ExitCode::from(crate::EXIT_ERROR));
        }
        if close {
            break;
        }
    }
    Ok(ExitCode::SUCCESS)
}
