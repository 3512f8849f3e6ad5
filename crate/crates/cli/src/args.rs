//! Parsing of the compact wrapper and policy arguments.

use std::fs;

use pomdp_forge::{ConvMode, Error, PolicyKind, Sign, WrapperSpec};

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value.parse().map_err(|_| bad(format!("bad value {value:?} for {key}")))
}

/// `kind:key=value,key=value`.
pub fn parse_wrapper(text: &str) -> Result<WrapperSpec, Error> {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut fields = Vec::new();
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
        fields.push((k.trim(), v.trim()));
    }
    let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let known = |allowed: &[&str]| match fields.iter().find(|(k, _)| !allowed.contains(k)) {
        Some((k, _)) => Err(bad(format!("unknown {kind} field {k:?}"))),
        None => Ok(()),
    };
    match kind {
        "state_conv" => {
            known(&["level", "sign", "w", "mod"])?;
            if let Some(level) = get("level") {
                let sign = match get("sign").unwrap_or("p") {
                    "p" | "+" | "pos" => Sign::Positive,
                    "n" | "-" | "neg" => Sign::Negative,
                    other => return Err(bad(format!("sign must be p or n, got {other:?}"))),
                };
                if get("w").is_some() || get("mod").is_some() {
                    return Err(bad("level presets take no w or mod"));
                }
                return WrapperSpec::state_conv_preset(number("level", level)?, sign);
            }
            let w = get("w").ok_or_else(|| bad("state_conv needs level= or w="))?;
            let w = w.split('/').map(|x| number::<f64>("w", x)).collect::<Result<Vec<_>, _>>()?;
            let mode = match get("mod") {
                Some(n) => ConvMode::Mod(number("mod", n)?),
                None => ConvMode::Real,
            };
            Ok(WrapperSpec::StateConv { w, mode })
        }
        "reward_delay" => {
            known(&["k", "level", "gamma"])?;
            let gamma = number("gamma", get("gamma").unwrap_or("1"))?;
            match (get("k"), get("level")) {
                (Some(k), None) => Ok(WrapperSpec::RewardDelay { k: number("k", k)?, gamma }),
                (None, Some(level)) => Ok(WrapperSpec::reward_delay_preset(number("level", level)?, gamma)),
                _ => Err(bad("reward_delay needs exactly one of k= or level=")),
            }
        }
        other => Err(bad(format!("unknown wrapper kind {other:?}"))),
    }
}

/// `random`, `clairvoyant` or `scripted:<file>`; the file holds a JSON array of actions
/// or whitespace-separated integers.
pub fn parse_policy(text: &str) -> Result<PolicyKind, Error> {
    match text {
        "random" => Ok(PolicyKind::UniformRandom),
        "clairvoyant" => Ok(PolicyKind::ClairvoyantLinProc),
        _ => {
            let path =
                text.strip_prefix("scripted:").ok_or_else(|| Error::Parse(format!("unknown policy {text:?}")))?;
            let body = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
            let actions: Vec<usize> = if body.trim_start().starts_with('[') {
                serde_json::from_str(&body)?
            } else {
                body.split_whitespace().map(|x| number("action", x)).collect::<Result<_, _>>()?
            };
            Ok(PolicyKind::Scripted(actions))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapper_forms() {
        assert_eq!(
            parse_wrapper("state_conv:level=5,sign=n").unwrap(),
            WrapperSpec::StateConv { w: vec![1.0, -1.0], mode: ConvMode::Real }
        );
        assert_eq!(
            parse_wrapper("state_conv:w=2/3/1,mod=5").unwrap(),
            WrapperSpec::StateConv { w: vec![2.0, 3.0, 1.0], mode: ConvMode::Mod(5) }
        );
        assert_eq!(
            parse_wrapper("reward_delay:level=2,gamma=0.9").unwrap(),
            WrapperSpec::RewardDelay { k: 16, gamma: 0.9 }
        );
        assert!(parse_wrapper("reward_delay:k=1,level=1").is_err());
        assert!(parse_wrapper("state_conv:level=1,colour=red").is_err());
        assert!(parse_wrapper("blur").is_err());
    }
}
