//! Exact-rational tabular processes: POMDPs, history-dependent processes (HDPs), the
//! POMDP-to-HDP construction, and exhaustive trajectory enumeration.

mod enumerate;
pub mod fixtures;
mod hdp;
mod pomdp;
pub mod random;
mod transform;

pub use enumerate::{
    enumerate_distribution, DeterministicPolicy, History, Policy, Process, TrajectoryDistribution, UniformPolicy,
    ENUMERATION_LIMIT,
};
pub use hdp::{equivalent_hdp, phi, FiniteHdp, HistoryKey};
pub use pomdp::FinitePomdp;
pub use transform::{delayed_hdp, has_induced_hdp};

use num::{BigInt, BigRational, One, Zero};

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(numer: i64, denom: i64) -> Q {
    Q::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rational(text: &str) -> Result<Q> {
    let text = text.trim();
    let parsed = match text.split_once('/') {
        Some((p, d)) => {
            let p: BigInt = p.trim().parse().map_err(|_| Error::Parse(format!("bad rational {text:?}")))?;
            let d: BigInt = d.trim().parse().map_err(|_| Error::Parse(format!("bad rational {text:?}")))?;
            if d.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {text:?}")));
            }
            Q::new(p, d)
        }
        None => Q::from_integer(text.parse().map_err(|_| Error::Parse(format!("bad rational {text:?}")))?),
    };
    Ok(parsed)
}

/// Always `"p/q"`, reduced.
pub fn format_rational(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub(crate) fn check_distribution(row: &[Q], what: impl Fn() -> String) -> Result<()> {
    if row.iter().any(|p| p < &Q::zero()) {
        return Err(Error::MalformedProcess(format!("{}: negative probability", what())));
    }
    let total: Q = row.iter().sum();
    if !total.is_one() {
        return Err(Error::MalformedProcess(format!("{}: sums to {}", what(), format_rational(&total))));
    }
    Ok(())
}

/// All sequences over `0..base` of length `len`, in lexicographic order.
pub fn all_sequences(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(len)];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

/// `base^len` if it fits under `limit`.
pub fn bounded_pow(base: usize, len: usize, limit: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..len {
        acc = acc.checked_mul(base)?;
        if acc > limit {
            return None;
        }
    }
    Some(acc)
}
