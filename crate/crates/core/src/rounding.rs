//! Rounding rules onto a [`FormatSpec`].
//!
//! Every rule picks one endpoint of the bracket `lo ≤ x ≤ hi`:
//!
//! - `NearestEven`: the nearer endpoint, ties to the even encoding.
//! - `SrProportional`: `hi` with probability `p(x) = (x - lo) / (hi - lo)`.
//! - `SrUpDown`: `hi` with probability ½ regardless of `x`.
//! - `SrSelective { tau }`: proportional SR when `tau ≤ p(x) ≤ 1 - tau`,
//!   nearest-even otherwise.
//!
//! Members of the set are returned unchanged by every rule and consume no
//! random draw. A stochastic decision compares one uniform draw `u ∈ [0, 1)`
//! against the threshold with a strict `u < p`, so `p = 0` never rounds up and
//! `p = 1` always does. The deterministic branch of `SrSelective` does not
//! consume a draw, which shifts the counter alignment of later operations
//! relative to plain proportional SR.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::formats::FormatSpec;
use crate::rng::RngKey;

/// Default selective-SR threshold.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundingMode {
    NearestEven,
    SrProportional,
    SrUpDown,
    SrSelective { tau: f64 },
}

impl RoundingMode {
    pub fn selective(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 0.5 {
            Ok(Self::SrSelective { tau })
        } else {
            Err(Error::InvalidInput(format!(
                "selective SR threshold must lie in (0, 0.5), got {tau}"
            )))
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Self::NearestEven)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::SrSelective { tau } => Self::selective(tau).map(drop),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NearestEven => f.write_str("rn"),
            Self::SrProportional => f.write_str("sr"),
            Self::SrUpDown => f.write_str("sr-updown"),
            Self::SrSelective { tau } => write!(f, "sr-sel:{tau}"),
        }
    }
}

impl FromStr for RoundingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rn" => Ok(Self::NearestEven),
            "sr" => Ok(Self::SrProportional),
            "sr-updown" => Ok(Self::SrUpDown),
            "sr-sel" => Self::selective(DEFAULT_TAU),
            other => match other.strip_prefix("sr-sel:") {
                Some(tau) => {
                    let tau = tau.parse().map_err(|_| {
                        Error::InvalidInput(format!("'{tau}': threshold must be a number"))
                    })?;
                    Self::selective(tau)
                }
                None => Err(Error::InvalidInput(format!(
                    "'{other}': unknown rounding mode (expected rn, sr, sr-updown, sr-sel:<tau>)"
                ))),
            },
        }
    }
}

impl Serialize for RoundingMode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverflowPolicy {
    /// Values outside the format range are an error.
    #[default]
    Strict,
    /// Values outside the format range clamp to the nearest extreme member.
    Saturate,
}

impl fmt::Display for OverflowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Strict => "strict",
            Self::Saturate => "saturate",
        })
    }
}

impl FromStr for OverflowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "strict" => Ok(Self::Strict),
            "saturate" => Ok(Self::Saturate),
            other => Err(Error::InvalidInput(format!(
                "'{other}': unknown overflow policy (expected strict or saturate)"
            ))),
        }
    }
}

impl Serialize for OverflowPolicy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Probability that proportional SR rounds `x` up; 0 for members.
pub fn round_prob_up(fmt: &FormatSpec, x: f64) -> Result<f64> {
    let b = fmt.bracket(x)?;
    if b.is_exact() {
        Ok(0.0)
    } else {
        Ok((x - b.lo) / b.gap)
    }
}

/// Rounds `x` with the uniform draw at `(key, counter)` when one is needed.
pub fn round(
    fmt: &FormatSpec,
    mode: RoundingMode,
    policy: OverflowPolicy,
    x: f64,
    key: RngKey,
    counter: u64,
) -> Result<f64> {
    round_parts(fmt, mode, policy, x, 0.0, || key.uniform_unit(counter)).map(|r| r.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Rounded {
    pub value: f64,
    pub drew: bool,
}

impl Rounded {
    fn exact(value: f64) -> Self {
        Self { value, drew: false }
    }
}

/// Where the exact value sits inside its bracket.
struct Position {
    lo: f64,
    hi: f64,
    /// p(x) = (x - lo) / (hi - lo)
    prob_up: f64,
    /// Sign of (x - lo) - (hi - lo) / 2, decided exactly.
    vs_midpoint: Ordering,
}

/// Rounds the exact real `head + tail`.
///
/// `head` must be the carrier-nearest value of the sum (as produced by
/// `TwoSum`/`TwoProduct`), so `|tail|` is at most half an `f64` ulp of `head`.
/// `draw` is called at most once.
pub(crate) fn round_parts(
    fmt: &FormatSpec,
    mode: RoundingMode,
    policy: OverflowPolicy,
    head: f64,
    tail: f64,
    draw: impl FnOnce() -> f64,
) -> Result<Rounded> {
    mode.validate()?;
    // an overflowed head may carry a NaN tail (inf - inf); range handling covers it
    if head.is_nan() || (head.is_finite() && tail.is_nan()) {
        return Err(Error::InvalidInput("NaN cannot be rounded".into()));
    }
    let (min, max) = (fmt.min_value(), fmt.max_finite());
    let above = head > max || (head == max && tail > 0.0);
    let below = head < min || (head == min && tail < 0.0);
    if above || below {
        return match policy {
            OverflowPolicy::Saturate => Ok(Rounded::exact(if above { max } else { min })),
            OverflowPolicy::Strict => Err(Error::OutOfRange {
                value: head + tail,
                min,
                max,
            }),
        };
    }

    let Some(pos) = locate(fmt, head, tail)? else {
        return Ok(Rounded::exact(head));
    };
    let nearest = || match pos.vs_midpoint {
        Ordering::Less => pos.lo,
        Ordering::Greater => pos.hi,
        Ordering::Equal => {
            let lo_even = fmt.has_even_encoding(pos.lo);
            let hi_even = fmt.has_even_encoding(pos.hi);
            if hi_even && !lo_even {
                pos.hi
            } else if lo_even && !hi_even {
                pos.lo
            } else {
                // both even only happens across the flushed (0, min_normal) gap
                if pos.lo.abs() <= pos.hi.abs() {
                    pos.lo
                } else {
                    pos.hi
                }
            }
        }
    };
    let stochastic = |threshold: f64| {
        let value = if draw() < threshold { pos.hi } else { pos.lo };
        Rounded { value, drew: true }
    };
    Ok(match mode {
        RoundingMode::NearestEven => Rounded::exact(nearest()),
        RoundingMode::SrProportional => stochastic(pos.prob_up),
        RoundingMode::SrUpDown => stochastic(0.5),
        RoundingMode::SrSelective { tau } => {
            if pos.prob_up < tau || pos.prob_up > 1.0 - tau {
                Rounded::exact(nearest())
            } else {
                stochastic(pos.prob_up)
            }
        }
    })
}

/// Brackets `head + tail`; `None` when it is a member of the set.
fn locate(fmt: &FormatSpec, head: f64, tail: f64) -> Result<Option<Position>> {
    let b = fmt.bracket(head)?;
    if !b.is_exact() {
        // head lies strictly inside (lo, hi); (head - lo) is exact and
        // |tail| is smaller than any nonzero distance from head to the midpoint.
        let offset = head - b.lo;
        let half = b.gap / 2.0;
        let vs_midpoint = match offset.partial_cmp(&half).expect("finite") {
            Ordering::Equal => tail.partial_cmp(&0.0).expect("finite"),
            other => other,
        };
        let prob_up = ((offset + tail) / b.gap).clamp(0.0, 1.0);
        return Ok(Some(Position {
            lo: b.lo,
            hi: b.hi,
            prob_up,
            vs_midpoint,
        }));
    }
    if tail == 0.0 {
        return Ok(None);
    }
    // head is a member and the exact value sits just beside it.
    let (lo, hi) = if tail > 0.0 {
        (head, fmt.next_up(head).expect("range checked"))
    } else {
        (fmt.next_down(head).expect("range checked"), head)
    };
    let gap = hi - lo;
    let half = gap / 2.0;
    let dist = tail.abs();
    let (prob_up, vs_midpoint) = if tail > 0.0 {
        (dist / gap, dist.partial_cmp(&half).expect("finite"))
    } else {
        ((gap - dist) / gap, half.partial_cmp(&dist).expect("finite"))
    };
    Ok(Some(Position {
        lo,
        hi,
        prob_up,
        vs_midpoint,
    }))
}
