//! Finite number sets and the bracket of adjacent members around a real.
//!
//! A [`FormatSpec`] describes either a float-style set (sign, biased
//! exponent, stored fraction bits, optional subnormals) or a fixed-point grid
//! `{k · 2^-f}`. Every member, every gap between neighbours and every residual
//! `x - lo` for an `f64` input is exactly representable in `f64`, which is
//! what lets [`crate::rounding`] compute the round-up probability exactly.
//!
//! Semantics that a bare "finite set" leaves open, fixed here:
//!
//! - Infinities and NaNs are never members; `supports_inf_nan` only decides
//!   whether the all-ones exponent is reserved (IEEE style) or is an ordinary
//!   binade.
//! - Without subnormals the smallest positive member is the minimum normal
//!   number, and `0 < x < min_normal` brackets as `(0, min_normal)`.
//! - Signed fixed-point grids are symmetric: `k ∈ [-(2^(i+f) - 1), 2^(i+f) - 1]`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Exact power of two, including the `f64` subnormal range.
pub(crate) fn pow2(k: i32) -> f64 {
    debug_assert!((-1074..=1023).contains(&k), "2^{k} is not an f64");
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}

/// Binade exponent `floor(log2(a))` of a positive normal `f64`.
fn binade(a: f64) -> i32 {
    ((a.to_bits() >> 52) & 0x7ff) as i32 - 1023
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormatKind {
    Float {
        exponent_bits: u32,
        mantissa_bits: u32,
        supports_subnormals: bool,
        supports_inf_nan: bool,
    },
    Fixed {
        signed: bool,
        integer_bits: u32,
        fraction_bits: u32,
    },
}

/// A validated finite number set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct FormatSpec(FormatKind);

/// Adjacent members `lo ≤ x ≤ hi` with nothing from the set strictly between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub gap: f64,
}

impl Bracket {
    fn exact(x: f64) -> Self {
        Self {
            lo: x,
            hi: x,
            gap: 0.0,
        }
    }

    fn between(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            gap: hi - lo,
        }
    }

    fn negated(self) -> Self {
        Self::between(-self.hi, -self.lo)
    }

    pub fn is_exact(&self) -> bool {
        self.gap == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundoffKind {
    /// Relative to the magnitude of the rounded value (float formats).
    Relative,
    /// Absolute half-spacing of a uniform grid (fixed-point formats).
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Roundoff {
    pub value: f64,
    pub kind: RoundoffKind,
}

impl FormatSpec {
    /// Float-style format with subnormals and reserved Inf/NaN encodings.
    pub fn float(exponent_bits: u32, mantissa_bits: u32) -> Result<Self> {
        Self::float_with(exponent_bits, mantissa_bits, true, true)
    }

    pub fn float_with(
        exponent_bits: u32,
        mantissa_bits: u32,
        supports_subnormals: bool,
        supports_inf_nan: bool,
    ) -> Result<Self> {
        if !(2..=11).contains(&exponent_bits) {
            return Err(Error::InvalidFormat(format!(
                "exponent_bits must be in 2..=11, got {exponent_bits}"
            )));
        }
        if !(1..=52).contains(&mantissa_bits) {
            return Err(Error::InvalidFormat(format!(
                "mantissa_bits must be in 1..=52, got {mantissa_bits}"
            )));
        }
        let spec = Self(FormatKind::Float {
            exponent_bits,
            mantissa_bits,
            supports_subnormals,
            supports_inf_nan,
        });
        // An 11-bit exponent without reserved encodings has a top binade at 2^1024.
        if spec.emax() > 1023 {
            return Err(Error::InvalidFormat(format!(
                "largest binade 2^{} does not fit the f64 carrier",
                spec.emax()
            )));
        }
        Ok(spec)
    }

    pub fn fixed(signed: bool, integer_bits: u32, fraction_bits: u32) -> Result<Self> {
        let total = integer_bits + fraction_bits;
        if total == 0 {
            return Err(Error::InvalidFormat(
                "fixed-point format needs at least one bit".into(),
            ));
        }
        if total > 53 {
            return Err(Error::InvalidFormat(format!(
                "integer_bits + fraction_bits must be at most 53, got {total}"
            )));
        }
        Ok(Self(FormatKind::Fixed {
            signed,
            integer_bits,
            fraction_bits,
        }))
    }

    /// IEEE binary16 (`f5e10m`).
    pub fn binary16() -> Self {
        Self::float(5, 10).expect("binary16 is valid")
    }

    /// bfloat16 (`f8e7m`).
    pub fn bfloat16() -> Self {
        Self::float(8, 7).expect("bfloat16 is valid")
    }

    /// The one-bit grid `{0, 1}`.
    pub fn one_bit() -> Self {
        Self::fixed(false, 1, 0).expect("one-bit grid is valid")
    }

    pub fn kind(&self) -> FormatKind {
        self.0
    }

    pub fn total_bits(&self) -> u32 {
        match self.0 {
            FormatKind::Float {
                exponent_bits,
                mantissa_bits,
                ..
            } => 1 + exponent_bits + mantissa_bits,
            FormatKind::Fixed {
                signed,
                integer_bits,
                fraction_bits,
            } => signed as u32 + integer_bits + fraction_bits,
        }
    }

    fn bias(&self) -> i32 {
        match self.0 {
            FormatKind::Float { exponent_bits, .. } => (1 << (exponent_bits - 1)) - 1,
            FormatKind::Fixed { .. } => 0,
        }
    }

    /// Exponent of the smallest normal binade.
    fn emin(&self) -> i32 {
        1 - self.bias()
    }

    /// Exponent of the largest finite binade.
    fn emax(&self) -> i32 {
        match self.0 {
            FormatKind::Float {
                exponent_bits,
                supports_inf_nan,
                ..
            } => {
                let top = (1i32 << exponent_bits) - 1;
                let top = if supports_inf_nan { top - 1 } else { top };
                top - self.bias()
            }
            FormatKind::Fixed { .. } => 0,
        }
    }

    pub fn max_finite(&self) -> f64 {
        match self.0 {
            FormatKind::Float { mantissa_bits, .. } => {
                let m = mantissa_bits as i32;
                // (2 - 2^-m) · 2^emax, split to stay finite when emax = 1023.
                (2.0 - pow2(-m)) * pow2(self.emax())
            }
            FormatKind::Fixed {
                integer_bits,
                fraction_bits,
                ..
            } => {
                let steps = ((1u64 << (integer_bits + fraction_bits)) - 1) as f64;
                steps * pow2(-(fraction_bits as i32))
            }
        }
    }

    /// Smallest member of the set (`0` for unsigned fixed point).
    pub fn min_value(&self) -> f64 {
        match self.0 {
            FormatKind::Fixed { signed: false, .. } => 0.0,
            _ => -self.max_finite(),
        }
    }

    pub fn min_positive(&self) -> f64 {
        match self.0 {
            FormatKind::Float {
                mantissa_bits,
                supports_subnormals,
                ..
            } => {
                if supports_subnormals {
                    pow2(self.emin() - mantissa_bits as i32)
                } else {
                    pow2(self.emin())
                }
            }
            FormatKind::Fixed { fraction_bits, .. } => pow2(-(fraction_bits as i32)),
        }
    }

    /// Half the grid spacing: relative for floats, absolute for fixed point.
    pub fn unit_roundoff(&self) -> Roundoff {
        match self.0 {
            FormatKind::Float { mantissa_bits, .. } => Roundoff {
                value: pow2(-(mantissa_bits as i32) - 1),
                kind: RoundoffKind::Relative,
            },
            FormatKind::Fixed { fraction_bits, .. } => Roundoff {
                value: pow2(-(fraction_bits as i32) - 1),
                kind: RoundoffKind::Absolute,
            },
        }
    }

    fn check_input(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value {x}")));
        }
        if x < self.min_value() || x > self.max_finite() {
            return Err(Error::OutOfRange {
                value: x,
                min: self.min_value(),
                max: self.max_finite(),
            });
        }
        Ok(())
    }

    /// The two adjacent members enclosing `x`.
    pub fn bracket(&self, x: f64) -> Result<Bracket> {
        self.check_input(x)?;
        Ok(self.bracket_in_range(x))
    }

    fn bracket_in_range(&self, x: f64) -> Bracket {
        match self.0 {
            FormatKind::Float {
                mantissa_bits,
                supports_subnormals,
                ..
            } => {
                if x < 0.0 {
                    return self.bracket_in_range(-x).negated();
                }
                if x == 0.0 {
                    return Bracket::exact(0.0);
                }
                let m = mantissa_bits as i32;
                let min_normal = pow2(self.emin());
                let quantum = if x >= min_normal {
                    pow2(binade(x) - m)
                } else if supports_subnormals {
                    pow2(self.emin() - m)
                } else {
                    return Bracket::between(0.0, min_normal);
                };
                let lo = (x / quantum).floor() * quantum;
                if lo == x {
                    Bracket::exact(x)
                } else {
                    Bracket::between(lo, lo + quantum)
                }
            }
            FormatKind::Fixed { fraction_bits, .. } => {
                let f = fraction_bits as i32;
                let lo = (x * pow2(f)).floor() * pow2(-f);
                if lo == x {
                    Bracket::exact(x)
                } else {
                    Bracket::between(lo, lo + pow2(-f))
                }
            }
        }
    }

    pub fn is_representable(&self, x: f64) -> bool {
        self.check_input(x).is_ok() && self.bracket_in_range(x).is_exact()
    }

    /// Next member above a member `v`, or `None` at the top of the range.
    pub(crate) fn next_up(&self, v: f64) -> Option<f64> {
        debug_assert!(self.is_representable(v));
        if v >= self.max_finite() {
            return None;
        }
        let spacing = match self.0 {
            FormatKind::Float {
                mantissa_bits,
                supports_subnormals,
                ..
            } => {
                let m = mantissa_bits as i32;
                let a = v.abs();
                let min_normal = pow2(self.emin());
                if a < min_normal || (v < 0.0 && a == min_normal) {
                    if supports_subnormals {
                        pow2(self.emin() - m)
                    } else {
                        // only 0 and ±min_normal live here
                        min_normal
                    }
                } else if v < 0.0 && a == pow2(binade(a)) {
                    // stepping up from -2^e lands in the binade below
                    pow2(binade(a) - 1 - m)
                } else {
                    pow2(binade(a) - m)
                }
            }
            FormatKind::Fixed { fraction_bits, .. } => pow2(-(fraction_bits as i32)),
        };
        Some(v + spacing)
    }

    /// Next member below a member `v`, or `None` at the bottom of the range.
    pub(crate) fn next_down(&self, v: f64) -> Option<f64> {
        if v <= self.min_value() {
            return None;
        }
        match self.0 {
            FormatKind::Float { .. } => self.next_up(-v).map(|u| -u),
            FormatKind::Fixed { fraction_bits, .. } => Some(v - pow2(-(fraction_bits as i32))),
        }
    }

    /// Whether the member `v` has an even encoding (last stored bit zero).
    ///
    /// Float members use the stored-fraction LSB; fixed-point members use the
    /// parity of `k` in `v = k · 2^-f`.
    pub(crate) fn has_even_encoding(&self, v: f64) -> bool {
        let a = v.abs();
        if a == 0.0 {
            return true;
        }
        let quantum = match self.0 {
            FormatKind::Float { mantissa_bits, .. } => {
                let m = mantissa_bits as i32;
                if a < pow2(self.emin()) {
                    pow2(self.emin() - m)
                } else {
                    pow2(binade(a) - m)
                }
            }
            FormatKind::Fixed { fraction_bits, .. } => pow2(-(fraction_bits as i32)),
        };
        (a / quantum) % 2.0 == 0.0
    }
}

impl fmt::Display for FormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            FormatKind::Float {
                exponent_bits,
                mantissa_bits,
                supports_subnormals,
                supports_inf_nan,
            } => {
                write!(f, "f{exponent_bits}e{mantissa_bits}m")?;
                if !supports_subnormals {
                    f.write_str(":nosub")?;
                }
                if !supports_inf_nan {
                    f.write_str(":noinf")?;
                }
                Ok(())
            }
            FormatKind::Fixed {
                signed,
                integer_bits,
                fraction_bits,
            } => {
                let prefix = if signed { "q" } else { "uq" };
                write!(f, "{prefix}{integer_bits}.{fraction_bits}")
            }
        }
    }
}

impl FromStr for FormatSpec {
    type Err = Error;

    /// Parses `f<e>e<m>m`, `bf16`, `fp16`, `q<i>.<f>` or `uq<i>.<f>`.
    ///
    /// Float formats accept `:nosub` and `:noinf` suffixes.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |token: &str, why: &str| Error::InvalidFormat(format!("'{token}': {why}"));
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let base = match head {
            "bf16" => Self::bfloat16(),
            "fp16" => Self::binary16(),
            _ if head.starts_with("uq") || head.starts_with('q') => {
                let signed = head.starts_with('q');
                let body = head.trim_start_matches('u').trim_start_matches('q');
                let (i, f) = body
                    .split_once('.')
                    .ok_or_else(|| bad(head, "expected q<integer_bits>.<fraction_bits>"))?;
                let i = i
                    .parse()
                    .map_err(|_| bad(i, "integer bits must be a nonnegative integer"))?;
                let f = f
                    .parse()
                    .map_err(|_| bad(f, "fraction bits must be a nonnegative integer"))?;
                Self::fixed(signed, i, f)?
            }
            _ if head.starts_with('f') && head.ends_with('m') => {
                let body = &head[1..head.len() - 1];
                let (e, m) = body
                    .split_once('e')
                    .ok_or_else(|| bad(head, "expected f<exponent_bits>e<mantissa_bits>m"))?;
                let e = e.parse().map_err(|_| bad(e, "exponent bits must be an integer"))?;
                let m = m.parse().map_err(|_| bad(m, "mantissa bits must be an integer"))?;
                Self::float(e, m)?
            }
            _ => return Err(bad(head, "unrecognised format")),
        };
        let FormatKind::Float {
            exponent_bits,
            mantissa_bits,
            mut supports_subnormals,
            mut supports_inf_nan,
        } = base.0
        else {
            return match parts.next() {
                Some(extra) => Err(bad(extra, "fixed-point formats take no modifiers")),
                None => Ok(base),
            };
        };
        for modifier in parts {
            match modifier {
                "nosub" => supports_subnormals = false,
                "noinf" => supports_inf_nan = false,
                other => return Err(bad(other, "unknown modifier (expected nosub or noinf)")),
            }
        }
        Self::float_with(exponent_bits, mantissa_bits, supports_subnormals, supports_inf_nan)
    }
}
