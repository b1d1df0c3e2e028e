//! Counter-based randomness.
//!
//! Every draw is `philox4x32_10(key = seed, counter = [counter, stream])`, so
//! the output depends only on `(seed, stream, counter)`. There is no hidden
//! state: callers own their counters, and trials that run in any order or on
//! any thread see the same numbers.
//!
//! Streams are named by label paths such as `["stagnation", "sr", 17]`. The
//! path is encoded as a sequence of tagged, length-prefixed items, hashed with
//! FNV-1a (64-bit) and finalised with the SplitMix64 mixer. That encoding is
//! part of the reproducibility contract and must not change.

use serde::Serialize;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox-4x32 with 10 rounds, as published with Random123.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(ctr[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(ctr[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// One element of a stream label path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Str(String),
    Int(u64),
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Str(s)
    }
}

impl From<u64> for Label {
    fn from(v: u64) -> Self {
        Label::Int(v)
    }
}

impl From<usize> for Label {
    fn from(v: usize) -> Self {
        Label::Int(v as u64)
    }
}

impl From<u32> for Label {
    fn from(v: u32) -> Self {
        Label::Int(u64::from(v))
    }
}

impl From<i32> for Label {
    fn from(v: i32) -> Self {
        Label::Int(v as u64)
    }
}

/// Identity of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Key for the stream named by `labels` under `seed`.
    pub fn derive<I, L>(seed: u64, labels: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: Into<Label>,
    {
        let mut h = FNV_OFFSET;
        let mut count = 0u64;
        for label in labels {
            match label.into() {
                Label::Str(s) => {
                    h = fnv1a(h, b"s");
                    h = fnv1a(h, &(s.len() as u64).to_le_bytes());
                    h = fnv1a(h, s.as_bytes());
                }
                Label::Int(v) => {
                    h = fnv1a(h, b"i");
                    h = fnv1a(h, &v.to_le_bytes());
                }
            }
            count += 1;
        }
        h = fnv1a(h, &count.to_le_bytes());
        Self {
            seed,
            stream: splitmix64(h),
        }
    }

    /// Child stream: this key's path extended by `labels`.
    pub fn child<I, L>(&self, labels: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: Into<Label>,
    {
        let parent = Label::Int(self.stream);
        let path = std::iter::once(parent).chain(labels.into_iter().map(Into::into));
        Self::derive(self.seed, path)
    }

    fn block(&self, counter: u64) -> [u32; 4] {
        philox4x32_10(
            [
                counter as u32,
                (counter >> 32) as u32,
                self.stream as u32,
                (self.stream >> 32) as u32,
            ],
            [self.seed as u32, (self.seed >> 32) as u32],
        )
    }

    pub fn uniform_u64(&self, counter: u64) -> u64 {
        let out = self.block(counter);
        u64::from(out[0]) | (u64::from(out[1]) << 32)
    }

    /// Uniform draw in `[0, 1)`: the top 53 bits scaled by `2^-53`.
    pub fn uniform_unit(&self, counter: u64) -> f64 {
        unit_from_bits(self.uniform_u64(counter))
    }

    /// Standard normal via Box-Muller on counters `2c` and `2c + 1`.
    pub fn standard_normal(&self, counter: u64) -> f64 {
        let u1 = 1.0 - self.uniform_unit(2 * counter);
        let u2 = self.uniform_unit(2 * counter + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

pub(crate) fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        // Random123 kat_vectors for philox4x32_10.
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn derive_is_deterministic_and_distinct() {
        let a = RngKey::derive(42, [Label::from("sum"), Label::from(0u64)]);
        let b = RngKey::derive(42, [Label::from("sum"), Label::from(0u64)]);
        let c = RngKey::derive(42, [Label::from("sum"), Label::from(1u64)]);
        let d = RngKey::derive(43, [Label::from("sum"), Label::from(0u64)]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        // string "0" and integer 0 are different labels
        let e = RngKey::derive(42, [Label::from("sum"), Label::from("0")]);
        assert_ne!(a, e);
        // path boundaries matter
        assert_ne!(RngKey::derive(1, ["ab", "c"]), RngKey::derive(1, ["a", "bc"]));
    }

    #[test]
    fn draws_are_pure() {
        let k = RngKey::derive(7, ["x"]);
        assert_eq!(k.uniform_u64(99), k.uniform_u64(99));
        assert_ne!(k.uniform_u64(99), k.uniform_u64(100));
    }

    #[test]
    fn unit_scaling() {
        assert_eq!(unit_from_bits(0), 0.0);
        assert!(unit_from_bits(u64::MAX) < 1.0);
        assert_eq!(unit_from_bits(u64::MAX), 1.0 - 2f64.powi(-53));
    }

    #[test]
    fn interleaving_does_not_change_streams() {
        let a = RngKey::derive(5, ["a"]);
        let b = RngKey::derive(5, ["b"]);
        let alone: Vec<u64> = (0..100).map(|c| a.uniform_u64(c)).collect();
        let mut interleaved = Vec::new();
        for c in 0..100 {
            let _ = b.uniform_u64(c * 3);
            interleaved.push(a.uniform_u64(c));
            let _ = b.uniform_u64(c);
        }
        assert_eq!(alone, interleaved);
    }

    #[test]
    fn bit_frequencies() {
        let k = RngKey::derive(2024, ["bits"]);
        let n = 1_000_000u64;
        let mut ones = [0u64; 64];
        for c in 0..n {
            let v = k.uniform_u64(c);
            for (bit, count) in ones.iter_mut().enumerate() {
                *count += (v >> bit) & 1;
            }
        }
        for (bit, &count) in ones.iter().enumerate() {
            let freq = count as f64 / n as f64;
            assert!((freq - 0.5).abs() <= 0.002, "bit {bit}: {freq}");
        }
    }

    #[test]
    fn low_byte_chi_square() {
        let k = RngKey::derive(2024, ["chi2"]);
        let n = 1_000_000u64;
        let mut bins = [0u64; 256];
        for c in 0..n {
            bins[(k.uniform_u64(c) & 0xff) as usize] += 1;
        }
        let expected = n as f64 / 256.0;
        let stat: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // 0.05% and 99.95% quantiles of chi-square with 255 degrees of freedom
        assert!((187.17..=335.92).contains(&stat), "chi2 = {stat}");
    }

    #[test]
    fn unit_mean_and_range() {
        let k = RngKey::derive(11, ["unit"]);
        let n = 1_000_000u64;
        let mut sum = 0.0;
        for c in 0..n {
            let u = k.uniform_unit(c);
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / n as f64 - 0.5).abs() <= 0.002);
    }
}
