//! Round-to-nearest arithmetic in binary16 against a table of all members.
//!
//! With 53 ≥ 2·11 + 2 bits of carrier precision, rounding the f64 result of
//! +, -, ×, ÷ and √ to nearest in binary16 gives the correctly rounded value,
//! so the table lookup is an exact oracle.

use sr_core::{ArithEnv, FormatSpec, OverflowPolicy, RngKey, RoundingMode};

fn binary16_members() -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for bits in 0u32..0x7c00 {
        let e = (bits >> 10) as i32;
        let m = bits & 0x3ff;
        let v = if e == 0 {
            m as f64 * 2f64.powi(-24)
        } else {
            (1.0 + m as f64 / 1024.0) * 2f64.powi(e - 15)
        };
        out.push((v, m % 2 == 0));
        if v != 0.0 {
            out.push((-v, m % 2 == 0));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn nearest(table: &[(f64, bool)], x: f64) -> Option<f64> {
    let i = table.partition_point(|m| m.0 < x);
    if i < table.len() && table[i].0 == x {
        return Some(x);
    }
    if i == 0 || i == table.len() {
        return None;
    }
    let (lo, hi) = (table[i - 1], table[i]);
    let (dl, dh) = (x - lo.0, hi.0 - x);
    Some(if dl < dh || (dl == dh && lo.1) { lo.0 } else { hi.0 })
}

#[test]
fn rn_operations_match_table() {
    let table = binary16_members();
    let key = RngKey::derive(17, ["arith-oracle"]);
    let pick = |c: u64| {
        // bias toward moderate magnitudes so products and quotients stay in range
        let i = (key.uniform_u64(c) % table.len() as u64) as usize;
        let v = table[i].0;
        if v.abs() > 256.0 || (v != 0.0 && v.abs() < 1.0 / 256.0) { v.signum() * (1.0 + (i % 1000) as f64 / 8.0) } else { v }
    };
    let mut env = ArithEnv::new(FormatSpec::binary16(), RoundingMode::NearestEven, OverflowPolicy::Strict, key);
    let mut checked = 0;
    for c in 0..50_000u64 {
        let (a, b) = (pick(2 * c), pick(2 * c + 1));
        let cases = [
            (env.add(a, b).ok(), nearest(&table, a + b)),
            (env.sub(a, b).ok(), nearest(&table, a - b)),
            (env.mul(a, b).ok(), nearest(&table, a * b)),
            (if b != 0.0 { env.div(a, b).ok() } else { None }, if b != 0.0 { nearest(&table, a / b) } else { None }),
            (if a >= 0.0 { env.sqrt(a).ok() } else { None }, if a >= 0.0 { nearest(&table, a.sqrt()) } else { None }),
        ];
        for (op, (got, want)) in cases.into_iter().enumerate() {
            if let Some(want) = want {
                assert_eq!(got, Some(want), "op {op} on ({a}, {b})");
                checked += 1;
            }
        }
    }
    assert!(checked > 200_000);
    assert_eq!(env.counter(), 0);
}

#[test]
fn sr_operations_land_on_neighbours_with_right_frequency() {
    let fmt = FormatSpec::binary16();
    let key = RngKey::derive(18, ["sr-freq"]);
    let mut env = ArithEnv::new(fmt, RoundingMode::SrProportional, OverflowPolicy::Strict, key);
    // 1/3 in binary16 lies between 0.333251953125 and 0.33349609375
    let (lo, hi) = (0.333251953125, 0.33349609375);
    let p = (1.0 / 3.0 - lo) / (hi - lo);
    let n = 200_000;
    let mut ups = 0;
    for _ in 0..n {
        let r = env.div(1.0, 3.0).unwrap();
        assert!(r == lo || r == hi);
        ups += (r == hi) as usize;
    }
    let f = ups as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((f - p).abs() <= 4.0 * sigma, "{f} vs {p}");
}
