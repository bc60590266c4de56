//! Exact summation with a single final rounding.
//!
//! Every finite `f64` is an integer multiple of 2^-1074, and every product of
//! two finite `f64` values is an integer multiple of 2^-2148, so sums can be
//! accumulated without error in a scaled big integer. Integer addition is
//! associative and commutative, which makes these reductions bitwise
//! permutation-invariant: the one place rounding happens is the final
//! conversion back to `f64`.

use num_bigint::{BigInt, Sign};

/// Scale of a single `f64`: values are multiples of 2^MIN_EXP_F64.
const MIN_EXP_F64: i32 = -1074;

/// Mathematically exact sum of `values`, rounded once to `f64` (RNE).
///
/// Bitwise identical under every permutation of the input. The empty sum is
/// `0.0`. Inputs must be finite.
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut acc = BigInt::from(0);
    for &v in values {
        accumulate(&mut acc, v, MIN_EXP_F64);
    }
    round_scaled(&acc, MIN_EXP_F64)
}

/// Mathematically exact dot product of `a` and `b` (exact products, exact
/// sum, one final rounding). Bitwise permutation-invariant over index order.
///
/// # Panics
/// Panics if the lengths differ.
pub fn exact_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "exact_dot requires equal lengths");
    let scale = 2 * MIN_EXP_F64;
    let mut acc = BigInt::from(0);
    for (&x, &y) in a.iter().zip(b) {
        if x == 0.0 || y == 0.0 {
            continue;
        }
        let (mx, ex) = decompose(x);
        let (my, ey) = decompose(y);
        let prod = BigInt::from(mx) * BigInt::from(my);
        let shift = (ex + ey) - scale;
        debug_assert!(shift >= 0);
        acc += prod << shift;
    }
    round_scaled(&acc, scale)
}

/// Adds finite `v` to `acc`, where `acc` is scaled by 2^scale.
fn accumulate(acc: &mut BigInt, v: f64, scale: i32) {
    assert!(v.is_finite(), "exact accumulation requires finite inputs");
    if v == 0.0 {
        return;
    }
    let (m, e) = decompose(v);
    let shift = e - scale;
    debug_assert!(shift >= 0);
    *acc += BigInt::from(m) << shift;
}

/// Signed integer mantissa and exponent with `v = m * 2^e` exactly.
fn decompose(v: f64) -> (i64, i32) {
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 {
        (sign * frac as i64, MIN_EXP_F64)
    } else {
        (sign * (frac | (1u64 << 52)) as i64, biased - 1075)
    }
}

/// Rounds `n * 2^scale` to the nearest `f64`, ties to even.
fn round_scaled(n: &BigInt, scale: i32) -> f64 {
    let (sign, mag) = n.clone().into_parts();
    if sign == Sign::NoSign {
        return 0.0;
    }
    let bit_len = mag.bits() as i64;
    let value_exp = bit_len - 1 + scale as i64; // floor(log2 |value|)
    if value_exp > 1024 {
        return apply_sign(f64::INFINITY, sign);
    }

    // Quantum of the f64 grid at this magnitude.
    let qexp = (value_exp - 52).max(MIN_EXP_F64 as i64);
    let shift = qexp - scale as i64;
    let (mut mant, round_up) = if shift <= 0 {
        // Value is already on a grid at least as coarse as the target: exact.
        let m: num_bigint::BigUint = mag << (-shift) as u64;
        (to_u64(&m), false)
    } else {
        let s = shift as u64;
        let kept: num_bigint::BigUint = &mag >> s;
        let kept = to_u64(&kept);
        let half: num_bigint::BigUint = num_bigint::BigUint::from(1u8) << (s - 1);
        let rem = mag & ((num_bigint::BigUint::from(1u8) << s) - 1u8);
        let up = match rem.cmp(&half) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => kept & 1 == 1,
        };
        (kept, up)
    };
    let mut qexp = qexp as i32;
    if round_up {
        mant += 1;
        if mant == 1u64 << 53 {
            mant >>= 1;
            qexp += 1;
        }
    }
    apply_sign(compose(mant, qexp), sign)
}

fn to_u64(m: &num_bigint::BigUint) -> u64 {
    let digits = m.to_u64_digits();
    debug_assert!(digits.len() <= 1);
    digits.first().copied().unwrap_or(0)
}

fn apply_sign(x: f64, sign: Sign) -> f64 {
    if sign == Sign::Minus {
        -x
    } else {
        x
    }
}

/// Exact `mant * 2^qexp` as `f64`, assembled from bits. `mant < 2^53`, and
/// the magnitude is known to be representable.
fn compose(mant: u64, qexp: i32) -> f64 {
    if mant == 0 {
        return 0.0;
    }
    debug_assert!(mant < (1u64 << 53));
    let bit_len = 64 - mant.leading_zeros() as i32;
    let value_exp = bit_len - 1 + qexp;
    if value_exp > 1023 {
        return f64::INFINITY;
    }
    if value_exp >= -1022 {
        // Normal: align the leading bit to position 52.
        let shift = 52 - (bit_len - 1);
        let frac = (mant << shift) & ((1u64 << 52) - 1);
        f64::from_bits((((value_exp + 1023) as u64) << 52) | frac)
    } else {
        // Subnormal: the value is mant * 2^qexp with qexp >= -1074 and fits
        // in the fraction field.
        debug_assert!(qexp >= MIN_EXP_F64);
        let frac = mant << (qexp - MIN_EXP_F64);
        debug_assert!(frac < (1u64 << 52));
        f64::from_bits(frac)
    }
}
