//! Reduced-precision float formats and round-to-nearest-even quantization.

/// Label for the supported reduced-precision formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FormatName {
    Bf16,
    Fp16,
    Fp32,
}

impl FormatName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormatName::Bf16 => "bf16",
            FormatName::Fp16 => "fp16",
            FormatName::Fp32 => "fp32",
        }
    }
}

impl std::fmt::Display for FormatName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A reduced-precision floating-point format described by its exponent and
/// explicit significand widths (the hidden bit is not counted).
///
/// BF16 is (8, 7), FP16 is (5, 10), FP32 is (8, 23). Subnormals are
/// supported; flushing subnormal results to zero is an opt-in flag since
/// accelerators differ on this point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    exponent_bits: u32,
    significand_bits: u32,
    name: FormatName,
    flush_to_zero: bool,
}

impl FloatFormat {
    pub const fn bf16() -> Self {
        FloatFormat {
            exponent_bits: 8,
            significand_bits: 7,
            name: FormatName::Bf16,
            flush_to_zero: false,
        }
    }

    pub const fn fp16() -> Self {
        FloatFormat {
            exponent_bits: 5,
            significand_bits: 10,
            name: FormatName::Fp16,
            flush_to_zero: false,
        }
    }

    pub const fn fp32() -> Self {
        FloatFormat {
            exponent_bits: 8,
            significand_bits: 23,
            name: FormatName::Fp32,
            flush_to_zero: false,
        }
    }

    /// Same format with subnormal results flushed to (signed) zero.
    pub const fn with_flush_to_zero(mut self, enabled: bool) -> Self {
        self.flush_to_zero = enabled;
        self
    }

    pub const fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub const fn significand_bits(&self) -> u32 {
        self.significand_bits
    }

    pub const fn name(&self) -> FormatName {
        self.name
    }

    pub const fn flush_to_zero(&self) -> bool {
        self.flush_to_zero
    }

    /// Largest normal exponent (equals the bias).
    pub const fn max_exponent(&self) -> i32 {
        (1 << (self.exponent_bits - 1)) - 1
    }

    /// Smallest normal exponent, `1 - bias`.
    pub const fn min_exponent(&self) -> i32 {
        1 - self.max_exponent()
    }

    /// Largest finite value of the format, exact in `f64`.
    pub fn max_finite(&self) -> f64 {
        let m = self.significand_bits as i32;
        (2.0 - pow2(-m)) * pow2(self.max_exponent())
    }

    /// Smallest positive normal value of the format.
    pub fn min_positive_normal(&self) -> f64 {
        pow2(self.min_exponent())
    }

    /// Unit in the last place at magnitude `x` (spacing of representable
    /// values in the binade containing `|x|`, floored at the subnormal
    /// quantum).
    pub fn ulp_at(&self, x: f64) -> f64 {
        if x == 0.0 || !x.is_finite() {
            return pow2(self.min_exponent() - self.significand_bits as i32);
        }
        let e = ilogb(x.abs()).max(self.min_exponent());
        pow2(e - self.significand_bits as i32)
    }
}

/// Rounds `x` to the nearest value representable in `fmt` under
/// round-to-nearest, ties-to-even.
///
/// Overflow saturates to the correctly-signed infinity (values at or beyond
/// the midpoint between the largest finite value and the next power of two
/// round to infinity, matching IEEE-754 behavior). The sign of zero is
/// preserved, subnormal results are produced unless the format flushes them
/// to zero, and NaN maps to NaN. Idempotent on representable values and
/// monotone non-decreasing in `x`.
#[inline]
pub fn round_to_format(x: f64, fmt: &FloatFormat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 || x.is_infinite() {
        return x;
    }

    let m = fmt.significand_bits as i32;
    let emax = fmt.max_exponent();
    let emin = fmt.min_exponent();

    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    // Fast path: a normal f64 whose target value stays in the normal range of
    // fmt. Rounding the low 52 - m mantissa bits with the add-carry trick is
    // RNE on the format's grid; a carry out of the mantissa lands in the
    // exponent field, which is exactly the binade promotion RNE requires.
    if biased != 0 {
        let e = biased - 1023;
        if e >= emin && e <= emax {
            let drop = (52 - m) as u64;
            let lsb = (bits >> drop) & 1;
            let r = bits.wrapping_add((1u64 << (drop - 1)) - 1 + lsb) & !((1u64 << drop) - 1);
            let r_exp = ((r >> 52) & 0x7ff) as i32 - 1023;
            if r_exp > emax {
                return f64::INFINITY.copysign(x);
            }
            return f64::from_bits(r);
        }
        if e > emax {
            return f64::INFINITY.copysign(x);
        }
    }

    // Subnormal range of fmt (or subnormal f64 input): quantize to the fixed
    // grid of multiples of 2^(emin - m).
    let a = x.abs();
    let qexp = emin - m;
    let e = ilogb(a);
    if e < qexp - 1 {
        // Below half the smallest subnormal quantum: rounds to zero.
        return 0.0f64.copysign(x);
    }
    let scaled = mul_pow2(a, -qexp);
    let rounded = scaled.round_ties_even();
    let r = mul_pow2(rounded, qexp);
    let r = if fmt.flush_to_zero && r < fmt.min_positive_normal() {
        0.0
    } else {
        r
    };
    r.copysign(x)
}

/// 2^k as an exact `f64`; `k` must be in the normal range.
#[inline]
fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Exact multiplication by 2^k. Inputs are arranged by the caller so the
/// result never leaves the normal range of `f64`.
#[inline]
fn mul_pow2(x: f64, k: i32) -> f64 {
    x * pow2(k)
}

/// floor(log2(a)) for finite positive `a`, from the bit pattern.
#[inline]
pub(crate) fn ilogb(a: f64) -> i32 {
    debug_assert!(a > 0.0 && a.is_finite());
    let bits = a.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased != 0 {
        biased - 1023
    } else {
        let frac = bits & ((1u64 << 52) - 1);
        63 - frac.leading_zeros() as i32 - 1074
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BF16: FloatFormat = FloatFormat::bf16();
    const FP16: FloatFormat = FloatFormat::fp16();
    const FP32: FloatFormat = FloatFormat::fp32();

    /// Independent bit-level reference built on the `half` crate (direct
    /// f64 -> bf16/f16 conversions) and the hardware f64 -> f32 cast.
    fn reference_round(x: f64, fmt: &FloatFormat) -> f64 {
        match fmt.name() {
            FormatName::Bf16 => half::bf16::from_f64(x).to_f64(),
            FormatName::Fp16 => half::f16::from_f64(x).to_f64(),
            FormatName::Fp32 => x as f32 as f64,
        }
    }

    #[test]
    fn format_parameters() {
        assert_eq!((BF16.exponent_bits(), BF16.significand_bits()), (8, 7));
        assert_eq!((FP16.exponent_bits(), FP16.significand_bits()), (5, 10));
        assert_eq!((FP32.exponent_bits(), FP32.significand_bits()), (8, 23));
        assert_eq!(BF16.max_exponent(), 127);
        assert_eq!(FP16.max_exponent(), 15);
        assert_eq!(FP16.min_exponent(), -14);
        assert_eq!(FP32.max_finite(), f32::MAX as f64);
        assert_eq!(FP16.max_finite(), 65504.0);
    }

    #[test]
    fn representable_values_are_fixed_points() {
        assert_eq!(round_to_format(1.0, &BF16), 1.0);
        assert_eq!(round_to_format(-2.5, &FP16), -2.5);
        assert_eq!(round_to_format(1.0078125, &BF16), 1.0078125);
    }

    #[test]
    fn quarter_ulp_offset_rounds_down() {
        // BF16 spacing at 1.0 is 2^-7; an offset of 2^-9 is a quarter ulp.
        let x = 1.0 + f64::powi(2.0, -9);
        assert_eq!(round_to_format(x, &BF16), 1.0);
        assert_eq!(reference_round(x, &BF16), 1.0);
    }

    #[test]
    fn ties_round_to_even() {
        // Midpoint between 1.0 and 1.0 + 2^-7: even neighbor is 1.0.
        let x = 1.0 + f64::powi(2.0, -8);
        assert_eq!(round_to_format(x, &BF16), 1.0);
        // Midpoint between 1.0 + 2^-7 and 1.0 + 2^-6: even neighbor is the
        // upper one (mantissa ..10 vs ..01).
        let x = 1.0 + 3.0 * f64::powi(2.0, -8);
        assert_eq!(round_to_format(x, &BF16), 1.0 + f64::powi(2.0, -6));
    }

    #[test]
    fn signed_zero_is_preserved() {
        let r = round_to_format(-0.0, &FP16);
        assert_eq!(r, 0.0);
        assert!(r.is_sign_negative());
        let r = round_to_format(0.0, &BF16);
        assert!(r.is_sign_positive());
    }

    #[test]
    fn nan_and_infinity_pass_through() {
        assert!(round_to_format(f64::NAN, &BF16).is_nan());
        assert_eq!(round_to_format(f64::INFINITY, &FP16), f64::INFINITY);
        assert_eq!(round_to_format(f64::NEG_INFINITY, &FP32), f64::NEG_INFINITY);
    }

    #[test]
    fn overflow_saturates_to_infinity() {
        assert_eq!(round_to_format(1e40, &BF16), f64::INFINITY);
        assert_eq!(round_to_format(-1e40, &FP32), f64::NEG_INFINITY);
        assert_eq!(round_to_format(65520.0, &FP16), f64::INFINITY);
        // Just below the overflow midpoint stays finite.
        assert_eq!(round_to_format(65519.99, &FP16), 65504.0);
        assert_eq!(round_to_format(f64::MAX, &FP32), f64::INFINITY);
    }

    #[test]
    fn subnormals_are_representable() {
        // Smallest FP16 subnormal is 2^-24.
        let tiny = f64::powi(2.0, -24);
        assert_eq!(round_to_format(tiny, &FP16), tiny);
        assert_eq!(round_to_format(tiny * 0.4, &FP16), 0.0);
        assert_eq!(round_to_format(tiny * 0.6, &FP16), tiny);
        // Half the smallest subnormal ties to zero (even).
        assert_eq!(round_to_format(tiny * 0.5, &FP16), 0.0);
        // 1.5 quanta ties up to 2 quanta (even).
        assert_eq!(round_to_format(tiny * 1.5, &FP16), tiny * 2.0);
    }

    #[test]
    fn flush_to_zero_flushes_subnormal_results() {
        let ftz = FP16.with_flush_to_zero(true);
        let sub = f64::powi(2.0, -20); // subnormal in FP16
        assert_eq!(round_to_format(sub, &ftz), 0.0);
        assert!(round_to_format(-sub, &ftz).is_sign_negative());
        // Normal values are untouched.
        assert_eq!(round_to_format(1.5, &ftz), 1.5);
        assert_eq!(round_to_format(sub, &FP16), sub);
    }

    #[test]
    fn f64_subnormal_inputs_round_to_zero() {
        let x = f64::from_bits(1); // 2^-1074
        assert_eq!(round_to_format(x, &BF16), 0.0);
        assert_eq!(round_to_format(-x, &FP32), 0.0);
        assert!(round_to_format(-x, &FP32).is_sign_negative());
    }

    #[test]
    fn matches_reference_on_all_bf16_midpoint_neighborhoods() {
        // Walk every positive normal/subnormal bf16 value and probe points
        // around each midpoint with the next value.
        for bits in 1u16..0x7f80 {
            let lo = half::bf16::from_bits(bits).to_f64();
            let hi = half::bf16::from_bits(bits + 1).to_f64();
            let hi = if hi.is_finite() { hi } else { f64::INFINITY };
            let mid = (lo + hi) / 2.0;
            for &x in &[lo, mid, f64::midpoint(lo, mid), f64::midpoint(mid, hi)] {
                if !x.is_finite() {
                    continue;
                }
                let ours = round_to_format(x, &BF16);
                let theirs = reference_round(x, &BF16);
                assert_eq!(
                    ours.to_bits(),
                    theirs.to_bits(),
                    "mismatch at x={x:e} (bf16 bits {bits:#x}): ours={ours:e} ref={theirs:e}"
                );
            }
        }
    }

    #[test]
    fn ulp_at_tracks_binade() {
        assert_eq!(BF16.ulp_at(1.0), f64::powi(2.0, -7));
        assert_eq!(BF16.ulp_at(-3.0), f64::powi(2.0, -6));
        assert_eq!(FP16.ulp_at(0.0), f64::powi(2.0, -24));
    }

    proptest! {
        #[test]
        fn idempotent(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            for fmt in [BF16, FP16, FP32] {
                let once = round_to_format(x, &fmt);
                let twice = round_to_format(once, &fmt);
                prop_assert_eq!(once.to_bits(), twice.to_bits());
            }
        }

        #[test]
        fn monotone(a in -1e30f64..1e30, b in -1e30f64..1e30) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for fmt in [BF16, FP16, FP32] {
                prop_assert!(round_to_format(lo, &fmt) <= round_to_format(hi, &fmt));
            }
        }

        #[test]
        fn matches_bit_level_reference(x in proptest::num::f64::ANY) {
            prop_assume!(!x.is_nan());
            let ours = round_to_format(x, &BF16);
            let theirs = reference_round(x, &BF16);
            prop_assert_eq!(ours.to_bits(), theirs.to_bits());
            let ours = round_to_format(x, &FP16);
            let theirs = reference_round(x, &FP16);
            prop_assert_eq!(ours.to_bits(), theirs.to_bits());
        }

        #[test]
        fn matches_f32_cast_on_f32_exact_inputs(x in proptest::num::f32::ANY) {
            prop_assume!(!x.is_nan());
            let x = x as f64;
            let ours = round_to_format(x, &FP32);
            prop_assert_eq!(ours.to_bits(), x.to_bits());
        }

        #[test]
        fn fp32_reference_on_wide_inputs(x in proptest::num::f64::NORMAL) {
            // f64 -> f32 is a single hardware RNE rounding: a direct oracle.
            let ours = round_to_format(x, &FP32);
            let theirs = reference_round(x, &FP32);
            prop_assert_eq!(ours.to_bits(), theirs.to_bits());
        }
    }
}
