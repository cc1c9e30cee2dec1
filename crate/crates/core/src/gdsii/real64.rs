//! GDSII eight-byte real: sign bit, 7-bit base-16 exponent biased by 64, and a
//! 56-bit mantissa interpreted as a fraction in [1/16, 1) when normalized.
//!
//! Every finite `f64` whose magnitude lies in `[16^-65, 16^63)` has an exact
//! excess-64 representation (the mantissa holds at least 53 significant bits),
//! so [`encode_real64`] is lossless. Decoding rounds the 56-bit mantissa to the
//! 53 bits an `f64` can hold.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealError {
    #[error("value {0} is outside the excess-64 representable range")]
    OutOfRange(f64),
}

const MANTISSA_MASK: u64 = (1 << 56) - 1;

/// Decodes an excess-64 real. All bit patterns decode.
pub fn decode_real64(bytes: [u8; 8]) -> f64 {
    let raw = u64::from_be_bytes(bytes);
    let negative = raw >> 63 == 1;
    let exponent = ((raw >> 56) & 0x7f) as i32;
    let mantissa = raw & MANTISSA_MASK;
    if mantissa == 0 {
        return if negative { -0.0 } else { 0.0 };
    }
    // value = mantissa * 2^(4 * (exponent - 64) - 56)
    let shift = 4 * (exponent - 64) - 56;
    let magnitude = mantissa as f64 * pow2(shift);
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Encodes `x` in normalized excess-64 form.
pub fn encode_real64(x: f64) -> Result<[u8; 8], RealError> {
    if x == 0.0 {
        return Ok([0; 8]);
    }
    if !x.is_finite() {
        return Err(RealError::OutOfRange(x));
    }
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let fraction = bits & ((1 << 52) - 1);
    // x = significand * 2^exp2 with significand a 53-bit integer, top bit set.
    let (significand, exp2) = if biased == 0 {
        // Subnormal f64 values are far below the excess-64 range.
        return Err(RealError::OutOfRange(x));
    } else {
        (fraction | (1 << 52), biased - 1075)
    };
    // Want significand * 2^exp2 = m * 16^(e - 64) / 2^56 with m < 2^56 and a
    // nonzero leading hex digit: m = significand << s, s = (exp2 + 56) mod 4.
    let total = exp2 + 56;
    let shift = total.rem_euclid(4);
    // significand << shift lies in [2^52, 2^56), i.e. a fraction in [1/16, 1).
    let mantissa = significand << shift;
    let biased_exponent = (total - shift) / 4 + 64;
    if !(0..=127).contains(&biased_exponent) {
        return Err(RealError::OutOfRange(x));
    }
    let raw = ((negative as u64) << 63) | ((biased_exponent as u64) << 56) | mantissa;
    Ok(raw.to_be_bytes())
}

/// Exact power of two for exponents in the normal `f64` range.
fn pow2(exp: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&exp));
    f64::from_bits(((exp + 1023) as u64) << 52)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Digit-by-digit evaluation, independent of the shift arithmetic above.
    fn oracle_decode(bytes: [u8; 8]) -> f64 {
        let sign = if bytes[0] & 0x80 != 0 { -1.0 } else { 1.0 };
        let exponent = (bytes[0] & 0x7f) as i32 - 64;
        let mut value = 0.0f64;
        let mut weight = 16f64.powi(exponent);
        for b in &bytes[1..] {
            weight /= 16.0;
            value += (b >> 4) as f64 * weight;
            weight /= 16.0;
            value += (b & 0x0f) as f64 * weight;
        }
        sign * value
    }

    #[test]
    fn zero_pattern() {
        assert_eq!(decode_real64([0; 8]), 0.0);
        assert_eq!(encode_real64(0.0).unwrap(), [0; 8]);
    }

    #[test]
    fn one() {
        let one = [0x41, 0x10, 0, 0, 0, 0, 0, 0];
        assert_eq!(decode_real64(one), 1.0);
        assert_eq!(encode_real64(1.0).unwrap(), one);
        assert_eq!(encode_real64(-1.0).unwrap()[0], 0xc1);
    }

    #[test]
    fn gdspy_default_units() {
        // 1e-3 and 1e-9 as commonly found in UNITS records; expected bytes
        // computed with exact rational arithmetic.
        for x in [1e-3, 1e-6, 1e-9, -1e-3, -1e-6, -1e-9] {
            let enc = encode_real64(x).unwrap();
            assert_eq!(decode_real64(enc), x);
            let oracle = oracle_decode(enc);
            assert!(((oracle - x) / x).abs() <= f64::EPSILON);
        }
        assert_eq!(
            encode_real64(1e-9).unwrap(),
            [0x39, 0x44, 0xb8, 0x2f, 0xa0, 0x9b, 0x5a, 0x54]
        );
        assert_eq!(
            encode_real64(1e-3).unwrap(),
            [0x3e, 0x41, 0x89, 0x37, 0x4b, 0xc6, 0xa7, 0xf0]
        );
    }

    #[test]
    fn normalized_leading_digit() {
        for x in [1.0, 2.0, 3.0, 15.0, 16.0, 17.0, 0.1, 1e10, 1e-20, 0.0625] {
            let enc = encode_real64(x).unwrap();
            assert_ne!(enc[1] >> 4, 0, "{x} not normalized: {enc:02x?}");
        }
    }

    #[test]
    fn out_of_range() {
        assert!(encode_real64(f64::NAN).is_err());
        assert!(encode_real64(f64::INFINITY).is_err());
        assert!(encode_real64(1e80).is_err());
        assert!(encode_real64(1e-90).is_err());
        assert!(encode_real64(1e75).is_ok());
    }

    #[test]
    fn unnormalized_input_decodes() {
        // 1.0 written with a leading zero hex digit: 0.01 (hex) * 16^2.
        assert_eq!(decode_real64([0x42, 0x01, 0, 0, 0, 0, 0, 0]), 1.0);
    }

    #[test]
    fn wide_mantissa_rounds_within_one_ulp() {
        let bytes = [0x41, 0x1f, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff];
        let got = decode_real64(bytes);
        let want = oracle_decode(bytes);
        assert!((got - want).abs() <= got.abs() * f64::EPSILON);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(mantissa in 1.0f64..16.0, exp in -60i32..60, neg in any::<bool>()) {
            let x = if neg { -mantissa } else { mantissa } * 16f64.powi(exp);
            let enc = encode_real64(x).unwrap();
            prop_assert_eq!(decode_real64(enc), x);
            let oracle = oracle_decode(enc);
            prop_assert!(((oracle - x) / x).abs() <= 2f64.powi(-52));
        }

        #[test]
        fn arbitrary_patterns_match_oracle(bytes in any::<[u8; 8]>()) {
            let got = decode_real64(bytes);
            let want = oracle_decode(bytes);
            if want == 0.0 {
                prop_assert_eq!(got, 0.0);
            } else {
                prop_assert!(((got - want) / want).abs() <= 2f64.powi(-52));
            }
        }
    }
}
