use serde::Serialize;

use crate::error::{Error, Result};

/// Two's-complement fixed point: one sign bit, `int_bits` integer bits and
/// `frac_bits` fraction bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FixedFormat {
    pub int_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedFormat {
    fn default() -> Self {
        Self { int_bits: 4, frac_bits: 7 }
    }
}

impl std::fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s1.i{}.f{}", self.int_bits, self.frac_bits)
    }
}

impl FixedFormat {
    pub fn new(int_bits: u32, frac_bits: u32) -> Self {
        Self { int_bits, frac_bits }
    }

    /// Integer-only format wide enough for `0..=max`.
    pub fn integer(max: u64) -> Self {
        Self { int_bits: bits_for(max + 1).max(1), frac_bits: 0 }
    }

    /// Smallest format with `frac_bits` fraction bits (and at least
    /// `min_int_bits` integer bits) that holds every value of magnitude up to
    /// `max_abs`.
    pub fn sized_for(max_abs: f64, min_int_bits: u32, frac_bits: u32) -> Self {
        let mut int_bits = min_int_bits;
        while Self::new(int_bits, frac_bits).max_value() < max_abs {
            int_bits += 1;
        }
        Self { int_bits, frac_bits }
    }

    pub fn width(&self) -> u32 {
        1 + self.int_bits + self.frac_bits
    }

    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        ((1u64 << (self.int_bits + self.frac_bits)) - 1) as f64 * self.ulp()
    }

    /// Nearest representable code, rejecting values out of range.
    pub fn encode(&self, x: f64) -> Result<u64> {
        let scaled = (x / self.ulp()).round();
        let lim = (1i64 << (self.int_bits + self.frac_bits)) as f64;
        if !x.is_finite() || scaled >= lim || scaled < -lim {
            return Err(Error::Overflow { value: x, format: self.to_string() });
        }
        let mask = (1u64 << self.width()) - 1;
        Ok((scaled as i64 as u64) & mask)
    }

    pub fn decode(&self, code: u64) -> f64 {
        let w = self.width();
        let mut v = (code & ((1u64 << w) - 1)) as i64;
        if v & (1i64 << (w - 1)) != 0 {
            v -= 1i64 << w;
        }
        v as f64 * self.ulp()
    }

    pub fn quantize(&self, x: f64) -> Result<f64> {
        Ok(self.decode(self.encode(x)?))
    }

    pub fn is_exact(&self, x: f64) -> bool {
        self.quantize(x).map(|q| q == x).unwrap_or(false)
    }
}

/// Qubits needed to index `count` values (at least 1).
pub fn bits_for(count: u64) -> u32 {
    if count <= 2 {
        1
    } else {
        64 - (count - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_is_one_four_seven() {
        assert_eq!(FixedFormat::default().width(), 12);
    }

    #[test]
    fn negative_round_trip() {
        let f = FixedFormat::default();
        assert_eq!(f.decode(f.encode(-2.5).unwrap()), -2.5);
        assert_eq!(f.decode(f.encode(0.0).unwrap()), 0.0);
    }

    #[test]
    fn overflow_rejected() {
        assert!(FixedFormat::default().encode(16.0).is_err());
        assert!(FixedFormat::default().encode(-16.0).is_ok());
    }

    #[test]
    fn sizing() {
        let f = FixedFormat::sized_for(40.0, 4, 7);
        assert_eq!(f.int_bits, 6);
        assert_eq!(bits_for(8), 3);
        assert_eq!(bits_for(9), 4);
        assert_eq!(bits_for(1), 1);
    }

    proptest! {
        #[test]
        fn quantization_within_half_ulp(x in -15.0f64..15.0) {
            let f = FixedFormat::default();
            prop_assert!((f.quantize(x).unwrap() - x).abs() <= f.ulp() / 2.0 + 1e-15);
        }
    }
}
