//! 64-bit FNV-1a over the bit patterns of a float sequence.
//!
//! Used to tie code records to the exact quantizer and stimulus they were
//! acquired with, so that mixing inputs is caught instead of silently
//! producing a wrong estimate.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    pub fn of_values(values: &[f64]) -> Self {
        let mut h = OFFSET;
        for v in values {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        }
        Fingerprint(h)
    }
}

impl core::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinguishes_negative_zero() {
        assert_ne!(Fingerprint::of_values(&[0.0]), Fingerprint::of_values(&[-0.0]));
    }

    #[test]
    fn order_matters() {
        assert_ne!(
            Fingerprint::of_values(&[1.0, 2.0]),
            Fingerprint::of_values(&[2.0, 1.0])
        );
    }
}
