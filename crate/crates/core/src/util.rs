//! Small shared utilities: exact frame rates and a stable 64-bit hash.

use serde::{Deserialize, Serialize};

/// Frame rate as a reduced rational, so 25 fps and 50 fps files compare by
/// integer fields and 6.25 fps is representable without float equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    /// Builds a reduced rational; zero numerator or denominator is rejected
    /// by callers before construction.
    pub fn new(num: u32, den: u32) -> Self {
        let g = gcd(num as u64, den as u64) as u32;
        if g == 0 {
            return Fps { num, den };
        }
        Fps {
            num: num / g,
            den: den / g,
        }
    }

    /// Nominal rate of an analysis at `sample_rate` with `step` samples per
    /// output frame (hop, or hop times the stacking factor).
    pub fn from_step(sample_rate: u32, step: u32) -> Self {
        Fps::new(sample_rate, step)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Fps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Greatest common divisor (Euclid).
pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// FNV-1a 64-bit hash. Used for config fingerprints and text-embedding
/// seeds; std's hasher is randomized per process and cannot be stored.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a per-item seed from a master seed and a stable identifier.
pub fn derive_seed(master: u64, id: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + id.len());
    bytes.extend_from_slice(&master.to_le_bytes());
    bytes.extend_from_slice(id.as_bytes());
    fnv1a64(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fps_reduces_and_compares_exactly() {
        assert_eq!(Fps::new(48000, 7680), Fps { num: 25, den: 4 });
        assert_eq!(Fps::new(48000, 7680).as_f64(), 6.25);
        assert_eq!(Fps::new(16000, 640), Fps { num: 25, den: 1 });
        assert_ne!(Fps::new(25, 1), Fps::new(50, 1));
    }

    #[test]
    fn fnv_is_stable() {
        // Reference values from the FNV-1a specification.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"hello"), 0xa430_d846_80aa_bd0b);
        assert_ne!(derive_seed(1, "a.wav"), derive_seed(1, "b.wav"));
        assert_ne!(derive_seed(1, "a.wav"), derive_seed(2, "a.wav"));
    }
}
