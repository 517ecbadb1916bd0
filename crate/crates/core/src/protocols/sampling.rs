use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Widest id the simulator can hold; longer draws keep their low 63 bits.
pub const MAX_ID_BITS: u64 = 63;

/// Parameters of the message-free id sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct A4Config {
    c: f64,
}

/// One sampled id together with the bit count that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledId {
    /// The geometric draw, before any clamping to [`MAX_ID_BITS`].
    pub bit_count: u64,
    pub id: u64,
}

impl A4Config {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling constant c must be positive, got {c}"
            )));
        }
        Ok(A4Config { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Continuation probability `2^(−1/(c+2))`.
    pub fn p(&self) -> f64 {
        (-1.0 / (self.c + 2.0)).exp2()
    }

    /// Draws the bit count (at least 1) and then that many uniform bits.
    /// An all-zero draw becomes id 1.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledId {
        let geo = Geometric::new(1.0 - self.p()).expect("1 - p lies in (0, 1)");
        let bit_count = geo.sample(rng).saturating_add(1);
        let bits = bit_count.min(MAX_ID_BITS);
        let raw = rng.gen::<u64>() >> (64 - bits);
        SampledId::from_parts(bit_count, raw)
    }
}

impl SampledId {
    /// Builds the id for a known bit count and raw bit string.
    pub fn from_parts(bit_count: u64, raw: u64) -> SampledId {
        SampledId {
            bit_count,
            id: raw.max(1),
        }
    }

    /// Parses a string of `0`/`1` characters as the raw draw.
    pub fn from_bits(bits: &str) -> Result<SampledId> {
        if bits.is_empty() || bits.len() as u64 > MAX_ID_BITS {
            return Err(Error::InvalidParameter(format!(
                "bit string must have 1..={MAX_ID_BITS} characters"
            )));
        }
        let raw = u64::from_str_radix(bits, 2)
            .map_err(|_| Error::InvalidParameter(format!("not a bit string: {bits:?}")))?;
        Ok(SampledId::from_parts(bits.len() as u64, raw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn continuation_probability_for_c_two() {
        let p = A4Config::new(2.0).unwrap().p();
        assert!((p - 0.840_896_415_253_714_6).abs() < 1e-12, "{p}");
    }

    #[test]
    fn bits_decode_directly() {
        let s = SampledId::from_bits("101").unwrap();
        assert_eq!((s.bit_count, s.id), (3, 5));
        assert_eq!(SampledId::from_bits("000").unwrap().id, 1);
        assert!(SampledId::from_bits("").is_err());
        assert!(SampledId::from_bits("12").is_err());
    }

    #[test]
    fn rejects_nonpositive_c() {
        assert!(A4Config::new(0.0).is_err());
        assert!(A4Config::new(f64::NAN).is_err());
    }

    #[test]
    fn samples_fit_their_bit_count() {
        let cfg = A4Config::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0u64;
        for _ in 0..10_000 {
            let s = cfg.sample(&mut rng);
            assert!(s.bit_count >= 1);
            assert!(s.id >= 1);
            assert!(s.id < 1u64 << s.bit_count.min(MAX_ID_BITS));
            total += s.bit_count;
        }
        // geometric mean 1 / (1 - p) ≈ 6.29
        let mean = total as f64 / 10_000.0;
        assert!((mean - 1.0 / (1.0 - cfg.p())).abs() < 0.3, "{mean}");
    }
}
