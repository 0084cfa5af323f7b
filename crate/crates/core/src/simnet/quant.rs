//! Fixed-point codecs for integer reduction payloads.
//!
//! Packed mode stores two biased 32-bit lanes per 64-bit word. The bias
//! keeps every lane non-negative, so a plain 64-bit sum of `k` words never
//! carries from the low lane into the high lane as long as
//! `k * (bias + scale * v_max) < 2^32`.

use serde::{Deserialize, Serialize};

use crate::error::NetError;

const LANE_MASK: u64 = 0xFFFF_FFFF;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSpec {
    pub scale: f64,
    pub bias: u32,
    pub v_max: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        Self {
            scale: 1.0e7,
            bias: 1 << 25,
            v_max: 1.0,
        }
    }
}

impl QuantSpec {
    fn max_magnitude(&self) -> u64 {
        (self.scale * self.v_max).round() as u64
    }

    /// Largest lane value a single contribution can produce.
    pub fn max_lane(&self) -> u64 {
        self.bias as u64 + self.max_magnitude()
    }

    /// Largest number of summed contributions that stays carry-free.
    pub fn max_summands(&self) -> usize {
        (LANE_MASK / self.max_lane()) as usize
    }

    /// Worst-case absolute rounding error of one encoded value.
    pub fn resolution(&self) -> f64 {
        0.5 / self.scale
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.scale > 0.0) || !self.scale.is_finite() || !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return Err(NetError::QuantSpec(format!("scale {} / v_max {}", self.scale, self.v_max)));
        }
        if self.max_magnitude() > self.bias as u64 {
            return Err(NetError::QuantSpec(format!(
                "bias {} cannot offset magnitudes up to {}",
                self.bias,
                self.max_magnitude()
            )));
        }
        if self.max_lane() > LANE_MASK {
            return Err(NetError::QuantSpec("single lane exceeds 32 bits".into()));
        }
        Ok(())
    }

    /// Configuration-time check that `k` summed contributions cannot carry.
    pub fn check_summands(&self, k: usize) -> Result<(), NetError> {
        self.validate()?;
        let max = self.max_summands();
        if k == 0 || k > max {
            return Err(NetError::CarryBound { k, max });
        }
        Ok(())
    }

    fn encode_lane(&self, v: f64) -> Result<u64, NetError> {
        if !(v.abs() <= self.v_max) {
            return Err(NetError::QuantOverflow {
                value: v,
                v_max: self.v_max,
            });
        }
        let q = (v * self.scale).round() as i64;
        Ok((q + self.bias as i64) as u64)
    }
}

/// Encode values into biased 32-bit lanes, two per word, even index low.
pub fn quantize_pack(values: &[f64], spec: &QuantSpec) -> Result<Vec<u64>, NetError> {
    spec.validate()?;
    values
        .chunks(2)
        .map(|pair| {
            let lo = spec.encode_lane(pair[0])?;
            // odd tail pads with an encoded zero so the lane decodes to 0
            let hi = match pair.get(1) {
                Some(&v) => spec.encode_lane(v)?,
                None => spec.bias as u64,
            };
            Ok(lo | (hi << 32))
        })
        .collect()
}

/// Decode `n_values` lanes from words holding the sum of `k` packed contributions.
pub fn unpack_dequantize(words: &[u64], n_values: usize, k: usize, spec: &QuantSpec) -> Result<Vec<f64>, NetError> {
    spec.check_summands(k)?;
    if words.len() * 2 < n_values {
        return Err(NetError::QuantSpec(format!(
            "{} words cannot hold {} values",
            words.len(),
            n_values
        )));
    }
    let offset = k as i64 * spec.bias as i64;
    Ok((0..n_values)
        .map(|i| {
            let w = words[i / 2];
            let lane = if i % 2 == 0 { w & LANE_MASK } else { w >> 32 };
            (lane as i64 - offset) as f64 / spec.scale
        })
        .collect())
}

/// Elementwise word sum as performed by the relay gates.
pub fn sum_words(contributions: &[Vec<u64>]) -> Vec<u64> {
    let n = contributions.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| contributions.iter().fold(0u64, |acc, c| acc.wrapping_add(c[i])))
        .collect()
}

/// Two's-complement 64-bit fixed point for the six-lane integer mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixed64Spec {
    pub scale: f64,
    pub v_max: f64,
}

impl Default for Fixed64Spec {
    fn default() -> Self {
        Self {
            scale: (1u64 << 40) as f64,
            v_max: 1.0,
        }
    }
}

impl Fixed64Spec {
    pub fn resolution(&self) -> f64 {
        0.5 / self.scale
    }

    /// Summands that fit without i64 overflow.
    pub fn max_summands(&self) -> usize {
        ((i64::MAX as f64) / (self.scale * self.v_max)).floor().min(usize::MAX as f64) as usize
    }

    pub fn encode(&self, values: &[f64]) -> Result<Vec<u64>, NetError> {
        values
            .iter()
            .map(|&v| {
                if !(v.abs() <= self.v_max) {
                    return Err(NetError::QuantOverflow {
                        value: v,
                        v_max: self.v_max,
                    });
                }
                Ok((v * self.scale).round() as i64 as u64)
            })
            .collect()
    }

    pub fn decode(&self, words: &[u64], k: usize) -> Result<Vec<f64>, NetError> {
        let max = self.max_summands();
        if k == 0 || k > max {
            return Err(NetError::CarryBound { k, max });
        }
        Ok(words.iter().map(|&w| w as i64 as f64 / self.scale).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn half_encodes_to_five_million_plus_bias() {
        let spec = QuantSpec::default();
        let w = quantize_pack(&[0.5, 0.0], &spec).unwrap();
        assert_eq!(w[0] & LANE_MASK, 5_000_000 + (1 << 25));
        assert_eq!(w[0] >> 32, 1 << 25);
    }

    #[test]
    fn lane_order_even_index_low() {
        let spec = QuantSpec::default();
        let w = quantize_pack(&[0.25, -0.75, 1.0], &spec).unwrap();
        assert_eq!(w.len(), 2);
        let back = unpack_dequantize(&w, 3, 1, &spec).unwrap();
        assert_eq!(back, vec![0.25, -0.75, 1.0]);
    }

    #[test]
    fn overflow_is_detected() {
        let spec = QuantSpec::default();
        assert!(matches!(quantize_pack(&[1.0000001], &spec), Err(NetError::QuantOverflow { .. })));
        assert!(quantize_pack(&[f64::NAN], &spec).is_err());
    }

    #[test]
    fn carry_bound_default_spec() {
        let spec = QuantSpec::default();
        // (2^25 + 10^7) * 98 < 2^32 <= (2^25 + 10^7) * 99
        assert_eq!(spec.max_summands(), 98);
        assert!(spec.check_summands(98).is_ok());
        assert!(matches!(spec.check_summands(99), Err(NetError::CarryBound { .. })));
        assert!(spec.check_summands(0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let small_bias = QuantSpec {
            bias: 10,
            ..Default::default()
        };
        assert!(small_bias.validate().is_err());
        let huge = QuantSpec {
            scale: 1e9,
            bias: u32::MAX,
            v_max: 1.0,
        };
        assert!(huge.validate().is_err());
    }

    #[test]
    fn k1_round_trip_and_cancellation() {
        let spec = QuantSpec::default();
        let w = quantize_pack(&[0.5], &spec).unwrap();
        let v = unpack_dequantize(&w, 1, 1, &spec).unwrap()[0];
        assert!((v - 0.5).abs() <= 5e-8);
        let a = quantize_pack(&[0.25], &spec).unwrap();
        let b = quantize_pack(&[-0.25], &spec).unwrap();
        let s = sum_words(&[a, b]);
        assert_eq!(unpack_dequantize(&s, 1, 2, &spec).unwrap()[0], 0.0);
    }

    #[test]
    fn random_round_trip_million_values() {
        let spec = QuantSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let values: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let words = quantize_pack(&values, &spec).unwrap();
        let back = unpack_dequantize(&words, values.len(), 1, &spec).unwrap();
        let worst = values.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 5e-8 + 1e-16, "worst {worst}");
    }

    #[test]
    fn k8_sum_matches_quantized_sum_oracle() {
        let spec = QuantSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let parts: Vec<Vec<f64>> = (0..8).map(|_| (0..12).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
            let words: Vec<Vec<u64>> = parts.iter().map(|p| quantize_pack(p, &spec).unwrap()).collect();
            let got = unpack_dequantize(&sum_words(&words), 12, 8, &spec).unwrap();
            for i in 0..12 {
                // oracle: float sum of individually quantized values
                let q: f64 = parts.iter().map(|p| (p[i] * spec.scale).round() / spec.scale).sum();
                let exact: f64 = parts.iter().map(|p| p[i]).sum();
                assert!((got[i] - q).abs() < 1e-12);
                assert!((got[i] - exact).abs() <= 8.0 * 5e-8);
            }
        }
    }

    #[test]
    fn fixed64_round_trip() {
        let spec = Fixed64Spec::default();
        let vals = [0.3, -0.999, 0.0];
        let a = spec.encode(&vals).unwrap();
        let b = spec.encode(&vals).unwrap();
        let s = sum_words(&[a, b]);
        let back = spec.decode(&s, 2).unwrap();
        for (v, b) in vals.iter().zip(back) {
            assert!((2.0 * v - b).abs() <= 2.0 * spec.resolution());
        }
    }

    proptest! {
        // 128-bit lane oracle: no lane sum ever reaches 2^32 within the bound
        #[test]
        fn packed_sums_never_carry(
            k in 1usize..=98,
            seed in any::<u64>(),
        ) {
            let spec = QuantSpec::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let parts: Vec<Vec<u64>> = (0..k)
                .map(|_| {
                    // extremes included: the bound must hold at |v| = v_max
                    let v: Vec<f64> = (0..4).map(|_| match rng.random_range(0..4) {
                        0 => 1.0,
                        1 => -1.0,
                        _ => rng.random_range(-1.0..=1.0),
                    }).collect();
                    quantize_pack(&v, &spec).unwrap()
                })
                .collect();
            let summed = sum_words(&parts);
            for (w, word) in summed.iter().enumerate() {
                let lo: u128 = parts.iter().map(|p| (p[w] & LANE_MASK) as u128).sum();
                let hi: u128 = parts.iter().map(|p| (p[w] >> 32) as u128).sum();
                prop_assert!(lo < 1u128 << 32 && hi < 1u128 << 32);
                prop_assert_eq!((word & LANE_MASK) as u128, lo);
                prop_assert_eq!((word >> 32) as u128, hi);
            }
        }
    }
}
