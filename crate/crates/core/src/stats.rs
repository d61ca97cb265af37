//! Standard-normal primitives and reproducible random streams.
//!
//! Every random quantity in the crate is drawn from an [`RngStream`], a
//! value identified by a root seed and a path of integers. The path is
//! hashed into a ChaCha key, so any substream (replication, consumer,
//! purpose) can be materialised directly without advancing a parent
//! generator.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard-normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard-normal distribution function, clamped to `[0, 1]`.
pub fn norm_cdf(x: f64) -> f64 {
    (0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)).clamp(0.0, 1.0)
}

/// Upper tail `1 - Φ(x)` without cancellation for large `x`.
pub fn norm_sf(x: f64) -> f64 {
    (0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)).clamp(0.0, 1.0)
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Inverse of [`norm_cdf`] on the open interval `(0, 1)`.
///
/// Wichura's AS241 (PPND16), relative accuracy about 1e-16.
pub fn norm_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        133.141_667_891_784_38,
        1_971.590_950_306_551_3,
        13_731.693_765_509_461,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_545,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_08,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_9,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_888,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Identifies an independent, reproducible stream of random numbers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub root_seed: u64,
    pub path: Vec<u64>,
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            path: Vec::new(),
        }
    }

    /// Child stream with `index` appended to the path.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        // Length is folded in so that [a] and [a, 0] hash differently.
        let mut state = splitmix64(self.root_seed ^ 0x5EED_5EA2_C400_0000);
        state = splitmix64(state ^ self.path.len() as u64);
        for &p in &self.path {
            state = splitmix64(state ^ splitmix64(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        key
    }

    pub(crate) fn rng(&self) -> StreamRng {
        StreamRng(ChaCha8Rng::from_seed(self.key()))
    }
}

/// Generator materialised from an [`RngStream`].
pub(crate) struct StreamRng(ChaCha8Rng);

impl StreamRng {
    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    fn open_unit(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub(crate) fn normal(&mut self) -> f64 {
        norm_quantile(self.open_unit())
    }

    pub(crate) fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.normal();
        }
    }

    pub(crate) fn uniform(&mut self) -> f64 {
        self.open_unit()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` i.i.d. standard-normal variates from `stream` (inverse-CDF transform).
pub fn draw_normal_array(stream: &RngStream, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    stream.rng().fill_normal(&mut out);
    out
}

/// `count` uniform variates on (0, 1) from `stream`.
pub fn draw_uniform_array(stream: &RngStream, count: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..count).map(|_| rng.uniform()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pdf_reference_values() {
        assert!((norm_pdf(0.0) - 0.3989422804014327).abs() <= 1e-16);
        assert!((norm_pdf(1.0) - 0.24197072451914337).abs() <= 1e-14);
        assert_eq!(norm_pdf(-1.0), norm_pdf(1.0));
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.96) - 0.9750021048517795).abs() <= 1e-12);
        // Tail values from a 50-digit mpmath evaluation.
        assert!((norm_cdf(-8.0) - 6.220960574271785e-16).abs() <= 1e-25);
        assert!((norm_sf(5.0) - 2.866515718791939e-07).abs() <= 1e-19);
    }

    #[test]
    fn cdf_monotone_on_grid() {
        let grid: Vec<f64> = (0..=16_000).map(|k| -8.0 + k as f64 * 1e-3).collect();
        for w in grid.windows(2) {
            assert!(norm_cdf(w[1]) >= norm_cdf(w[0]));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-16, 1e-12, 1e-6, 0.025, 0.3, 0.5, 0.8, 0.975] {
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() <= 1e-13 * p, "p = {p}");
        }
        // Reference quantiles from 50-digit arithmetic.
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() <= 1e-14);
        assert!((norm_quantile(1e-10) + 6.361340902404056).abs() <= 1e-13);
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn draws_are_deterministic() {
        let s = RngStream::new(7).substream(3).substream(1);
        assert_eq!(draw_normal_array(&s, 100), draw_normal_array(&s, 100));
    }

    #[test]
    fn distinct_paths_differ() {
        let base = RngStream::new(7);
        let a = draw_normal_array(&base.substream(0), 1000);
        let b = draw_normal_array(&base.substream(1), 1000);
        let c = draw_normal_array(&base.substream(0).substream(0), 1000);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
        assert!(a.iter().zip(&c).any(|(x, y)| x != y));
        assert_ne!(draw_normal_array(&RngStream::new(8), 10), draw_normal_array(&base, 10));
    }

    #[test]
    fn million_draws_moments() {
        let xs = draw_normal_array(&RngStream::new(2024), 1_000_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    proptest! {
        #[test]
        fn pdf_symmetric(x in -40.0f64..40.0) {
            prop_assert_eq!(norm_pdf(x), norm_pdf(-x));
        }

        #[test]
        fn cdf_complement(x in -8.0f64..8.0) {
            prop_assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn sf_matches_cdf(x in -8.0f64..8.0) {
            prop_assert!((norm_sf(x) - (1.0 - norm_cdf(x))).abs() <= 1e-15);
        }
    }
}
