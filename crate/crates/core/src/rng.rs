//! Hierarchical seeding.
//!
//! Every run owns one root seed. Each stage derives its own ChaCha stream from
//! `(root, label, index)`, so inserting or reordering stages never changes the
//! numbers another stage sees.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StageRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a 64-bit child seed for a named stage.
pub fn child_seed(root: u64, label: &str, index: u64) -> u64 {
    let h = fnv1a(label.as_bytes(), FNV_OFFSET);
    let h = fnv1a(&index.to_le_bytes(), h);
    splitmix64(root ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one stage of a run.
pub fn stage_rng(root: u64, label: &str, index: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(child_seed(root, label, index))
}

/// Circularly-symmetric complex Gaussian sample with total variance `variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Real Gaussian sample.
pub fn normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_seeds_differ_by_label_and_index() {
        let a = child_seed(7, "dts", 0);
        assert_ne!(a, child_seed(7, "dts", 1));
        assert_ne!(a, child_seed(7, "ser", 0));
        assert_ne!(a, child_seed(8, "dts", 0));
        assert_eq!(a, child_seed(7, "dts", 0));
    }

    #[test]
    fn complex_normal_variance() {
        let mut rng = stage_rng(1, "t", 0);
        let n = 200_000;
        let v: f64 = (0..n)
            .map(|_| complex_normal(&mut rng, 2.0).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((v - 2.0).abs() < 0.03, "{v}");
    }
}
