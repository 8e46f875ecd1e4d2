//! Reproducible random streams and exact Poisson sampling.
//!
//! Streams are ChaCha8 instances keyed by (seed, level, replicate)
//! with the substream index mapped to the ChaCha stream counter, so
//! any (key, substream) pair names one fixed, independent sequence
//! regardless of thread schedule. Substream slots are laid out as
//! `reaction * 3 + slot` so the coupled kernels consume identical
//! variates whenever their Poisson means agree.
//!
//! The Poisson sampler is exact: inversion below mean 10, rejection
//! with a Cauchy envelope at and above 10. A normal approximation is
//! deliberately not used; deep-level rates are tiny and the
//! importance-sampling likelihood depends on exact jump counts.
//! Mean zero returns zero without consuming randomness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Inversion below this mean, rejection at or above it.
const POISSON_INVERSION_CUTOFF: f64 = 10.0;

/// Domain tag folded into every stream key so these streams cannot
/// collide with any other ChaCha use of the same seed.
const KEY_DOMAIN: u64 = 0x53524e_4d4c4d43;

/// Names one random stream: which run (seed), which grid level, which
/// sample path (replicate), and which slot within the path (substream,
/// laid out as reaction index times 3 plus split slot).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub level: u32,
    pub replicate: u64,
    pub substream: u32,
}

/// Deterministic, independent stream for the key. Identical across
/// runs and thread schedules; distinct in any field means a distinct
/// stream.
pub fn derive_stream(key: &StreamKey) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&key.seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&u64::from(key.level).to_le_bytes());
    bytes[16..24].copy_from_slice(&key.replicate.to_le_bytes());
    bytes[24..32].copy_from_slice(&KEY_DOMAIN.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(u64::from(key.substream));
    rng
}

/// All slot streams for one simulated path: `3 * J` Poisson slots for
/// the coupled kernels, or `J` strided slots for a single path.
pub fn path_streams(seed: u64, level: u32, replicate: u64, count: u32) -> Vec<ChaCha8Rng> {
    (0..count)
        .map(|substream| derive_stream(&StreamKey { seed, level, replicate, substream }))
        .collect()
}

/// Exact Poisson sample with the given mean.
///
/// Mean 0 returns 0 deterministically without touching the stream.
/// Panics on a negative or non-finite mean; that is a caller bug, not
/// a recoverable state.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    assert!(
        mean.is_finite() && mean >= 0.0,
        "Poisson mean must be finite and non-negative, got {mean}"
    );
    if mean == 0.0 {
        return 0;
    }
    if mean < POISSON_INVERSION_CUTOFF {
        poisson_inversion(rng, mean)
    } else {
        poisson_rejection(rng, mean)
    }
}

/// Inversion by cumulative pmf accumulation; one uniform per sample.
/// The `p > 0` guard terminates the walk when the pmf underflows,
/// which caps pathological draws with u close to 1.
fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.gen();
    let mut p = (-mean).exp();
    let mut acc = p;
    let mut k = 0u64;
    while u > acc && p > 0.0 {
        k += 1;
        p *= mean / k as f64;
        acc += p;
    }
    k
}

/// Rejection with a Cauchy (Lorentzian) envelope. The comparison
/// value `t = 0.9 (1 + y^2) pmf(em; mean)` stays at or below 1 for
/// every mean at or above the cutoff (checked exhaustively in tests),
/// so accepted values follow the exact Poisson law.
fn poisson_rejection<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let sq = (2.0 * mean).sqrt();
    let ln_mean = mean.ln();
    loop {
        let y = (PI * rng.gen::<f64>()).tan();
        let em = sq * y + mean;
        if em < 0.0 {
            continue;
        }
        let em = em.floor();
        let t = 0.9 * (1.0 + y * y) * (em * ln_mean - ln_factorial(em as u64) - mean).exp();
        debug_assert!(t <= 1.0, "rejection envelope violated at mean {mean}, em {em}");
        if rng.gen::<f64>() <= t {
            return em as u64;
        }
    }
}

/// Natural log of the Poisson pmf `e^-mean mean^k / k!`. This is the
/// reference used by the likelihood checks; mean must be positive.
pub fn ln_poisson_pmf(k: u64, mean: f64) -> f64 {
    debug_assert!(mean > 0.0 && mean.is_finite());
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

const LN_FACTORIAL_TABLE_SIZE: usize = 1024;

fn ln_factorial_table() -> &'static [f64; LN_FACTORIAL_TABLE_SIZE] {
    static TABLE: OnceLock<[f64; LN_FACTORIAL_TABLE_SIZE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0f64; LN_FACTORIAL_TABLE_SIZE];
        // Exact product in f64 while it fits, then rescale by summing
        // logs of partial products to keep absolute error near 1 ulp.
        let mut acc = 0.0f64;
        let mut partial = 1.0f64;
        for k in 1..LN_FACTORIAL_TABLE_SIZE {
            partial *= k as f64;
            if partial > 1e300 {
                acc += partial.ln();
                partial = 1.0;
            }
            t[k] = acc + partial.ln();
        }
        t
    })
}

/// `ln k!`, tabulated up to 1023 and by Stirling's series beyond.
pub fn ln_factorial(k: u64) -> f64 {
    if (k as usize) < LN_FACTORIAL_TABLE_SIZE {
        ln_factorial_table()[k as usize]
    } else {
        ln_gamma_stirling(k as f64 + 1.0)
    }
}

/// Stirling series for ln Gamma(x), accurate to well below 1e-12 for
/// the x >= 1024 range it is used on.
fn ln_gamma_stirling(x: f64) -> f64 {
    const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_74;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + HALF_LN_TWO_PI
        + inv * (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Unit-rate exponential variate.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - u lies in (0, 1], so the log is finite.
    let u: f64 = rng.gen();
    -(1.0 - u).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(seed: u64, level: u32, replicate: u64, substream: u32) -> ChaCha8Rng {
        derive_stream(&StreamKey { seed, level, replicate, substream })
    }

    #[test]
    fn same_key_gives_identical_outputs() {
        let mut a = stream(42, 3, 17, 5);
        let mut b = stream(42, 3, 17, 5);
        for i in 0..100 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>(), "diverged at draw {i}");
        }
    }

    #[test]
    fn different_replicate_gives_different_outputs() {
        let mut a = stream(42, 3, 17, 5);
        let mut b = stream(42, 3, 18, 5);
        let same = (0..100).filter(|_| a.gen::<u64>() == b.gen::<u64>()).count();
        assert_eq!(same, 0, "streams for different replicates should not collide");
    }

    #[test]
    fn different_substream_gives_different_outputs() {
        let mut a = stream(42, 3, 17, 5);
        let mut b = stream(42, 3, 17, 6);
        let same = (0..100).filter(|_| a.gen::<u64>() == b.gen::<u64>()).count();
        assert_eq!(same, 0, "streams for different substreams should not collide");
    }

    #[test]
    fn different_level_and_seed_give_different_outputs() {
        let mut base = stream(42, 3, 17, 5);
        let mut level = stream(42, 4, 17, 5);
        let mut seed = stream(43, 3, 17, 5);
        let b0 = base.gen::<u64>();
        assert_ne!(b0, level.gen::<u64>());
        assert_ne!(base.gen::<u64>(), seed.gen::<u64>());
    }

    #[test]
    fn adjacent_streams_are_uncorrelated() {
        let n = 100_000;
        let mut a = stream(7, 0, 0, 0);
        let mut b = stream(7, 0, 0, 1);
        let xs: Vec<f64> = (0..n).map(|_| a.gen::<f64>()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.gen::<f64>()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            cov += (x - mx) * (y - my);
            vx += (x - mx) * (x - mx);
            vy += (y - my) * (y - my);
        }
        let r = cov / (vx.sqrt() * vy.sqrt());
        assert!(r.abs() < 0.01, "pairwise correlation too large: {r}");
    }

    #[test]
    fn poisson_mean_zero_returns_zero_without_consuming_randomness() {
        let mut rng = stream(1, 0, 0, 0);
        let mut untouched = rng.clone();
        assert_eq!(poisson(&mut rng, 0.0), 0);
        assert_eq!(
            rng.gen::<u64>(),
            untouched.gen::<u64>(),
            "mean-zero draw must not advance the stream"
        );
    }

    #[test]
    #[should_panic(expected = "finite and non-negative")]
    fn poisson_rejects_negative_mean() {
        let mut rng = stream(1, 0, 0, 0);
        poisson(&mut rng, -1.0);
    }

    #[test]
    #[should_panic(expected = "finite and non-negative")]
    fn poisson_rejects_nan_mean() {
        let mut rng = stream(1, 0, 0, 0);
        poisson(&mut rng, f64::NAN);
    }

    #[test]
    fn poisson_empirical_mean_at_four() {
        let mut rng = stream(11, 0, 0, 0);
        let n = 1_000_000u64;
        let total: u64 = (0..n).map(|_| poisson(&mut rng, 4.0)).sum();
        let mean = total as f64 / n as f64;
        // CLT: sigma/sqrt(n) = 0.002, so [3.99, 4.01] is a 5-sigma window.
        assert!(
            (3.99..=4.01).contains(&mean),
            "empirical mean {mean} outside [3.99, 4.01]"
        );
    }

    /// Chi-square statistic for observed counts against expected
    /// probabilities (already merged into bins).
    fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
        observed
            .iter()
            .zip(expected)
            .map(|(&o, &e)| {
                let d = o as f64 - e;
                d * d / e
            })
            .sum()
    }

    #[test]
    fn poisson_gof_small_mean_inversion_branch() {
        let mean = 0.1;
        let n = 1_000_000u64;
        let mut rng = stream(12, 0, 0, 0);
        // Bins {0}, {1}, {2}, {>=3}.
        let mut obs = [0u64; 4];
        for _ in 0..n {
            let k = poisson(&mut rng, mean) as usize;
            obs[k.min(3)] += 1;
        }
        let p: Vec<f64> = (0..3).map(|k| ln_poisson_pmf(k, mean).exp()).collect();
        let tail = 1.0 - p.iter().sum::<f64>();
        let expected = [p[0] * n as f64, p[1] * n as f64, p[2] * n as f64, tail * n as f64];
        let stat = chi_square(&obs, &expected);
        // 0.999 quantile of chi-square with 3 degrees of freedom.
        assert!(stat < 16.266, "GOF at mean 0.1 failed: chi2 = {stat}");
    }

    #[test]
    fn poisson_gof_mid_mean_inversion_branch() {
        let mean = 4.0;
        let n = 1_000_000u64;
        let mut rng = stream(13, 0, 0, 0);
        // Bins {<=1}, {2}, {3}, ..., {8}, {>=9}: 9 bins.
        let mut obs = [0u64; 9];
        for _ in 0..n {
            let k = poisson(&mut rng, mean);
            let bin = if k <= 1 { 0 } else { (k as usize - 1).min(8) };
            obs[bin] += 1;
        }
        let pmf = |k: u64| ln_poisson_pmf(k, mean).exp();
        let mut expected = [0.0f64; 9];
        expected[0] = (pmf(0) + pmf(1)) * n as f64;
        for k in 2..=8u64 {
            expected[k as usize - 1] = pmf(k) * n as f64;
        }
        expected[8] = n as f64 - expected[..8].iter().sum::<f64>();
        let stat = chi_square(&obs, &expected);
        // 0.999 quantile of chi-square with 8 degrees of freedom.
        assert!(stat < 26.124, "GOF at mean 4.0 failed: chi2 = {stat}");
    }

    #[test]
    fn poisson_gof_rejection_branch() {
        let mean = 30.0;
        let n = 1_000_000u64;
        let mut rng = stream(14, 0, 0, 0);
        // Bins {<=18}, {19}, ..., {41}, {>=42}: 25 bins.
        let mut obs = [0u64; 25];
        for _ in 0..n {
            let k = poisson(&mut rng, mean);
            let bin = if k <= 18 { 0 } else { (k as usize - 18).min(24) };
            obs[bin] += 1;
        }
        let pmf = |k: u64| ln_poisson_pmf(k, mean).exp();
        let mut expected = [0.0f64; 25];
        expected[0] = (0..=18).map(pmf).sum::<f64>() * n as f64;
        for k in 19..=41u64 {
            expected[k as usize - 18] = pmf(k) * n as f64;
        }
        expected[24] = n as f64 - expected[..24].iter().sum::<f64>();
        let stat = chi_square(&obs, &expected);
        // 0.999 quantile of chi-square with 24 degrees of freedom.
        assert!(stat < 51.179, "GOF at mean 30 failed: chi2 = {stat}");
    }

    #[test]
    fn poisson_rejection_branch_large_mean_moments() {
        let mean = 3000.0;
        let n = 200_000u64;
        let mut rng = stream(15, 0, 0, 0);
        let draws: Vec<f64> = (0..n).map(|_| poisson(&mut rng, mean) as f64).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / n as f64;
        // Mean and variance both equal 3000; 5-sigma windows.
        let mean_tol = 5.0 * (mean / n as f64).sqrt();
        assert!((m - mean).abs() < mean_tol, "mean {m} vs {mean} (tol {mean_tol})");
        let var_rel_tol = 5.0 * (2.0f64 / n as f64).sqrt();
        assert!(
            (v / mean - 1.0).abs() < var_rel_tol,
            "variance {v} vs {mean} (rel tol {var_rel_tol})"
        );
    }

    #[test]
    fn rejection_envelope_stays_below_one() {
        // The acceptance value must be a probability for every mean the
        // rejection branch can see. Scan worst-case y per integer em.
        for &mean in &[10.0f64, 10.5, 11.0, 12.0, 15.0, 20.0, 50.0, 100.0, 1000.0, 1e4, 1e6] {
            let sq = (2.0 * mean).sqrt();
            let ln_mean = mean.ln();
            let hi = (mean + 60.0 * mean.sqrt()) as u64;
            for em in 0..=hi {
                let y_lo = (em as f64 - mean) / sq;
                let y_hi = (em as f64 + 1.0 - mean) / sq;
                let y2 = y_lo.abs().max(y_hi.abs()).powi(2);
                let t = 0.9
                    * (1.0 + y2)
                    * (em as f64 * ln_mean - ln_factorial(em) - mean).exp();
                assert!(
                    t <= 1.0,
                    "envelope violated: mean {mean}, em {em}, t {t}"
                );
            }
        }
    }

    #[test]
    fn ln_factorial_matches_direct_summation() {
        let mut acc = 0.0f64;
        for k in 1..5000u64 {
            acc += (k as f64).ln();
            let got = ln_factorial(k);
            assert!(
                (got - acc).abs() < 1e-9 * acc.max(1.0),
                "ln {k}! = {got}, summation {acc}"
            );
        }
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
    }

    #[test]
    fn exponential_has_unit_mean() {
        let mut rng = stream(16, 0, 0, 0);
        let n = 1_000_000;
        let total: f64 = (0..n).map(|_| exponential(&mut rng)).sum();
        let mean = total / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "exponential mean {mean}");
    }
}
