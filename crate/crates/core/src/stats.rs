//! Small scalar statistics shared by the estimation and testing modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample autocovariance at `lag` with the 1/n normalisation.
pub fn autocovariance(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return 0.0;
    }
    let m = mean(xs);
    let mut acc = 0.0;
    for t in lag..n {
        acc += (xs[t] - m) * (xs[t - lag] - m);
    }
    acc / n as f64
}

/// Bartlett (Newey-West) long-run variance with truncation lag `lag`:
/// `γ₀ + 2 Σ_{l=1..lag} (1 − l/(lag+1)) γ_l`.
pub fn bartlett_lrv(xs: &[f64], lag: usize) -> f64 {
    let mut lrv = autocovariance(xs, 0);
    for l in 1..=lag.min(xs.len().saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        lrv += 2.0 * w * autocovariance(xs, l);
    }
    lrv
}

/// Default truncation lag `⌊n^{1/3}⌋`.
pub fn cube_root_lag(n: usize) -> usize {
    // guard against 7.999.. for perfect cubes
    let mut h = (n as f64).cbrt().floor() as usize;
    while (h + 1).pow(3) <= n {
        h += 1;
    }
    while h > 0 && h.pow(3) > n {
        h -= 1;
    }
    h
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_pvalue(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z.is_infinite() {
        return 0.0;
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - n.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Upper-tail probability of a χ² variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let c = ChiSquared::new(dof).expect("positive degrees of freedom");
    (1.0 - c.cdf(x)).clamp(0.0, 1.0)
}

/// Quantile of already-sorted data by linear interpolation of order statistics
/// (position `(n−1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for replicate `stream` under a user seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}
