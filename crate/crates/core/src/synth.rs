//! Synthetic data generators for tests, demos and the `simulate` command.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::curves::{CurveKind, CurveSeries, IntradayGrid};
use crate::error::Result;
use crate::fgarch::business_dates;

/// `k` functions orthonormal under the grid quadrature, built from
/// `cos(π l u)` by Gram-Schmidt. The first is the constant 1.
pub fn orthonormal_functions(grid: &IntradayGrid, k: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for l in 0..k {
        let mut f: Vec<f64> = grid
            .points()
            .iter()
            .map(|u| (std::f64::consts::PI * l as f64 * u).cos())
            .collect();
        for _ in 0..2 {
            for q in &out {
                let c = grid.inner(&f, q);
                f.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = grid.norm(&f);
        f.iter_mut().for_each(|a| *a /= n);
        out.push(f);
    }
    out
}

/// Fractionally integrated Gaussian noise of order `d`, from the MA(∞)
/// representation with weights `Γ(j+d)/(Γ(j+1)Γ(d))` truncated at `n + burn` terms.
pub fn fractional_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, d: f64, burn: usize) -> Vec<f64> {
    let m = n + burn;
    let mut psi = vec![1.0; m];
    for j in 1..m {
        psi[j] = psi[j - 1] * (j as f64 - 1.0 + d) / j as f64;
    }
    let eps: Vec<f64> = (0..m + n).map(|_| rng.sample(StandardNormal)).collect();
    (0..n)
        .map(|t| {
            let now = m + t;
            psi.iter().enumerate().map(|(j, w)| w * eps[now - j]).sum()
        })
        .collect()
}

/// AR(1) score paths `ξ_t = φ ξ_{t−1} + sd·z_t`, one column per coefficient, started at stationarity.
pub fn ar1_scores<R: Rng + ?Sized>(rng: &mut R, n: usize, phi: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
    let k = phi.len();
    let mut x: Vec<f64> = (0..k)
        .map(|l| {
            let z: f64 = rng.sample(StandardNormal);
            z * sd[l] / (1.0 - phi[l] * phi[l]).sqrt()
        })
        .collect();
    (0..n)
        .map(|_| {
            for l in 0..k {
                let z: f64 = rng.sample(StandardNormal);
                x[l] = phi[l] * x[l] + sd[l] * z;
            }
            x.clone()
        })
        .collect()
}

/// Curves `offset(u) + Σ_l scores_{t,l} f_l(u) + noise_sd·z_t(u)` with
/// pointwise independent noise.
pub fn curves_from_scores<R: Rng + ?Sized>(
    grid: &IntradayGrid,
    functions: &[Vec<f64>],
    scores: &[Vec<f64>],
    offset: &[f64],
    noise_sd: f64,
    rng: &mut R,
    kind: CurveKind,
) -> Result<CurveSeries> {
    let rows = scores
        .iter()
        .map(|s| {
            let mut c = offset.to_vec();
            for (sl, f) in s.iter().zip(functions) {
                c.iter_mut().zip(f).for_each(|(a, v)| *a += sl * v);
            }
            if noise_sd > 0.0 {
                for a in c.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *a += noise_sd * z;
                }
            }
            c
        })
        .collect();
    CurveSeries::new(grid.clone(), business_dates(scores.len()), rows, kind)
}
