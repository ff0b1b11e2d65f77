//! Memory-parameter estimation and a score-based stationarity check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curves::CurveSeries;
use crate::error::{Error, Result};
use crate::stats::{bartlett_lrv, cube_root_lag, mean};

const SEARCH_LO: f64 = -0.49;
const SEARCH_HI: f64 = 1.49;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub a_hat: f64,
    pub bandwidth_m: usize,
    pub objective_value: f64,
}

/// Periodogram `I(λ_j) = |Σ x_t e^{−iλ_j t}|² / (2πN)` of the demeaned series at
/// the first `m` Fourier frequencies.
fn periodogram(xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mu = mean(xs);
    (1..=m)
        .map(|j| {
            let lambda = 2.0 * PI * j as f64 / n as f64;
            let (step_s, step_c) = lambda.sin_cos();
            // rotate (cos, sin) incrementally
            let (mut c, mut s) = (1.0f64, 0.0f64);
            let (mut re, mut im) = (0.0, 0.0);
            for (t, x) in xs.iter().enumerate() {
                let v = x - mu;
                re += v * c;
                im -= v * s;
                let nc = c * step_c - s * step_s;
                s = s * step_c + c * step_s;
                c = nc;
                if t % 64 == 63 {
                    let r = (c * c + s * s).sqrt();
                    c /= r;
                    s /= r;
                }
            }
            (re * re + im * im) / (2.0 * PI * n as f64)
        })
        .collect()
}

/// Local Whittle estimate of the memory parameter, minimised by golden section
/// on `[−0.49, 1.49]`. Default bandwidth `m = ⌊N^{0.65}⌋`.
pub fn local_whittle(series: &[f64], m: Option<usize>) -> Result<MemoryEstimate> {
    let n = series.len();
    if n < 128 {
        return Err(Error::InsufficientData(format!(
            "local Whittle needs at least 128 observations, got {n}"
        )));
    }
    let mu = mean(series);
    let spread = series.iter().map(|x| (x - mu).abs()).fold(0.0, f64::max);
    if !(spread > 0.0) {
        return Err(Error::Degenerate("series is constant".into()));
    }
    let m = m.unwrap_or_else(|| (n as f64).powf(0.65).floor() as usize);
    if m < 1 || 2 * m >= n {
        return Err(Error::Input(format!("bandwidth m = {m} must satisfy 1 ≤ m < N/2")));
    }
    let pgram = periodogram(series, m);
    let log_freq: Vec<f64> = (1..=m).map(|j| (2.0 * PI * j as f64 / n as f64).ln()).collect();
    let mean_log_freq = log_freq.iter().sum::<f64>() / m as f64;

    let objective = |a: f64| -> f64 {
        let s: f64 = pgram
            .iter()
            .zip(&log_freq)
            .map(|(i, lf)| (2.0 * a * lf).exp() * i)
            .sum::<f64>()
            / m as f64;
        s.ln() - 2.0 * a * mean_log_freq
    };

    let a_hat = golden_section(objective, SEARCH_LO, SEARCH_HI, 1e-6);
    Ok(MemoryEstimate {
        a_hat,
        bandwidth_m: m,
        objective_value: objective(a_hat),
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub stationary: bool,
    pub statistic: f64,
    pub pvalue: f64,
}

/// Level-KPSS critical values (10%, 5%, 2.5%, 1%).
const KPSS_TABLE: [(f64, f64); 4] = [(0.347, 0.10), (0.463, 0.05), (0.574, 0.025), (0.739, 0.01)];

/// KPSS level statistic of a scalar series with Bartlett long-run variance.
/// The p-value interpolates the critical-value table and is clipped to `[0.01, 0.10]`.
pub fn kpss_level(xs: &[f64], lag: usize) -> Result<(f64, f64)> {
    let n = xs.len();
    let mu = mean(xs);
    let lrv = bartlett_lrv(xs, lag);
    if !(lrv > 0.0) {
        return Err(Error::Degenerate("score series has zero variance".into()));
    }
    let mut partial = 0.0;
    let mut acc = 0.0;
    for x in xs {
        partial += x - mu;
        acc += partial * partial;
    }
    let stat = acc / (n as f64 * n as f64 * lrv);
    let pvalue = if stat <= KPSS_TABLE[0].0 {
        KPSS_TABLE[0].1
    } else if stat >= KPSS_TABLE[3].0 {
        KPSS_TABLE[3].1
    } else {
        let k = KPSS_TABLE.windows(2).position(|w| stat < w[1].0).unwrap();
        let (c0, p0) = KPSS_TABLE[k];
        let (c1, p1) = KPSS_TABLE[k + 1];
        p0 + (p1 - p0) * (stat - c0) / (c1 - c0)
    };
    Ok((stat, pvalue))
}

/// Projects the squared curves on `basis1` and runs a KPSS level test on the
/// scores; `stationary` when the p-value is at least 0.05.
pub fn score_stationarity_check(squared: &CurveSeries, basis1: &[f64]) -> Result<StationarityCheck> {
    if squared.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "stationarity check needs at least 100 curves, got {}",
            squared.len()
        )));
    }
    if basis1.len() != squared.j() {
        return Err(Error::Shape("basis function length differs from grid".into()));
    }
    let grid = squared.grid();
    let scores: Vec<f64> = squared.values().iter().map(|y| grid.inner(y, basis1)).collect();
    let (statistic, pvalue) = kpss_level(&scores, cube_root_lag(scores.len()))?;
    Ok(StationarityCheck {
        stationary: pvalue >= 0.05,
        statistic,
        pvalue,
    })
}
