//! Intraday value-at-risk curves, violation processes and their backtests.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curves::CurveSeries;
use crate::error::{Error, Result};
use crate::stats::{
    autocovariance, bartlett_lrv, chi2_sf, cube_root_lag, mean, normal_two_sided_pvalue,
    quantile_sorted, rng_for,
};

pub const MIN_BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCurve {
    pub zeta: f64,
    pub curve: Vec<f64>,
    pub date: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationSeries {
    pub zeta: f64,
    pub side: Side,
    pub dates: Vec<String>,
    /// `T×J` indicators.
    pub values: Vec<Vec<u8>>,
}

impl ViolationSeries {
    /// Daily exceedance rates `p̂_t`, the grid mean of `Z_t(·)`.
    pub fn daily_rates(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.iter().map(|&z| z as f64).sum::<f64>() / row.len() as f64)
            .collect()
    }

    pub fn overall_rate(&self) -> f64 {
        mean(&self.daily_rates())
    }
}

/// Pointwise `ζ`-quantile of `B` whole residual curves drawn with replacement.
pub fn residual_quantile_curve(residuals: &CurveSeries, zeta: f64, b: usize, seed: u64) -> Result<Vec<f64>> {
    if residuals.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "residual bootstrap needs at least 50 curves, got {}",
            residuals.len()
        )));
    }
    if b < MIN_BOOTSTRAP {
        return Err(Error::Input(format!("bootstrap size {b} is below {MIN_BOOTSTRAP}")));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Input(format!("quantile level {zeta} must lie in (0, 1)")));
    }
    let n = residuals.len();
    let draws: Vec<usize> = (0..b)
        .map(|r| rng_for(seed, r as u64).random_range(0..n))
        .collect();
    let mut column = vec![0.0; b];
    Ok((0..residuals.j())
        .map(|j| {
            for (c, &i) in column.iter_mut().zip(&draws) {
                *c = residuals.row(i)[j];
            }
            column.sort_by(f64::total_cmp);
            quantile_sorted(&column, zeta)
        })
        .collect())
}

/// `VaR_{t+1}(u) = σ̂_{t+1}(u) ε̂^ζ(u)`.
pub fn var_forecast(sigma_forecast: &[f64], eps_quantile: &[f64], zeta: f64, date: &str) -> Result<VarCurve> {
    if sigma_forecast.len() != eps_quantile.len() {
        return Err(Error::Shape(format!(
            "{} volatility points for {} quantile points",
            sigma_forecast.len(),
            eps_quantile.len()
        )));
    }
    if let Some(s) = sigma_forecast.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::Domain(format!("volatility forecast {s} is not positive")));
    }
    Ok(VarCurve {
        zeta,
        curve: sigma_forecast.iter().zip(eps_quantile).map(|(s, e)| s * e).collect(),
        date: date.to_string(),
    })
}

/// `Z_t(u) = 1{ỹ_t(u) < VaR_t(u)}` (lower) or `1{ỹ_t(u) > VaR_t(u)}` (upper).
pub fn violations(demeaned: &CurveSeries, var_curves: &[VarCurve], side: Side) -> Result<ViolationSeries> {
    if var_curves.is_empty() {
        return Err(Error::Input("no VaR curves".into()));
    }
    if demeaned.len() != var_curves.len()
        || demeaned.dates().iter().zip(var_curves).any(|(d, v)| d != &v.date)
    {
        return Err(Error::Alignment("returns and VaR curves cover different dates".into()));
    }
    let zeta = var_curves[0].zeta;
    let mut values = Vec::with_capacity(var_curves.len());
    for (y, v) in demeaned.values().iter().zip(var_curves) {
        if v.curve.len() != y.len() {
            return Err(Error::Shape("VaR curve length differs from grid".into()));
        }
        values.push(
            y.iter()
                .zip(&v.curve)
                .map(|(a, b)| match side {
                    Side::Lower => u8::from(a < b),
                    Side::Upper => u8::from(a > b),
                })
                .collect(),
        );
    }
    Ok(ViolationSeries {
        zeta,
        side,
        dates: demeaned.dates().to_vec(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub pvalue: f64,
}

/// HAC z-test of `E p̂_t = ζ` (`ζ` is replaced by `1 − ζ` on the upper side).
pub fn backtest_unbiasedness(v: &ViolationSeries) -> Result<TestOutcome> {
    let t = v.values.len();
    if t < 100 {
        return Err(Error::InsufficientData(format!("unbiasedness test needs T ≥ 100, got {t}")));
    }
    let target = match v.side {
        Side::Lower => v.zeta,
        Side::Upper => 1.0 - v.zeta,
    };
    let rates = v.daily_rates();
    let diff = mean(&rates) - target;
    let s = bartlett_lrv(&rates, cube_root_lag(t)).max(0.0).sqrt();
    if !(s > 0.0) {
        // constant exceedance rate: decided by the sign of the bias alone
        return Ok(if diff == 0.0 {
            TestOutcome {
                statistic: 0.0,
                pvalue: 1.0,
            }
        } else {
            TestOutcome {
                statistic: f64::INFINITY.copysign(diff),
                pvalue: 0.0,
            }
        });
    }
    let statistic = (t as f64).sqrt() * diff / s;
    Ok(TestOutcome {
        statistic,
        pvalue: normal_two_sided_pvalue(statistic),
    })
}

/// Ljung-Box test on the daily exceedance rates at each lag `H`, with χ²(H) p-values.
pub fn backtest_independence(v: &ViolationSeries, lags: &[usize]) -> Result<Vec<(usize, TestOutcome)>> {
    if lags.is_empty() || lags.contains(&0) {
        return Err(Error::Input("lags must be non-empty and positive".into()));
    }
    let t = v.values.len();
    let max_lag = *lags.iter().max().expect("non-empty");
    if t <= max_lag + 10 {
        return Err(Error::InsufficientData(format!(
            "independence test at lag {max_lag} needs more than {} days",
            max_lag + 10
        )));
    }
    let rates = v.daily_rates();
    let g0 = autocovariance(&rates, 0);
    if !(g0 > 0.0) {
        return Err(Error::Degenerate("daily exceedance rate is constant".into()));
    }
    let tf = t as f64;
    let mut acc = vec![0.0; max_lag + 1];
    for k in 1..=max_lag {
        let rho = autocovariance(&rates, k) / g0;
        acc[k] = acc[k - 1] + rho * rho / (tf - k as f64);
    }
    Ok(lags
        .iter()
        .map(|&h| {
            let q = tf * (tf + 2.0) * acc[h];
            (
                h,
                TestOutcome {
                    statistic: q,
                    pvalue: chi2_sf(q, h as f64),
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub asset: String,
    pub model: String,
    pub zeta: f64,
    pub test: String,
    pub lag: Option<usize>,
    pub pvalue: Option<f64>,
}

pub fn write_backtest_table<W: Write>(writer: W, rows: &[BacktestRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset", "model", "zeta", "test", "lag", "pvalue"])?;
    for r in rows {
        w.write_record([
            r.asset.clone(),
            r.model.clone(),
            r.zeta.to_string(),
            r.test.clone(),
            r.lag.map_or_else(|| "NA".into(), |l| l.to_string()),
            r.pvalue.map_or_else(|| "NA".into(), |p| p.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
