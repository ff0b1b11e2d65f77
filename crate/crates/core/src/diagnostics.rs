//! Portmanteau tests for serial correlation and conditional heteroskedasticity
//! of a curve series.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curves::CurveSeries;
use crate::error::{Error, Result};
use crate::stats::chi2_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DiagnosticTest {
    Autocorr,
    Hetero,
}

impl DiagnosticTest {
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticTest::Autocorr => "AUTOCORR",
            DiagnosticTest::Hetero => "HETERO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub test: DiagnosticTest,
    pub lags: Vec<usize>,
    pub statistics: Vec<f64>,
    pub pvalues: Vec<f64>,
}

/// `N Σ_{h≤H} ‖r̂_h‖² / ‖r̂_0‖²` for each `H` in `lags`, where `r̂_h` is the
/// lag-`h` autocovariance kernel of the demeaned curves.
///
/// Under independence each summand has mean `ν = (tr r̂_0)² / ‖r̂_0‖²` and
/// variance 2, so `ν·stat` is referred to `χ²(H ν²)`.
pub fn autocorr_test(series: &CurveSeries, lags: &[usize]) -> Result<DiagnosticsReport> {
    portmanteau(series.values(), series, lags, DiagnosticTest::Autocorr)
}

/// [`autocorr_test`] on the squared curves.
pub fn hetero_test(series: &CurveSeries, lags: &[usize]) -> Result<DiagnosticsReport> {
    let squared: Vec<Vec<f64>> = series
        .values()
        .iter()
        .map(|r| r.iter().map(|v| v * v).collect())
        .collect();
    portmanteau(&squared, series, lags, DiagnosticTest::Hetero)
}

fn portmanteau(
    rows: &[Vec<f64>],
    series: &CurveSeries,
    lags: &[usize],
    test: DiagnosticTest,
) -> Result<DiagnosticsReport> {
    if lags.is_empty() || lags.contains(&0) {
        return Err(Error::Input("lags must be non-empty and positive".into()));
    }
    let n = rows.len();
    let max_lag = *lags.iter().max().expect("non-empty");
    if n <= max_lag + 10 {
        return Err(Error::InsufficientData(format!(
            "portmanteau test at lag {max_lag} needs more than {} curves",
            max_lag + 10
        )));
    }
    let j = series.j();
    let root_w: Vec<f64> = series.grid().weights().iter().map(|w| w.sqrt()).collect();
    let mut mean = vec![0.0; j];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
    }
    // weighted, demeaned data: kernel norms become Frobenius norms
    let z = DMatrix::from_fn(n, j, |t, u| (rows[t][u] - mean[u]) * root_w[u]);

    let cov = |h: usize| -> DMatrix<f64> {
        let a = z.rows(0, n - h);
        let b = z.rows(h, n - h);
        a.transpose() * b / n as f64
    };
    let r0 = cov(0);
    let norm0 = r0.norm_squared();
    let trace = r0.trace();
    if !(norm0 > 0.0) || !(trace > 0.0) {
        return Err(Error::Degenerate("curve series is constant".into()));
    }
    let nu = trace * trace / norm0;

    let mut cumulative = vec![0.0; max_lag + 1];
    for h in 1..=max_lag {
        cumulative[h] = cumulative[h - 1] + n as f64 * cov(h).norm_squared() / norm0;
    }
    let statistics: Vec<f64> = lags.iter().map(|&h| cumulative[h]).collect();
    let pvalues = lags
        .iter()
        .zip(&statistics)
        .map(|(&h, &s)| chi2_sf(nu * s, h as f64 * nu * nu))
        .collect();
    Ok(DiagnosticsReport {
        test,
        lags: lags.to_vec(),
        statistics,
        pvalues,
    })
}

/// Rows `(series label, report)`, one CSV line per lag.
pub fn write_diagnostics<W: Write>(writer: W, rows: &[(String, DiagnosticsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series", "test", "lag", "statistic", "pvalue"])?;
    for (name, rep) in rows {
        for ((lag, s), p) in rep.lags.iter().zip(&rep.statistics).zip(&rep.pvalues) {
            w.write_record([
                name.clone(),
                rep.test.label().to_string(),
                lag.to_string(),
                s.to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
