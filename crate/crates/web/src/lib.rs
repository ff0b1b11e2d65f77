//! Browser demo on top of `fxcurve`. Each operation takes a JSON settings
//! object and returns a JSON report; the `wasm_bindgen` exports are thin
//! wrappers so the same code runs in native tests.

use fxcurve::basis::{eigenvalue_ratio, tfpca};
use fxcurve::curves::{demean, square_series, CurveSeries, IntradayGrid};
use fxcurve::fgarch::{
    forecast_one_step, qmle_fit, simulate, BasisFamily, ErrorModel, FGarchFit, FitBasis, ModelKind,
    ModelSpec, ProjectedParams, QmleOptions, SimulateOptions,
};
use fxcurve::risk::{residual_quantile_curve, var_forecast};
use fxcurve::trading::{
    functional_mean_forecast, ExitReason, performance, run_strategy, StrategyConfig, TradeSide, TradingDay,
};
use fxcurve::Error;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSettings {
    /// Days used to estimate the model.
    pub fit_days: usize,
    /// Days after the estimation window (used by the trading demo).
    pub test_days: usize,
    pub grid_j: usize,
    pub d: f64,
    pub a: f64,
    pub b: f64,
    pub zeta: f64,
    pub seed: u64,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self { fit_days: 300, test_days: 150, grid_j: 48, d: 0.2, a: 0.3, b: 0.4, zeta: 0.05, seed: 1 }
    }
}

impl DemoSettings {
    fn validate(&self) -> Result<(), Error> {
        if !(100..=3000).contains(&self.fit_days) {
            return Err(Error::Config("fit_days must lie in 100..=3000".into()));
        }
        if self.test_days > 2000 {
            return Err(Error::Config("test_days must be at most 2000".into()));
        }
        if !(4..=288).contains(&self.grid_j) {
            return Err(Error::Config("grid_j must lie in 4..=288".into()));
        }
        if !(self.d > 0.0) || !(self.a >= 0.0) || !(self.b >= 0.0) || !(self.a + self.b < 1.0) {
            return Err(Error::Config("need d > 0, a, b >= 0 and a + b < 1".into()));
        }
        if !(self.zeta > 0.0 && self.zeta < 0.5) {
            return Err(Error::Config("zeta must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

struct Scenario {
    grid: IntradayGrid,
    returns: CurveSeries,
    sigma2: CurveSeries,
    fit: FGarchFit,
}

fn scenario(s: &DemoSettings) -> Result<Scenario, Error> {
    s.validate()?;
    let grid = IntradayGrid::uniform(s.grid_j)?;
    let raw: Vec<f64> = grid.points().iter().map(|u| 0.25 + u).collect();
    let norm = grid.norm(&raw);
    let shape: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    let path = simulate(
        &ProjectedParams::scalar(s.d, s.a, s.b),
        &grid,
        &[shape],
        &ErrorModel::GaussianOu,
        s.fit_days + s.test_days.max(1),
        s.seed,
        &SimulateOptions::default(),
    )?;
    let (demeaned, mean) = demean(&path.returns.slice(0..s.fit_days), None)?;
    let squared = square_series(&demeaned)?;
    let full = tfpca(&squared, 4.min(s.grid_j))?;
    let k = if full.k() > 1 { eigenvalue_ratio(&full.eigenvalues, 3.min(full.k() - 1))? } else { 1 };
    let basis = FitBasis::from_basis(&full.truncated(k));
    let fit = qmle_fit(
        ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
        &demeaned,
        &mean,
        &basis,
        None,
        &QmleOptions { seed: s.seed, ..QmleOptions::default() },
    )?;
    Ok(Scenario { grid, returns: path.returns, sigma2: path.sigma2, fit })
}

#[derive(Debug, Serialize)]
pub struct ForecastReport {
    pub u: Vec<f64>,
    pub k: usize,
    pub loglik: f64,
    pub converged: bool,
    /// True conditional variance of the first day after the window.
    pub true_next: Vec<f64>,
    pub forecast_next: Vec<f64>,
    /// Fitted in-sample variance of the last window day.
    pub fitted_last: Vec<f64>,
    pub last_squared: Vec<f64>,
}

/// Fits the model on simulated curves and forecasts the next day's variance curve.
pub fn forecast_report(s: &DemoSettings) -> Result<ForecastReport, Error> {
    let sc = scenario(s)?;
    let next = sc.fit.forecast_next(None)?;
    let n = s.fit_days;
    let last: Vec<f64> = sc.returns.row(n - 1).iter().zip(&sc.fit.model.mean_curve).map(|(y, m)| (y - m).powi(2)).collect();
    Ok(ForecastReport {
        u: sc.grid.points().to_vec(),
        k: sc.fit.model.basis.k(),
        loglik: sc.fit.loglik,
        converged: sc.fit.converged,
        true_next: sc.sigma2.row(n).to_vec(),
        forecast_next: next.curve,
        fitted_last: sc.fit.sigma2.row(n - 1).to_vec(),
        last_squared: last,
    })
}

#[derive(Debug, Serialize)]
pub struct VarReport {
    pub u: Vec<f64>,
    pub zeta: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Demeaned return curve realised on the forecast day.
    pub realized: Vec<f64>,
    pub lower_hits: usize,
    pub upper_hits: usize,
}

/// Lower and upper VaR curves for the first day after the window, with the realised curve.
pub fn var_report(s: &DemoSettings) -> Result<VarReport, Error> {
    let sc = scenario(s)?;
    let next = sc.fit.forecast_next(None)?;
    let sigma: Vec<f64> = next.curve.iter().map(|v| v.sqrt()).collect();
    let date = sc.returns.dates()[s.fit_days].clone();
    let curve = |z: f64, stream: u64| -> Result<Vec<f64>, Error> {
        let q = residual_quantile_curve(&sc.fit.residuals, z, 1000, s.seed.wrapping_add(stream))?;
        Ok(var_forecast(&sigma, &q, z, &date)?.curve)
    };
    let lower = curve(s.zeta, 1)?;
    let upper = curve(1.0 - s.zeta, 2)?;
    let realized: Vec<f64> =
        sc.returns.row(s.fit_days).iter().zip(&sc.fit.model.mean_curve).map(|(y, m)| y - m).collect();
    let lower_hits = realized.iter().zip(&lower).filter(|(r, v)| r < v).count();
    let upper_hits = realized.iter().zip(&upper).filter(|(r, v)| r > v).count();
    Ok(VarReport { u: sc.grid.points().to_vec(), zeta: s.zeta, lower, upper, realized, lower_hits, upper_hits })
}

#[derive(Debug, Serialize)]
pub struct StrategyLine {
    pub label: String,
    pub cumulative: Vec<f64>,
    pub annual_return: f64,
    pub sharpe: f64,
    pub max_drawdown: f64,
    pub trades: usize,
    pub var_exits: usize,
}

#[derive(Debug, Serialize)]
pub struct TradingReport {
    pub days: usize,
    pub lookback: usize,
    pub lines: Vec<StrategyLine>,
}

/// Runs the long intraday rule over the test days with and without the VaR
/// exit. The fitted model is rolled forward with each realised curve.
pub fn trading_report(s: &DemoSettings) -> Result<TradingReport, Error> {
    if s.test_days < 2 {
        return Err(Error::Config("trading needs at least 2 test days".into()));
    }
    let sc = scenario(s)?;
    let model = &sc.fit.model;
    let lookback = 102.min(s.fit_days);
    let n = s.fit_days;
    let close = |row: &[f64]| *row.last().expect("non-empty grid");

    let mut price = 1.0;
    for t in 0..n {
        price *= (close(sc.returns.row(t)) / 100.0).exp();
    }
    let q = residual_quantile_curve(&sc.fit.residuals, s.zeta, 1000, s.seed)?;
    let mut step = sc.fit.forecast_next(None)?;
    let mut days = Vec::with_capacity(s.test_days);
    for t in n..n + s.test_days {
        let y = sc.returns.row(t);
        let demeaned: Vec<f64> = y.iter().zip(&model.mean_curve).map(|(v, m)| v - m).collect();
        let sigma: Vec<f64> = step.curve.iter().map(|v| v.sqrt()).collect();
        let date = sc.returns.dates()[t].clone();
        days.push(TradingDay {
            forecast: functional_mean_forecast(&sc.returns.slice(t - lookback..t), lookback)?,
            prices: y.iter().map(|v| price * (v / 100.0).exp()).collect(),
            var_curve: Some(var_forecast(&sigma, &q, s.zeta, &date)?),
            realized_demeaned: demeaned.clone(),
            date,
        });
        price *= (close(y) / 100.0).exp();
        let squared: Vec<f64> = demeaned.iter().map(|v| v * v).collect();
        step = forecast_one_step(model, &squared, &step.scores, None)?;
    }
    let mut lines = Vec::new();
    for (label, var_enabled) in [("benchmark", false), ("VaR exit", true)] {
        let config = StrategyConfig { side: TradeSide::Long, lookback, var_enabled, zeta: s.zeta, ..StrategyConfig::long() };
        let records = run_strategy(&config, &days)?;
        let r = performance(&records)?;
        lines.push(StrategyLine {
            label: label.into(),
            annual_return: r.annual_return,
            sharpe: r.sharpe,
            max_drawdown: r.max_drawdown,
            trades: records.iter().filter(|x| x.traded).count(),
            var_exits: records.iter().filter(|x| x.exit_reason == ExitReason::VarHit).count(),
            cumulative: r.cumulative,
        });
    }
    Ok(TradingReport { days: s.test_days, lookback, lines })
}

fn parse(settings: &str) -> Result<DemoSettings, String> {
    if settings.trim().is_empty() {
        return Ok(DemoSettings::default());
    }
    serde_json::from_str(settings).map_err(|e| format!("bad settings: {e}"))
}

fn respond<T: Serialize>(settings: &str, op: fn(&DemoSettings) -> Result<T, Error>) -> Result<String, String> {
    let s = parse(settings)?;
    let report = op(&s).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

pub fn forecast_json(settings: &str) -> Result<String, String> {
    respond(settings, forecast_report)
}

pub fn var_json(settings: &str) -> Result<String, String> {
    respond(settings, var_report)
}

pub fn trading_json(settings: &str) -> Result<String, String> {
    respond(settings, trading_report)
}

#[wasm_bindgen]
pub fn forecast(settings: &str) -> Result<String, JsValue> {
    forecast_json(settings).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn var_curves(settings: &str) -> Result<String, JsValue> {
    var_json(settings).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn trading(settings: &str) -> Result<String, JsValue> {
    trading_json(settings).map_err(|e| JsValue::from_str(&e))
}
