//! Intraday min/max trading on forecast return curves, with an optional
//! value-at-risk stop, and strategy performance metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curves::CurveSeries;
use crate::error::{Error, Result};
use crate::risk::VarCurve;

/// Trading days per year (four-day weeks).
pub const TRADING_DAYS_PER_YEAR: f64 = 204.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TradeSide {
    Long,
    Short,
}

impl TradeSide {
    pub fn label(self) -> &'static str {
        match self {
            TradeSide::Long => "LONG",
            TradeSide::Short => "SHORT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub side: TradeSide,
    pub lookback: usize,
    /// Cost per leg as a fraction of notional.
    pub cost_rate: f64,
    pub zeta: f64,
    pub var_enabled: bool,
}

impl StrategyConfig {
    pub fn long() -> Self {
        Self {
            side: TradeSide::Long,
            lookback: 102,
            cost_rate: 0.000003,
            zeta: 0.01,
            var_enabled: true,
        }
    }

    pub fn short() -> Self {
        Self {
            side: TradeSide::Short,
            zeta: 0.99,
            ..Self::long()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::Config("lookback must be at least 1".into()));
        }
        if !(self.cost_rate >= 0.0) {
            return Err(Error::Config("cost rate must be non-negative".into()));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Config("zeta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExitReason {
    Target,
    VarHit,
    Suppressed,
}

impl ExitReason {
    pub fn label(self) -> &'static str {
        match self {
            ExitReason::Target => "TARGET",
            ExitReason::VarHit => "VAR_HIT",
            ExitReason::Suppressed => "SUPPRESSED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// 0-based grid indices.
    Trade { entry: usize, exit: usize },
    Suppress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub date: String,
    pub traded: bool,
    /// 0-based grid indices.
    pub entry_u: Option<usize>,
    pub exit_u: Option<usize>,
    pub exit_reason: ExitReason,
    pub gross_return: f64,
    pub net_return: f64,
}

impl TradeRecord {
    pub fn suppressed(date: &str) -> Self {
        Self {
            date: date.to_string(),
            traded: false,
            entry_u: None,
            exit_u: None,
            exit_reason: ExitReason::Suppressed,
            gross_return: 0.0,
            net_return: 0.0,
        }
    }
}

/// Pointwise mean of the last `lookback` curves.
pub fn functional_mean_forecast(history: &CurveSeries, lookback: usize) -> Result<Vec<f64>> {
    if lookback == 0 || history.len() < lookback {
        return Err(Error::InsufficientData(format!(
            "mean forecast needs {lookback} curves, history has {}",
            history.len()
        )));
    }
    Ok(history.slice(history.len() - lookback..history.len()).mean_curve())
}

fn first_extremum(xs: &[f64], larger: bool) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if (larger && v > xs[best]) || (!larger && v < xs[best]) {
            best = i;
        }
    }
    best
}

/// Trade when the forecast's range is at least its grid mean. LONG buys at the
/// first minimum and sells at the first maximum after it; SHORT mirrors.
pub fn signal(forecast: &[f64], side: TradeSide) -> Decision {
    let j = forecast.len();
    if j < 2 {
        return Decision::Suppress;
    }
    let max = forecast.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = forecast.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = forecast.iter().sum::<f64>() / j as f64;
    if !((max - min).abs() >= mean) {
        return Decision::Suppress;
    }
    let long = side == TradeSide::Long;
    let entry = first_extremum(forecast, !long);
    if entry + 1 >= j {
        return Decision::Suppress;
    }
    let exit = entry + 1 + first_extremum(&forecast[entry + 1..], long);
    Decision::Trade { entry, exit }
}

/// Executes one day. `realized_demeaned` is the realised return curve minus
/// the functional mean, compared against `var_curve` while the position is open.
pub fn execute_day(
    date: &str,
    decision: Decision,
    realized_prices: &[f64],
    var_curve: Option<&VarCurve>,
    realized_demeaned: &[f64],
    side: TradeSide,
    cost_rate: f64,
) -> Result<TradeRecord> {
    let Decision::Trade { entry, exit } = decision else {
        return Ok(TradeRecord::suppressed(date));
    };
    let j = realized_prices.len();
    if entry >= exit || exit >= j {
        return Err(Error::Input(format!("entry {entry} / exit {exit} invalid for a {j}-point grid")));
    }
    if let Some(p) = realized_prices.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Domain(format!("non-positive price {p}")));
    }
    let mut close_at = exit;
    let mut reason = ExitReason::Target;
    if let Some(var) = var_curve {
        if var.curve.len() != j || realized_demeaned.len() != j {
            return Err(Error::Shape("VaR and realised curves must match the price grid".into()));
        }
        for u in entry + 1..=exit {
            let hit = match side {
                TradeSide::Long => realized_demeaned[u] < var.curve[u],
                TradeSide::Short => realized_demeaned[u] > var.curve[u],
            };
            if hit {
                close_at = u;
                reason = ExitReason::VarHit;
                break;
            }
        }
    }
    let (p_in, p_out) = (realized_prices[entry], realized_prices[close_at]);
    let gross_return = match side {
        TradeSide::Long => p_out / p_in - 1.0,
        TradeSide::Short => p_in / p_out - 1.0,
    };
    Ok(TradeRecord {
        date: date.to_string(),
        traded: true,
        entry_u: Some(entry),
        exit_u: Some(close_at),
        exit_reason: reason,
        gross_return,
        net_return: gross_return - 2.0 * cost_rate,
    })
}

/// Inputs for one out-of-sample day.
#[derive(Debug, Clone)]
pub struct TradingDay {
    pub date: String,
    pub forecast: Vec<f64>,
    pub prices: Vec<f64>,
    pub realized_demeaned: Vec<f64>,
    pub var_curve: Option<VarCurve>,
}

pub fn run_strategy(config: &StrategyConfig, days: &[TradingDay]) -> Result<Vec<TradeRecord>> {
    config.validate()?;
    days.iter()
        .map(|d| {
            let var = if config.var_enabled { d.var_curve.as_ref() } else { None };
            execute_day(
                &d.date,
                signal(&d.forecast, config.side),
                &d.prices,
                var,
                &d.realized_demeaned,
                config.side,
                config.cost_rate,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub records: Vec<TradeRecord>,
    pub annual_return: f64,
    pub sharpe: f64,
    /// Set when the return standard deviation is zero and `sharpe` is reported as 0.
    pub sharpe_degenerate: bool,
    pub max_drawdown: f64,
    pub cumulative: Vec<f64>,
}

/// Compounded path, annualised mean return, per-day Sharpe ratio and maximum
/// drawdown (the initial capital of 1 counts as a peak).
pub fn performance(records: &[TradeRecord]) -> Result<StrategyResult> {
    let n = records.len();
    if n == 0 {
        return Err(Error::InsufficientData("no trade records".into()));
    }
    let r: Vec<f64> = records.iter().map(|x| x.net_return).collect();
    let mean = r.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (sharpe, sharpe_degenerate) = if sd > 0.0 { (mean / sd, false) } else { (0.0, true) };
    let mut cumulative = Vec::with_capacity(n);
    let mut c = 1.0;
    let mut peak: f64 = 1.0;
    let mut max_drawdown: f64 = 0.0;
    for v in &r {
        c *= 1.0 + v;
        peak = peak.max(c);
        max_drawdown = max_drawdown.min(c / peak - 1.0);
        cumulative.push(c);
    }
    Ok(StrategyResult {
        records: records.to_vec(),
        annual_return: mean * TRADING_DAYS_PER_YEAR,
        sharpe,
        sharpe_degenerate,
        max_drawdown,
        cumulative,
    })
}

/// Trade log with 1-based grid indices.
pub fn write_trade_log<W: Write>(writer: W, records: &[TradeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "traded", "entry_u", "exit_u", "exit_reason", "gross_return", "net_return"])?;
    let idx = |u: Option<usize>| u.map_or_else(|| "NA".to_string(), |u| (u + 1).to_string());
    for r in records {
        w.write_record([
            r.date.clone(),
            r.traded.to_string(),
            idx(r.entry_u),
            idx(r.exit_u),
            r.exit_reason.label().to_string(),
            r.gross_return.to_string(),
            r.net_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub asset: String,
    pub side: TradeSide,
    pub strategy: String,
    pub result: StrategyResult,
}

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset", "side", "strategy", "annual_return", "sharpe", "max_drawdown"])?;
    for r in rows {
        w.write_record([
            r.asset.clone(),
            r.side.label().to_string(),
            r.strategy.clone(),
            r.result.annual_return.to_string(),
            r.result.sharpe.to_string(),
            r.result.max_drawdown.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{CurveKind, IntradayGrid};
    use crate::fgarch::business_dates;

    fn rec(net: f64) -> TradeRecord {
        TradeRecord {
            net_return: net,
            gross_return: net,
            traded: true,
            ..TradeRecord::suppressed("d")
        }
    }

    #[test]
    fn mean_forecast() {
        let grid = IntradayGrid::uniform(3).unwrap();
        let h = CurveSeries::new(
            grid,
            business_dates(3),
            vec![vec![5.0; 3], vec![0.0; 3], vec![2.0; 3]],
            CurveKind::Ocidr,
        )
        .unwrap();
        assert_eq!(functional_mean_forecast(&h, 2).unwrap(), vec![1.0; 3]);
        assert!(matches!(functional_mean_forecast(&h, 4), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn signal_cases() {
        assert_eq!(signal(&[0.4; 5], TradeSide::Long), Decision::Suppress);
        assert_eq!(signal(&[3.0, 0.0, 3.0], TradeSide::Long), Decision::Trade { entry: 1, exit: 2 });
        assert_eq!(signal(&[3.0, 2.0, 1.0, -4.0], TradeSide::Long), Decision::Suppress);
        assert_eq!(
            signal(&[0.0, 3.0, -1.0, -1.0, 2.0], TradeSide::Short),
            Decision::Trade { entry: 1, exit: 2 }
        );
    }

    #[test]
    fn net_return_hand_example() {
        let r = execute_day("d", Decision::Trade { entry: 0, exit: 1 }, &[1.0, 1.01], None, &[0.0; 2], TradeSide::Long, 0.000003).unwrap();
        assert!((r.net_return - 0.009994).abs() < 1e-12);
        let s = execute_day("d", Decision::Trade { entry: 0, exit: 1 }, &[1.01, 1.0], None, &[0.0; 2], TradeSide::Short, 0.0).unwrap();
        assert!((s.gross_return - 0.01).abs() < 1e-12);
    }

    #[test]
    fn var_stop_fires_at_first_scanned_point() {
        let var = VarCurve {
            zeta: 0.01,
            curve: vec![-1.0; 4],
            date: "d".into(),
        };
        let prices = [1.0, 0.98, 1.02, 1.03];
        let realized = [0.0, -2.0, 0.5, 0.7];
        let d = Decision::Trade { entry: 0, exit: 3 };
        let r = execute_day("d", d, &prices, Some(&var), &realized, TradeSide::Long, 0.0).unwrap();
        assert_eq!(r.exit_reason, ExitReason::VarHit);
        assert_eq!(r.exit_u, Some(1));
        let bench = execute_day("d", d, &prices, None, &realized, TradeSide::Long, 0.0).unwrap();
        let calm = [0.0, -0.5, 0.5, 0.7];
        assert_eq!(execute_day("d", d, &prices, Some(&var), &calm, TradeSide::Long, 0.0).unwrap(), bench);
    }

    #[test]
    fn performance_hand_examples() {
        let p = performance(&[rec(0.1), rec(-0.5)]).unwrap();
        assert!((p.cumulative[1] - 0.55).abs() < 1e-15);
        assert!((p.max_drawdown + 0.5).abs() < 1e-12);
        let up = performance(&[rec(0.01), rec(0.02), rec(0.005)]).unwrap();
        assert_eq!(up.max_drawdown, 0.0);
        let flat = performance(&[TradeRecord::suppressed("a"), TradeRecord::suppressed("b")]).unwrap();
        assert_eq!((flat.annual_return, flat.sharpe, flat.max_drawdown), (0.0, 0.0, 0.0));
        assert!(flat.sharpe_degenerate);
        let first_loss = performance(&[rec(-0.2)]).unwrap();
        assert!((first_loss.max_drawdown + 0.2).abs() < 1e-12);
    }

    #[test]
    fn doubling_cost() {
        let d = Decision::Trade { entry: 0, exit: 2 };
        let p = [1.0, 1.1, 1.05];
        let a = execute_day("d", d, &p, None, &[0.0; 3], TradeSide::Long, 0.0001).unwrap();
        let b = execute_day("d", d, &p, None, &[0.0; 3], TradeSide::Long, 0.0002).unwrap();
        assert!((a.net_return - b.net_return - 0.0002).abs() < 1e-15);
    }

    #[test]
    fn trade_log_uses_one_based_indices() {
        let r = execute_day("2020-01-02", Decision::Trade { entry: 1, exit: 2 }, &[1.0, 1.0, 1.0], None, &[0.0; 3], TradeSide::Long, 0.0).unwrap();
        let mut buf = Vec::new();
        write_trade_log(&mut buf, &[r]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "2020-01-02,true,2,3,TARGET,0,0");
    }
}
