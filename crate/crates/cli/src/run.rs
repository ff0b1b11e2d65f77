//! End-to-end `run`: rolling forecasts, evaluation, VaR backtests, trading and reports.

use fxcurve::basis::tfpca;
use fxcurve::curves::{demean, grid_column_names, square_series, CurveKind, CurveSeries};
use fxcurve::diagnostics::{autocorr_test, hetero_test, write_diagnostics, DiagnosticsReport};
use fxcurve::evalstat::{
    dm_test, loss_interdaily, loss_intraday, mcs, write_dm_table, write_loss_table,
    write_mcs_table, Horizon, LossKind, LossSeries,
};
use fxcurve::longmem::local_whittle;
use fxcurve::risk::{
    backtest_independence, backtest_unbiasedness, violations, write_backtest_table, BacktestRow,
    Side,
};
use fxcurve::stats::mix_seed;
use fxcurve::trading::{
    functional_mean_forecast, performance, run_strategy, write_summary, write_trade_log,
    SummaryRow, TradeSide, TradingDay,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::emit::{Emitter, FileEntry};
use crate::pipeline::{prepare, run_rolling, AssetCurves, AssetPath, FitSummary, IngestSummary, RollingSettings};
use crate::{CliError, StageExt};

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: Option<String>,
    pub date: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub status: &'static str,
    pub failure: Option<Failure>,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// The configuration as run, without the output directory.
    pub config: serde_json::Value,
    pub ingest: Vec<IngestSummary>,
    pub forecast_days: usize,
    pub first_forecast_date: Option<String>,
    pub last_forecast_date: Option<String>,
    pub fits: Vec<FitSummary>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    fn new(config: &RunConfig) -> Self {
        let mut echo = serde_json::to_value(config).expect("config serialises");
        if let Some(obj) = echo.as_object_mut() {
            obj.remove("output_dir");
        }
        Self {
            status: "RUNNING",
            failure: None,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: echo,
            ingest: Vec::new(),
            forecast_days: 0,
            first_forecast_date: None,
            last_forecast_date: None,
            fits: Vec::new(),
            files: Vec::new(),
        }
    }
}

/// Runs the whole pipeline and writes `manifest.json` last. On failure the
/// files written so far stay in place and the manifest is marked `FAILED`.
pub fn run_pipeline(config: &RunConfig, out: &mut Emitter) -> Result<RunManifest, CliError> {
    let mut manifest = RunManifest::new(config);
    let result = stages(config, out, &mut manifest);
    manifest.files = out.files().to_vec();
    match &result {
        Ok(()) => manifest.status = "OK",
        Err(e) => {
            manifest.status = "FAILED";
            manifest.failure = Some(Failure { stage: e.stage.clone(), date: e.date.clone(), message: e.message.clone() });
        }
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    out.write_bytes("manifest.json", format!("{json}\n").as_bytes())?;
    result.map(|()| manifest)
}

fn stages(config: &RunConfig, out: &mut Emitter, manifest: &mut RunManifest) -> Result<(), CliError> {
    config.validate().stage("config", None)?;
    let (assets, ingest) = prepare(config).stage("ingest", None)?;
    manifest.ingest = ingest;

    write_diagnostics_reports(config, &assets, out)?;

    let settings = RollingSettings::from_config(config);
    let rolling = run_rolling(&assets, &settings).stage("fit", None)?;
    manifest.fits = rolling.fits.clone();
    if let Some(p) = rolling.assets.first() {
        manifest.forecast_days = p.dates.len();
        manifest.first_forecast_date = p.dates.first().cloned();
        manifest.last_forecast_date = p.dates.last().cloned();
    }
    write_fits(&rolling.fits, out)?;

    let mut backtests = Vec::new();
    let mut exceedance = Vec::new();
    let mut summaries = Vec::new();
    for (a, path) in assets.iter().zip(&rolling.assets) {
        write_forecasts(config, a, path, out)?;
        evaluate_asset(config, a, path, out)?;
        backtest_asset(config, path, &mut backtests, &mut exceedance)?;
        trade_asset(config, a, path, out, &mut summaries)?;
    }
    out.write_with("reports/backtest.csv", |b| Ok(write_backtest_table(b, &backtests)?))?;
    out.write_with("reports/var_exceedance.csv", |b| render_rows(b, &["asset", "model", "zeta", "side", "exceedance_rate"], &exceedance))?;
    out.write_with("reports/trading_summary.csv", |b| Ok(write_summary(b, &summaries)?))?;
    Ok(())
}

fn render_rows(buf: &mut Vec<u8>, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    buf.extend_from_slice(text.as_bytes());
    Ok(())
}

fn write_diagnostics_reports(config: &RunConfig, assets: &[AssetCurves], out: &mut Emitter) -> Result<(), CliError> {
    let mut reports: Vec<(String, DiagnosticsReport)> = Vec::new();
    let mut memory = Vec::new();
    for a in assets {
        let n = a.returns.len();
        let lags: Vec<usize> = config.diagnostic_lags.iter().copied().filter(|&h| n > h + 10).collect();
        if !lags.is_empty() {
            reports.push((a.name.clone(), autocorr_test(&a.returns, &lags).stage("diagnostics", None)?));
            reports.push((a.name.clone(), hetero_test(&a.returns, &lags).stage("diagnostics", None)?));
        }
        let (dm, _) = demean(&a.returns, None).stage("diagnostics", None)?;
        let transforms: [(&str, fn(f64) -> f64); 3] = [("x", |v| v), ("x2", |v| v * v), ("abs_x", f64::abs)];
        for (label, f) in transforms {
            let rows = dm.values().iter().map(|r| r.iter().map(|v| f(*v)).collect()).collect();
            let series = CurveSeries::new(dm.grid().clone(), dm.dates().to_vec(), rows, CurveKind::Generic)
                .stage("diagnostics", None)?;
            let cell = tfpca(&series, 1).and_then(|b| {
                let scores: Vec<f64> = series.values().iter().map(|y| series.grid().inner(y, &b.functions[0])).collect();
                local_whittle(&scores, None)
            });
            let (a_hat, m) = match cell {
                Ok(e) => (e.a_hat.to_string(), e.bandwidth_m.to_string()),
                Err(_) => ("NA".into(), "NA".into()),
            };
            memory.push(vec![a.name.clone(), label.to_string(), a_hat, m]);
        }
    }
    out.write_with("reports/diagnostics.csv", |b| Ok(write_diagnostics(b, &reports)?))?;
    out.write_with("reports/memory.csv", |b| render_rows(b, &["series", "transform", "a_hat", "bandwidth_m"], &memory))
}

fn write_fits(fits: &[FitSummary], out: &mut Emitter) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = fits
        .iter()
        .map(|f| {
            vec![
                f.asset.clone(),
                f.model.clone(),
                f.forecast_from.clone(),
                f.window_start.clone(),
                f.window_end.clone(),
                f.k.to_string(),
                f.lfpca_stationary.map_or_else(|| "NA".into(), |b| b.to_string()),
                f.loglik.to_string(),
                f.converged.to_string(),
                f.floor_engagements.to_string(),
            ]
        })
        .collect();
    out.write_with("reports/fits.csv", |b| {
        render_rows(
            b,
            &["asset", "model", "forecast_from", "window_start", "window_end", "k", "lfpca_stationary", "loglik", "converged", "floor_engagements"],
            &rows,
        )
    })
}

fn series(path: &AssetPath, rows: Vec<Vec<f64>>, kind: CurveKind, grid: &fxcurve::curves::IntradayGrid) -> Result<CurveSeries, CliError> {
    CurveSeries::new(grid.clone(), path.dates.clone(), rows, kind).stage("evaluate", None)
}

fn oos_rv(a: &AssetCurves, path: &AssetPath) -> Vec<f64> {
    a.rv.values[path.first..].to_vec()
}

fn write_forecasts(config: &RunConfig, a: &AssetCurves, path: &AssetPath, out: &mut Emitter) -> Result<(), CliError> {
    let grid = a.returns.grid();
    let rv = oos_rv(a, path);
    let mut header = vec!["date".to_string(), "rv".to_string()];
    header.extend(path.combos.iter().map(|c| c.combo.id()));
    let rows: Vec<Vec<String>> = (0..path.dates.len())
        .map(|t| {
            let mut r = vec![path.dates[t].clone(), rv[t].to_string()];
            r.extend(path.combos.iter().map(|c| c.variance[t].last().expect("grid").to_string()));
            r
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_with(&format!("plots/{}/interdaily.csv", a.name), |b| render_rows(b, &header_ref, &rows))?;
    for c in &path.combos {
        let s = series(path, c.variance.clone(), CurveKind::Variance, grid)?;
        out.write_with(&format!("plots/{}/variance_{}.csv", a.name, c.combo.id()), |b| Ok(s.write_csv(b)?))?;
        let levels = config.var_levels();
        let mut var_header = vec!["date".to_string(), "zeta".to_string()];
        var_header.extend(grid_column_names(grid.len()));
        let var_ref: Vec<&str> = var_header.iter().map(String::as_str).collect();
        let var_rows: Vec<Vec<String>> = (0..path.dates.len())
            .flat_map(|t| {
                levels.iter().enumerate().map(move |(li, z)| {
                    let mut r = vec![path.dates[t].clone(), z.to_string()];
                    r.extend(c.var[li][t].curve.iter().map(|v| v.to_string()));
                    r
                })
            })
            .collect();
        out.write_with(&format!("plots/{}/var_{}.csv", a.name, c.combo.id()), |b| render_rows(b, &var_ref, &var_rows))?;
    }
    Ok(())
}

fn evaluate_asset(config: &RunConfig, a: &AssetCurves, path: &AssetPath, out: &mut Emitter) -> Result<(), CliError> {
    let grid = a.returns.grid();
    let demeaned = series(path, path.demeaned.clone(), CurveKind::Generic, grid)?;
    let proxy = square_series(&demeaned).stage("evaluate", None)?;
    let rv = oos_rv(a, path);
    let mut all = Vec::new();
    for horizon in [Horizon::Intraday, Horizon::Interdaily] {
        for kind in [LossKind::Msfe, LossKind::Qlike] {
            let losses = path
                .combos
                .iter()
                .map(|c| {
                    let l = match horizon {
                        Horizon::Intraday => loss_intraday(&proxy, &series(path, c.variance.clone(), CurveKind::Variance, grid)?, kind),
                        Horizon::Interdaily => {
                            let closing: Vec<f64> = c.variance.iter().map(|v| *v.last().expect("grid")).collect();
                            loss_interdaily(&rv, &closing, kind)
                        }
                    };
                    Ok(l.stage("evaluate", None)?.with_model(&c.combo.id()))
                })
                .collect::<Result<Vec<LossSeries>, CliError>>()?;
            let mut dm_rows = Vec::new();
            for i in 0..losses.len() {
                for j in i + 1..losses.len() {
                    dm_rows.push((losses[i].model_id.clone(), losses[j].model_id.clone(), dm_test(&losses[i], &losses[j], None).ok()));
                }
            }
            let tag = format!("{}_{}", horizon.label().to_lowercase(), kind.label().to_lowercase());
            out.write_with(&format!("reports/{}/dm_{tag}.csv", a.name), |b| Ok(write_dm_table(b, &dm_rows)?))?;
            if losses.len() >= 2 {
                let seed = mix_seed(config.seed, 0x4D43_5300 + all.len() as u64);
                let res = mcs(&losses, config.mcs_alpha, config.mcs_bootstrap, config.mcs_block, seed).stage("evaluate", None)?;
                out.write_with(&format!("reports/{}/mcs_{tag}.csv", a.name), |b| Ok(write_mcs_table(b, &[res])?))?;
            }
            all.extend(losses);
        }
    }
    out.write_with(&format!("reports/{}/losses.csv", a.name), |b| Ok(write_loss_table(b, &all)?))
}

fn backtest_asset(
    config: &RunConfig,
    path: &AssetPath,
    rows: &mut Vec<BacktestRow>,
    exceedance: &mut Vec<Vec<String>>,
) -> Result<(), CliError> {
    let levels = config.var_levels();
    let j = path.demeaned.first().map_or(0, Vec::len);
    let grid = fxcurve::curves::IntradayGrid::uniform(j).stage("backtest", None)?;
    let demeaned = series(path, path.demeaned.clone(), CurveKind::Generic, &grid)?;
    let t = path.dates.len();
    for c in &path.combos {
        for (li, &zeta) in levels.iter().enumerate() {
            if !config.zetas.contains(&zeta) {
                continue;
            }
            let side = if zeta < 0.5 { Side::Lower } else { Side::Upper };
            let v = violations(&demeaned, &c.var[li], side).stage("backtest", None)?;
            exceedance.push(vec![
                path.name.clone(),
                c.combo.id(),
                zeta.to_string(),
                format!("{side:?}").to_uppercase(),
                v.overall_rate().to_string(),
            ]);
            let row = |test: &str, lag: Option<usize>, pvalue: Option<f64>| BacktestRow {
                asset: path.name.clone(),
                model: c.combo.id(),
                zeta,
                test: test.to_string(),
                lag,
                pvalue,
            };
            rows.push(row("UNBIASEDNESS", None, backtest_unbiasedness(&v).ok().map(|o| o.pvalue)));
            for &h in &config.backtest_lags {
                let p = if t > h + 10 {
                    backtest_independence(&v, &[h]).ok().map(|r| r[0].1.pvalue)
                } else {
                    None
                };
                rows.push(row("INDEPENDENCE", Some(h), p));
            }
        }
    }
    Ok(())
}

fn trade_asset(
    config: &RunConfig,
    a: &AssetCurves,
    path: &AssetPath,
    out: &mut Emitter,
    summaries: &mut Vec<SummaryRow>,
) -> Result<(), CliError> {
    let levels = config.var_levels();
    let lookback = config.strategy.lookback;
    let base: Vec<TradingDay> = (0..path.dates.len())
        .map(|i| {
            let t = path.first + i;
            Ok(TradingDay {
                date: path.dates[i].clone(),
                forecast: functional_mean_forecast(&a.returns.slice(t - lookback..t), lookback)?,
                prices: a.panel.mid()[t + 1].clone(),
                realized_demeaned: path.demeaned[i].clone(),
                var_curve: None,
            })
        })
        .collect::<Result<Vec<_>, fxcurve::Error>>()
        .stage("trade", None)?;
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    for side in [TradeSide::Long, TradeSide::Short] {
        let mut run = |strategy: String, days: &[TradingDay], var_enabled: bool| -> Result<(), CliError> {
            let records = run_strategy(&config.strategy.strategy(side, var_enabled), days).stage("trade", None)?;
            let result = performance(&records).stage("trade", None)?;
            out.write_with(&format!("reports/{}/trades/{}_{}.csv", a.name, side.label(), strategy), |b| {
                Ok(write_trade_log(b, &records)?)
            })?;
            curves.push((format!("{}_{}", side.label(), strategy), result.cumulative.clone()));
            summaries.push(SummaryRow { asset: a.name.clone(), side, strategy, result });
            Ok(())
        };
        run("BENCHMARK".into(), &base, false)?;
        let zeta = config.strategy.strategy(side, true).zeta;
        let li = levels.iter().position(|z| *z == zeta).expect("trading quantile included");
        for c in &path.combos {
            let days: Vec<TradingDay> = base
                .iter()
                .zip(&c.var[li])
                .map(|(d, v)| TradingDay { var_curve: Some(v.clone()), ..d.clone() })
                .collect();
            run(c.combo.id(), &days, true)?;
        }
    }
    let mut header = vec!["date"];
    header.extend(curves.iter().map(|(n, _)| n.as_str()));
    let rows: Vec<Vec<String>> = (0..path.dates.len())
        .map(|t| {
            let mut r = vec![path.dates[t].clone()];
            r.extend(curves.iter().map(|(_, c)| c[t].to_string()));
            r
        })
        .collect();
    out.write_with(&format!("plots/{}/cumulative.csv", a.name), |b| render_rows(b, &header, &rows))
}
