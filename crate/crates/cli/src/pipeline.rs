//! Rolling-window fit and forecast over several assets and model combinations.

use fxcurve::basis::{dfpca, eigenvalue_ratio, lfpca, mfpca, tfpca, BasisSet};
use fxcurve::curves::{
    build_ocibas, build_ocidr, demean, ingest_quotes, realised_vol, square_series, CurveSeries,
    DailySeries, IngestOptions, IntradayGrid, QuotePanel,
};
use fxcurve::fgarch::{
    forecast_one_step, qmle_fit, BasisFamily, FGarchFit, FitBasis, ModelKind, ModelSpec,
    QmleOptions,
};
use fxcurve::longmem::score_stationarity_check;
use fxcurve::risk::{residual_quantile_curve, var_forecast, VarCurve};
use fxcurve::stats::mix_seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Combo, RunConfig};
use crate::{CliError, StageExt};

/// Curves of one asset on the common date set.
#[derive(Debug, Clone)]
pub struct AssetCurves {
    pub name: String,
    /// Quote days; row `t + 1` is the day of curve row `t`.
    pub panel: QuotePanel,
    pub returns: CurveSeries,
    pub spreads: CurveSeries,
    pub rv: DailySeries,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub asset: String,
    pub quote_days: usize,
    pub dropped_days: Vec<String>,
    /// Days present for this asset but missing for another one.
    pub unaligned_days: Vec<String>,
    pub ignored_rows: usize,
    pub filled_slots: usize,
}

/// Reads and cleans every asset's quotes, keeps the dates all assets share
/// and builds return, spread and realised-variance series.
pub fn prepare(config: &RunConfig) -> Result<(Vec<AssetCurves>, Vec<IngestSummary>), CliError> {
    let grid = IntradayGrid::uniform(config.grid_j).stage("ingest", None)?;
    let options = IngestOptions {
        clock: config.session,
        max_missing_share: config.max_missing_share,
        exclude_dates: config.exclude_dates.clone(),
    };
    let mut outcomes = Vec::new();
    for a in &config.assets {
        let file = std::fs::File::open(&a.quotes_path).map_err(|e| {
            CliError::input(format!("cannot open {}: {e}", a.quotes_path.display())).at("ingest", None)
        })?;
        let got = ingest_quotes(std::io::BufReader::new(file), &grid, &options)
            .map_err(|e| CliError::from(e).at("ingest", None))
            .map_err(|mut e| {
                e.message = format!("{}: {}", a.name, e.message);
                e
            })?;
        outcomes.push(got);
    }
    let panels: Vec<QuotePanel> = outcomes.iter().map(|o| o.panel.clone()).collect();
    let names: Vec<String> = config.assets.iter().map(|a| a.name.clone()).collect();
    let (assets, unaligned) = from_panels(&names, &panels)?;
    let summaries = config
        .assets
        .iter()
        .zip(&outcomes)
        .zip(unaligned)
        .map(|((a, o), unaligned_days)| IngestSummary {
            asset: a.name.clone(),
            quote_days: o.panel.n_days(),
            dropped_days: o.dropped.iter().map(|d| d.date.clone()).collect(),
            unaligned_days,
            ignored_rows: o.ignored_rows,
            filled_slots: o.filled_slots,
        })
        .collect();
    Ok((assets, summaries))
}

/// Restricts the panels to their common dates and builds the curve series.
/// Also returns, per asset, the dates that were removed.
pub fn from_panels(names: &[String], panels: &[QuotePanel]) -> Result<(Vec<AssetCurves>, Vec<Vec<String>>), CliError> {
    let mut common: Vec<String> = panels[0].dates().to_vec();
    for p in &panels[1..] {
        if p.grid() != panels[0].grid() {
            return Err(CliError::input("assets use different grids").at("ingest", None));
        }
        let set: std::collections::BTreeSet<&String> = p.dates().iter().collect();
        common.retain(|d| set.contains(d));
    }
    let keep: std::collections::BTreeSet<&String> = common.iter().collect();
    let mut assets = Vec::new();
    let mut removed = Vec::new();
    for (name, p) in names.iter().zip(panels) {
        let idx: Vec<usize> = (0..p.n_days()).filter(|&t| keep.contains(&p.dates()[t])).collect();
        removed.push(
            (0..p.n_days())
                .filter(|t| !keep.contains(&p.dates()[*t]))
                .map(|t| p.dates()[t].clone())
                .collect(),
        );
        let pick = |m: &[Vec<f64>]| idx.iter().map(|&t| m[t].clone()).collect::<Vec<_>>();
        let panel = QuotePanel::new(p.grid().clone(), common.clone(), pick(p.bid()), pick(p.ask()), pick(p.mid()))
            .stage("ingest", None)?;
        let returns = build_ocidr(&panel).stage("curves", None)?;
        let spreads = build_ocibas(&panel).stage("curves", None)?;
        let rv = realised_vol(&panel).stage("curves", None)?;
        assets.push(AssetCurves { name: name.clone(), panel, returns, spreads, rv });
    }
    Ok((assets, removed))
}

/// Knobs of the rolling fit/forecast loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingSettings {
    pub window: usize,
    pub refit_every: usize,
    pub combos: Vec<Combo>,
    pub max_basis: usize,
    pub bandwidth: Option<usize>,
    pub levels: Vec<f64>,
    pub var_bootstrap: usize,
    pub qmle_starts: usize,
    pub qmle_max_iter: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl RollingSettings {
    pub fn from_config(c: &RunConfig) -> Self {
        Self {
            window: c.window,
            refit_every: c.refit_every,
            combos: c.combos(),
            max_basis: c.max_basis,
            bandwidth: c.bandwidth,
            levels: c.var_levels(),
            var_bootstrap: c.var_bootstrap,
            qmle_starts: c.qmle_starts,
            qmle_max_iter: c.qmle_max_iter,
            variance_floor: c.variance_floor,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub asset: String,
    pub model: String,
    /// First forecast date served by this fit.
    pub forecast_from: String,
    pub window_start: String,
    pub window_end: String,
    pub k: usize,
    pub blocks: Vec<usize>,
    pub lfpca_stationary: Option<bool>,
    pub loglik: f64,
    pub converged: bool,
    pub floor_engagements: usize,
    pub starts_succeeded: usize,
}

#[derive(Debug, Clone)]
pub struct ComboPath {
    pub combo: Combo,
    /// One forecast variance curve per out-of-sample day.
    pub variance: Vec<Vec<f64>>,
    /// `var[level][day]`, levels as in [`RollingSettings::levels`].
    pub var: Vec<Vec<VarCurve>>,
}

#[derive(Debug, Clone)]
pub struct AssetPath {
    pub name: String,
    pub dates: Vec<String>,
    /// Curve index of the first out-of-sample day.
    pub first: usize,
    /// Realised curves minus the mean of the fit in force that day.
    pub demeaned: Vec<Vec<f64>>,
    pub combos: Vec<ComboPath>,
}

#[derive(Debug, Clone)]
pub struct RollingOutput {
    pub assets: Vec<AssetPath>,
    pub fits: Vec<FitSummary>,
}

struct Window {
    demeaned: CurveSeries,
    mean: Vec<f64>,
    squared: CurveSeries,
    spreads: CurveSeries,
}

/// Truncates a basis to the dimension chosen by the eigenvalue ratio.
pub fn select_dimension(b: BasisSet, max_basis: usize) -> Result<BasisSet, fxcurve::Error> {
    if b.k() <= 1 {
        return Ok(b);
    }
    let k = eigenvalue_ratio(&b.eigenvalues, max_basis.min(b.k() - 1))?;
    Ok(b.truncated(k))
}

/// One fitting basis per asset for `family`, built from squared demeaned
/// curves. LFPCA also reports which branch the stationarity check picked.
pub fn family_bases(
    family: BasisFamily,
    squared: &[CurveSeries],
    max_basis: usize,
    bandwidth: Option<usize>,
) -> Result<Vec<(FitBasis, Option<bool>)>, fxcurve::Error> {
    let search = |sq: &CurveSeries| (max_basis + 1).min(sq.j());
    match family {
        BasisFamily::Mfpca => {
            let m = mfpca(squared, max_basis, bandwidth)?;
            m.specific
                .iter()
                .map(|s| Ok((FitBasis::multilevel(&m.common, s)?, None)))
                .collect()
        }
        _ => squared
            .iter()
            .map(|sq| {
                let (b, branch) = match family {
                    BasisFamily::Tfpca => (tfpca(sq, search(sq))?, None),
                    BasisFamily::Dfpca => (dfpca(sq, search(sq), bandwidth)?, None),
                    _ => {
                        let first = tfpca(sq, 1)?;
                        let stationary = score_stationarity_check(sq, &first.functions[0])?.stationary;
                        (lfpca(sq, search(sq), stationary, bandwidth)?, Some(stationary))
                    }
                };
                Ok((FitBasis::from_basis(&select_dimension(b, max_basis)?), branch))
            })
            .collect(),
    }
}

fn combo_code(c: &Combo) -> u64 {
    let b = BasisFamily::ALL.iter().position(|x| *x == c.basis).unwrap_or(0) as u64;
    let k = match c.kind {
        ModelKind::Fgarch11 => 0,
        ModelKind::Fgarchx => 1,
    };
    2 * b + k
}

/// Seed of the fit for asset `asset` and `combo` whose first forecast is curve `t`.
pub fn fit_seed(seed: u64, t: usize, asset: usize, combo: &Combo) -> u64 {
    mix_seed(mix_seed(mix_seed(seed, t as u64), asset as u64), combo_code(combo))
}

struct BlockResult {
    summary: FitSummary,
    variance: Vec<Vec<f64>>,
    var: Vec<Vec<VarCurve>>,
}

/// Fits every `(asset, combo)` on the trailing window and forecasts one step
/// ahead for each day until the next refit.
///
/// The fit serving curve `t` only sees curves `t − window .. t − 1`; between
/// refits the stored fit is rolled forward with the realised curves.
pub fn run_rolling(assets: &[AssetCurves], s: &RollingSettings) -> Result<RollingOutput, CliError> {
    if assets.is_empty() || s.combos.is_empty() {
        return Err(CliError::config("nothing to run: no assets or no model combinations"));
    }
    let n = assets[0].returns.len();
    let dates = assets[0].returns.dates().to_vec();
    if s.window >= n {
        return Err(CliError::config(format!(
            "window {} must be smaller than the {} available curve days",
            s.window, n
        )));
    }
    if s.refit_every < 1 {
        return Err(CliError::config("refit_every must be at least 1"));
    }
    let first = s.window;
    let mut paths: Vec<AssetPath> = assets
        .iter()
        .map(|a| AssetPath {
            name: a.name.clone(),
            dates: dates[first..].to_vec(),
            first,
            demeaned: Vec::with_capacity(n - first),
            combos: s
                .combos
                .iter()
                .map(|&combo| ComboPath { combo, variance: Vec::new(), var: vec![Vec::new(); s.levels.len()] })
                .collect(),
        })
        .collect();
    let mut fits = Vec::new();

    for r in (first..n).step_by(s.refit_every) {
        let end = (r + s.refit_every).min(n);
        let date = dates[r].as_str();
        let windows = assets
            .iter()
            .map(|a| {
                let (demeaned, mean) = demean(&a.returns.slice(r - s.window..r), None)?;
                let squared = square_series(&demeaned)?;
                Ok(Window { demeaned, mean, squared, spreads: a.spreads.slice(r - s.window..r) })
            })
            .collect::<Result<Vec<_>, fxcurve::Error>>()
            .stage("curves", Some(date))?;
        let squared: Vec<CurveSeries> = windows.iter().map(|w| w.squared.clone()).collect();

        let mut families: Vec<BasisFamily> = Vec::new();
        for c in &s.combos {
            if !families.contains(&c.basis) {
                families.push(c.basis);
            }
        }
        let bases = families
            .par_iter()
            .map(|&f| family_bases(f, &squared, s.max_basis, s.bandwidth).map(|b| (f, b)))
            .collect::<Result<Vec<_>, _>>()
            .stage("basis", Some(date))?;

        let tasks: Vec<(usize, usize)> = (0..assets.len())
            .flat_map(|ai| (0..s.combos.len()).map(move |ci| (ai, ci)))
            .collect();
        let results = tasks
            .par_iter()
            .map(|&(ai, ci)| {
                let combo = s.combos[ci];
                let (basis, branch) = &bases.iter().find(|(f, _)| *f == combo.basis).expect("family built").1[ai];
                fit_block(&assets[ai], &windows[ai], ai, combo, basis, *branch, r, end, s)
            })
            .collect::<Vec<_>>();

        for (ai, a) in assets.iter().enumerate() {
            let w = &windows[ai];
            for t in r..end {
                paths[ai].demeaned.push(a.returns.row(t).iter().zip(&w.mean).map(|(y, m)| y - m).collect());
            }
        }
        for ((ai, ci), res) in tasks.into_iter().zip(results) {
            let res = res?;
            let path = &mut paths[ai].combos[ci];
            path.variance.extend(res.variance);
            for (acc, new) in path.var.iter_mut().zip(res.var) {
                acc.extend(new);
            }
            fits.push(res.summary);
        }
    }
    Ok(RollingOutput { assets: paths, fits })
}

#[allow(clippy::too_many_arguments)]
fn fit_block(
    asset: &AssetCurves,
    w: &Window,
    ai: usize,
    combo: Combo,
    basis: &FitBasis,
    branch: Option<bool>,
    r: usize,
    end: usize,
    s: &RollingSettings,
) -> Result<BlockResult, CliError> {
    let dates = asset.returns.dates();
    let date = dates[r].as_str();
    let spec = ModelSpec { kind: combo.kind, basis_method: combo.basis, variance_floor: s.variance_floor };
    let seed = fit_seed(s.seed, r, ai, &combo);
    let options = QmleOptions {
        starts: s.qmle_starts,
        seed,
        max_iter: s.qmle_max_iter,
        ..QmleOptions::default()
    };
    let exog = matches!(combo.kind, ModelKind::Fgarchx).then_some(&w.spreads);
    let fit: FGarchFit = qmle_fit(spec, &w.demeaned, &w.mean, basis, exog, &options)
        .map_err(|e| {
            let mut e = CliError::from(e).at("fit", Some(date));
            e.message = format!("{} {}: {}", asset.name, combo.id(), e.message);
            e
        })?;
    let quantiles = s
        .levels
        .iter()
        .enumerate()
        .map(|(li, &z)| residual_quantile_curve(&fit.residuals, z, s.var_bootstrap, mix_seed(seed, 1 + li as u64)))
        .collect::<Result<Vec<_>, _>>()
        .stage("var", Some(date))?;

    let mut variance = Vec::with_capacity(end - r);
    let mut var = vec![Vec::with_capacity(end - r); s.levels.len()];
    let mut forecast = fit.forecast_next(None).stage("forecast", Some(date))?;
    for t in r..end {
        if t > r {
            let prev: Vec<f64> = asset.returns.row(t - 1).iter().zip(&w.mean).map(|(y, m)| (y - m) * (y - m)).collect();
            let x = exog.map(|_| asset.spreads.row(t - 1));
            forecast = forecast_one_step(&fit.model, &prev, &forecast.scores, x).stage("forecast", Some(&dates[t]))?;
        }
        let sigma: Vec<f64> = forecast.curve.iter().map(|v| v.sqrt()).collect();
        for (li, &z) in s.levels.iter().enumerate() {
            var[li].push(var_forecast(&sigma, &quantiles[li], z, &dates[t]).stage("var", Some(&dates[t]))?);
        }
        variance.push(forecast.curve.clone());
    }
    Ok(BlockResult {
        summary: FitSummary {
            asset: asset.name.clone(),
            model: combo.id(),
            forecast_from: date.to_string(),
            window_start: w.demeaned.dates()[0].clone(),
            window_end: w.demeaned.dates()[w.demeaned.len() - 1].clone(),
            k: fit.model.basis.k(),
            blocks: fit.model.basis.blocks.clone(),
            lfpca_stationary: branch,
            loglik: fit.loglik,
            converged: fit.converged,
            floor_engagements: fit.floor_engagements,
            starts_succeeded: fit.starts_succeeded,
        },
        variance,
        var,
    })
}
