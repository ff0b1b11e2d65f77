//! Synthetic multi-asset quote datasets driven by simulated FGARCH(1,1) curves.

use fxcurve::curves::{CurveSeries, IntradayGrid, QuotePanel, SessionClock};
use fxcurve::fgarch::{business_dates, simulate, ErrorModel, ProjectedParams, SimulateOptions};
use fxcurve::stats::mix_seed;
use serde::{Deserialize, Serialize};

use crate::config::{AssetSpec, RunConfig};
use crate::emit::Emitter;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub assets: usize,
    /// Number of return curves per asset; one extra quote day anchors the first close.
    pub days: usize,
    pub grid_j: usize,
    pub clock: SessionClock,
    /// Relative bid-ask spread at zero variance.
    pub spread: f64,
    /// `(d, a, b)` of the first asset; later assets scale `d` up by 25% each.
    pub params: [f64; 3],
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            assets: 3,
            days: 800,
            grid_j: 48,
            clock: SessionClock { start_minute: 8 * 60, step_minutes: 10 },
            spread: 2e-4,
            params: [0.2, 0.3, 0.4],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticAsset {
    pub name: String,
    pub panel: QuotePanel,
    pub returns: CurveSeries,
    pub sigma2: CurveSeries,
}

pub fn asset_name(i: usize) -> String {
    const NAMES: [&str; 3] = ["EURUSD", "GBPUSD", "AUDUSD"];
    NAMES.get(i).map_or_else(|| format!("ASSET{}", i + 1), |s| s.to_string())
}

/// Positive, increasing intraday variance shape with unit norm.
pub fn variance_shape(grid: &IntradayGrid) -> Vec<f64> {
    let raw: Vec<f64> = grid.points().iter().map(|u| 0.25 + u).collect();
    let n = grid.norm(&raw);
    raw.iter().map(|v| v / n).collect()
}

pub fn asset_params(spec: &SyntheticSpec, i: usize) -> ProjectedParams {
    let [d, a, b] = spec.params;
    ProjectedParams::scalar(d * (1.0 + 0.25 * i as f64), a, b)
}

pub fn generate(spec: &SyntheticSpec) -> Result<Vec<SyntheticAsset>, CliError> {
    if spec.assets == 0 || spec.days < 1 {
        return Err(CliError::input("synthetic dataset needs at least one asset and one day"));
    }
    if !(spec.spread >= 0.0) || !spec.spread.is_finite() {
        return Err(CliError::input(format!("spread must be non-negative, got {}", spec.spread)));
    }
    let grid = IntradayGrid::uniform(spec.grid_j)?;
    let shape = variance_shape(&grid);
    let dates = business_dates(spec.days + 1);
    let j = grid.len();
    (0..spec.assets)
        .map(|i| {
            let path = simulate(
                &asset_params(spec, i),
                &grid,
                std::slice::from_ref(&shape),
                &ErrorModel::GaussianOu,
                spec.days,
                mix_seed(spec.seed, i as u64),
                &SimulateOptions::default(),
            )?;
            let mut mid = Vec::with_capacity(spec.days + 1);
            mid.push(vec![1.0 + 0.25 * i as f64; j]);
            for y in path.returns.values() {
                let close = *mid.last().and_then(|r: &Vec<f64>| r.last()).expect("non-empty");
                mid.push(y.iter().map(|v| close * (v / 100.0).exp()).collect());
            }
            let half_spread = |t: usize, u: usize, m: f64| {
                let s2 = if t == 0 { 0.0 } else { path.sigma2.row(t - 1)[u] };
                0.5 * spec.spread * m * (1.0 + s2 / (1.0 + s2))
            };
            let bid = mid
                .iter()
                .enumerate()
                .map(|(t, r)| r.iter().enumerate().map(|(u, m)| m - half_spread(t, u, *m)).collect())
                .collect();
            let ask = mid
                .iter()
                .enumerate()
                .map(|(t, r)| r.iter().enumerate().map(|(u, m)| m + half_spread(t, u, *m)).collect())
                .collect();
            let panel = QuotePanel::new(grid.clone(), dates.clone(), bid, ask, mid)?;
            let returns = CurveSeries::new(grid.clone(), dates[1..].to_vec(), path.returns.values().to_vec(), path.returns.kind())?;
            let sigma2 = CurveSeries::new(grid.clone(), dates[1..].to_vec(), path.sigma2.values().to_vec(), path.sigma2.kind())?;
            Ok(SyntheticAsset { name: asset_name(i), panel, returns, sigma2 })
        })
        .collect()
}

/// Writes `quotes_<ASSET>.csv`, the simulated `returns_<ASSET>.csv` and a
/// `config.json` that runs the full pipeline on them.
pub fn write_dataset(spec: &SyntheticSpec, out: &mut Emitter) -> Result<RunConfig, CliError> {
    let assets = generate(spec)?;
    let mut config = RunConfig {
        grid_j: spec.grid_j,
        session: spec.clock,
        seed: spec.seed,
        ..RunConfig::default()
    };
    if spec.assets < 2 {
        config.basis_methods.retain(|b| *b != fxcurve::fgarch::BasisFamily::Mfpca);
    }
    for a in &assets {
        let quotes = format!("quotes_{}.csv", a.name);
        out.write_with(&quotes, |buf| Ok(a.panel.write_csv(buf, &spec.clock)?))?;
        out.write_with(&format!("returns_{}.csv", a.name), |buf| Ok(a.returns.write_csv(buf)?))?;
        config.assets.push(AssetSpec { name: a.name.clone(), quotes_path: quotes.into() });
    }
    let json = serde_json::to_string_pretty(&config).expect("config serialises");
    out.write_bytes("config.json", format!("{json}\n").as_bytes())?;
    Ok(config)
}
