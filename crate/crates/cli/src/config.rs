//! The JSON run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fxcurve::curves::SessionClock;
use fxcurve::fgarch::{BasisFamily, ModelKind, DEFAULT_VARIANCE_FLOOR};
use fxcurve::trading::{StrategyConfig, TradeSide};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    pub quotes_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySettings {
    pub lookback: usize,
    /// Charged once per leg.
    pub cost_rate: f64,
    pub long_zeta: f64,
    pub short_zeta: f64,
}

impl Default for StrategySettings {
    fn default() -> Self {
        let long = StrategyConfig::long();
        let short = StrategyConfig::short();
        Self {
            lookback: long.lookback,
            cost_rate: long.cost_rate,
            long_zeta: long.zeta,
            short_zeta: short.zeta,
        }
    }
}

impl StrategySettings {
    pub fn strategy(&self, side: TradeSide, var_enabled: bool) -> StrategyConfig {
        StrategyConfig {
            side,
            lookback: self.lookback,
            cost_rate: self.cost_rate,
            zeta: match side {
                TradeSide::Long => self.long_zeta,
                TradeSide::Short => self.short_zeta,
            },
            var_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub assets: Vec<AssetSpec>,
    pub grid_j: usize,
    pub session: SessionClock,
    pub max_missing_share: f64,
    pub exclude_dates: Vec<String>,
    pub window: usize,
    pub refit_every: usize,
    pub basis_methods: Vec<BasisFamily>,
    pub model_kinds: Vec<ModelKind>,
    /// Upper bound `L̄` of the eigenvalue-ratio search.
    pub max_basis: usize,
    /// Bartlett bandwidth; `⌊N^{1/3}⌋` when absent.
    pub bandwidth: Option<usize>,
    pub zetas: Vec<f64>,
    pub var_bootstrap: usize,
    pub strategy: StrategySettings,
    pub mcs_alpha: f64,
    pub mcs_bootstrap: usize,
    pub mcs_block: Option<usize>,
    pub backtest_lags: Vec<usize>,
    pub diagnostic_lags: Vec<usize>,
    pub qmle_starts: usize,
    pub qmle_max_iter: usize,
    pub variance_floor: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            assets: Vec::new(),
            grid_j: 288,
            session: SessionClock::default(),
            max_missing_share: 0.05,
            exclude_dates: Vec::new(),
            window: 600,
            refit_every: 5,
            basis_methods: BasisFamily::ALL.to_vec(),
            model_kinds: vec![ModelKind::Fgarch11, ModelKind::Fgarchx],
            max_basis: 3,
            bandwidth: None,
            zetas: vec![0.01, 0.05, 0.95, 0.99],
            var_bootstrap: 1000,
            strategy: StrategySettings::default(),
            mcs_alpha: 0.05,
            mcs_bootstrap: 2000,
            mcs_block: None,
            backtest_lags: vec![1, 5, 10, 20],
            diagnostic_lags: vec![1, 5, 10, 20],
            qmle_starts: 5,
            qmle_max_iter: 500,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative quote paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for a in &mut config.assets {
            if a.quotes_path.is_relative() {
                a.quotes_path = base.join(&a.quotes_path);
            }
        }
        Ok(config)
    }

    /// Every `(basis, model)` pair in configuration order.
    pub fn combos(&self) -> Vec<Combo> {
        self.basis_methods
            .iter()
            .flat_map(|&basis| self.model_kinds.iter().map(move |&kind| Combo { basis, kind }))
            .collect()
    }

    /// The configured quantiles plus the two the trading rule needs, ascending.
    pub fn var_levels(&self) -> Vec<f64> {
        let mut z = self.zetas.clone();
        for extra in [self.strategy.long_zeta, self.strategy.short_zeta] {
            if !z.contains(&extra) {
                z.push(extra);
            }
        }
        z.sort_by(f64::total_cmp);
        z
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::config(m));
        if self.assets.is_empty() {
            return bad("at least one asset is required".into());
        }
        let mut names = BTreeSet::new();
        for a in &self.assets {
            if a.name.is_empty()
                || !a.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return bad(format!("asset name '{}' must be non-empty ASCII letters, digits, '_' or '-'", a.name));
            }
            if !names.insert(a.name.as_str()) {
                return bad(format!("asset name '{}' is repeated", a.name));
            }
        }
        if self.grid_j < 2 {
            return bad("grid_j must be at least 2".into());
        }
        if self.refit_every < 1 {
            return bad("refit_every must be at least 1".into());
        }
        if self.window < 100 {
            return bad("window must be at least 100 days".into());
        }
        if self.basis_methods.is_empty() || self.model_kinds.is_empty() {
            return bad("basis_methods and model_kinds must be non-empty".into());
        }
        if self.basis_methods.contains(&BasisFamily::Mfpca) && self.assets.len() < 2 {
            return bad("MFPCA requires at least 2 assets".into());
        }
        if self.max_basis < 1 {
            return bad("max_basis must be at least 1".into());
        }
        if self.zetas.iter().any(|z| !(*z > 0.0 && *z < 1.0)) {
            return bad("every zeta must lie in (0, 1)".into());
        }
        let s = &self.strategy;
        if !(s.long_zeta > 0.0 && s.long_zeta < 0.5) || !(s.short_zeta > 0.5 && s.short_zeta < 1.0) {
            return bad("strategy zetas must satisfy 0 < long < 0.5 < short < 1".into());
        }
        if s.lookback < 1 || s.lookback > self.window {
            return bad("strategy lookback must lie in [1, window]".into());
        }
        if !(s.cost_rate >= 0.0) {
            return bad("cost_rate must be non-negative".into());
        }
        if !(self.mcs_alpha > 0.0 && self.mcs_alpha < 0.5) {
            return bad("mcs_alpha must lie in (0, 0.5)".into());
        }
        if self.var_bootstrap < fxcurve::risk::MIN_BOOTSTRAP {
            return bad(format!("var_bootstrap must be at least {}", fxcurve::risk::MIN_BOOTSTRAP));
        }
        if self.qmle_starts < 1 {
            return bad("qmle_starts must be at least 1".into());
        }
        if !(self.variance_floor > 0.0) {
            return bad("variance_floor must be positive".into());
        }
        if !(self.max_missing_share >= 0.0 && self.max_missing_share <= 1.0) {
            return bad("max_missing_share must lie in [0, 1]".into());
        }
        if self.backtest_lags.contains(&0) || self.diagnostic_lags.contains(&0) {
            return bad("lags must be positive".into());
        }
        Ok(())
    }
}

/// One `(basis family, model kind)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Combo {
    pub basis: BasisFamily,
    pub kind: ModelKind,
}

impl Combo {
    pub fn id(&self) -> String {
        format!("{}-{}", self.basis.label(), self.kind.label())
    }
}
