//! Command-line interface: argument parsing and the individual subcommands.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fxcurve::curves::{
    build_ocibas, build_ocidr, demean, grid_column_names, ingest_quotes, realised_vol,
    square_series, CurveKind, CurveSeries, IngestOptions, IntradayGrid,
};
use fxcurve::evalstat::{
    dm_test, loss_interdaily, loss_intraday, mcs, write_dm_table, write_loss_table,
    write_mcs_table, Horizon, LossKind, LossSeries,
};
use fxcurve::fgarch::{
    forecast_one_step, qmle_fit, variance_recursion, BasisFamily, FitDocument, ModelKind,
    ModelSpec, QmleOptions,
};
use fxcurve::risk::{
    backtest_independence, backtest_unbiasedness, residual_quantile_curve, var_forecast,
    violations, write_backtest_table, BacktestRow, Side, VarCurve,
};
use fxcurve::trading::{
    functional_mean_forecast, performance, run_strategy, write_summary, write_trade_log,
    SummaryRow, TradeSide, TradingDay,
};

use crate::config::RunConfig;
use crate::dataset::{write_dataset, SyntheticSpec};
use crate::emit::Emitter;
use crate::pipeline::family_bases;
use crate::run::run_pipeline;
use crate::{CliError, StageExt};

#[derive(Debug, Parser)]
#[command(name = "fxcurve", version, about = "Functional GARCH volatility curves for intraday FX quotes")]
pub struct Cli {
    /// JSON run configuration; its settings are the defaults of every subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a quote CSV onto the intraday grid.
    Ingest(QuotesArgs),
    /// Build OCIDR, OCIBAS, demeaned, squared and realised-variance series.
    Curves(QuotesArgs),
    /// Build a basis from squared curve CSVs.
    Basis(BasisArgs),
    /// Fit an FGARCH model to return curves.
    Fit(FitArgs),
    /// One-step-ahead variance curves from a fitted model.
    Forecast(ForecastArgs),
    /// Losses, Diebold-Mariano tests and the model confidence set.
    Evaluate(EvaluateArgs),
    /// Intraday VaR curves from residuals and variance forecasts.
    Var(VarArgs),
    /// Unbiasedness and independence backtests of VaR curves.
    Backtest(BacktestArgs),
    /// Run the intraday trading rule.
    Trade(TradeArgs),
    /// End-to-end rolling pipeline driven by the configuration.
    Run,
    /// Write a synthetic multi-asset quote dataset and a matching config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct QuotesArgs {
    /// Quote CSV with header date,time,bid,ask[,mid].
    #[arg(long)]
    pub quotes: PathBuf,
    /// Grid points per day; defaults to the configured grid_j.
    #[arg(long)]
    pub grid_j: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Tfpca,
    Dfpca,
    Lfpca,
    Mfpca,
}

impl From<Family> for BasisFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Tfpca => BasisFamily::Tfpca,
            Family::Dfpca => BasisFamily::Dfpca,
            Family::Lfpca => BasisFamily::Lfpca,
            Family::Mfpca => BasisFamily::Mfpca,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Fgarch11,
    Fgarchx,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Fgarch11 => ModelKind::Fgarch11,
            Model::Fgarchx => ModelKind::Fgarchx,
        }
    }
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Squared-curve CSVs; MFPCA needs two or more with identical dates.
    #[arg(long, required = true, num_args = 1..)]
    pub curves: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Family,
    /// Upper bound of the eigenvalue-ratio search; defaults to max_basis.
    #[arg(long)]
    pub max_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// OCIDR curve CSVs (demeaned internally), one fit per file.
    #[arg(long, required = true, num_args = 1..)]
    pub returns: Vec<PathBuf>,
    /// OCIBAS curve CSVs for FGARCHX, in the same order as --returns.
    #[arg(long, num_args = 1..)]
    pub exog: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Family,
    #[arg(long, value_enum, default_value = "fgarch11")]
    pub model: Model,
    #[arg(long)]
    pub max_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Fit document written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// OCIDR curves to filter through the model.
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub exog: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Squared demeaned curves used as the intraday proxy.
    #[arg(long)]
    pub proxy: PathBuf,
    /// Variance forecasts as NAME=PATH, repeatable.
    #[arg(long = "forecast", required = true, num_args = 1..)]
    pub forecasts: Vec<String>,
    /// Realised-variance CSV (date,rv) for the inter-daily losses.
    #[arg(long)]
    pub rv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarArgs {
    #[arg(long)]
    pub residuals: PathBuf,
    /// Variance forecast curves.
    #[arg(long)]
    pub variance: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub zeta: Vec<f64>,
    /// Bootstrap size; defaults to the configured var_bootstrap.
    #[arg(long)]
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Demeaned return curves.
    #[arg(long)]
    pub returns: PathBuf,
    /// VaR CSV written by `var`.
    #[arg(long)]
    pub var: PathBuf,
    #[arg(long, default_value = "ASSET")]
    pub asset: String,
    #[arg(long, default_value = "MODEL")]
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Long,
    Short,
}

#[derive(Debug, Args)]
pub struct TradeArgs {
    #[arg(long)]
    pub quotes: PathBuf,
    #[arg(long, value_enum)]
    pub side: SideArg,
    /// VaR CSV; enables the VaR exit when given.
    #[arg(long)]
    pub var: Option<PathBuf>,
    /// Mean curve subtracted from realised returns before the VaR comparison.
    #[arg(long)]
    pub mean: Option<PathBuf>,
    #[arg(long)]
    pub grid_j: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 3)]
    pub assets: usize,
    #[arg(long, default_value_t = 800)]
    pub days: usize,
    #[arg(long, default_value_t = 48)]
    pub grid_j: usize,
    /// Relative bid-ask spread.
    #[arg(long, default_value_t = 2e-4, allow_negative_numbers = true)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.2)]
    pub d: f64,
    #[arg(long, default_value_t = 0.3)]
    pub a: f64,
    #[arg(long, default_value_t = 0.4)]
    pub b: f64,
}

/// Resolved global settings.
pub struct Context {
    pub config: RunConfig,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        if let Some(d) = &cli.output_dir {
            config.output_dir = d.clone();
        }
        Ok(Self { config })
    }

    fn emitter(&self) -> Result<Emitter, CliError> {
        Emitter::new(&self.config.output_dir)
    }

    fn grid(&self, j: Option<usize>) -> Result<IntradayGrid, CliError> {
        Ok(IntradayGrid::uniform(j.unwrap_or(self.config.grid_j))?)
    }

    fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            clock: self.config.session,
            max_missing_share: self.config.max_missing_share,
            exclude_dates: self.config.exclude_dates.clone(),
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::from_cli(&cli)?;
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, &a),
        Command::Curves(a) => curves(&ctx, &a),
        Command::Basis(a) => basis(&ctx, &a),
        Command::Fit(a) => fit(&ctx, &a),
        Command::Forecast(a) => forecast(&ctx, &a),
        Command::Evaluate(a) => evaluate(&ctx, &a),
        Command::Var(a) => var(&ctx, &a),
        Command::Backtest(a) => backtest(&ctx, &a),
        Command::Trade(a) => trade(&ctx, &a),
        Command::Run => {
            let mut out = ctx.emitter()?;
            run_pipeline(&ctx.config, &mut out).map(|_| ())
        }
        Command::Simulate(a) => {
            let spec = SyntheticSpec {
                assets: a.assets,
                days: a.days,
                grid_j: a.grid_j,
                spread: a.spread,
                params: [a.d, a.a, a.b],
                seed: ctx.config.seed,
                ..SyntheticSpec::default()
            };
            let mut out = ctx.emitter()?;
            write_dataset(&spec, &mut out).map(|_| ())
        }
    }
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, CliError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))
}

fn read_curves(path: &Path, kind: CurveKind) -> Result<CurveSeries, CliError> {
    CurveSeries::read_csv(open(path)?, kind).map_err(|e| {
        let mut e = CliError::from(e);
        e.message = format!("{}: {}", path.display(), e.message);
        e
    })
}

fn ingest_file(ctx: &Context, a: &QuotesArgs) -> Result<fxcurve::curves::IngestOutcome, CliError> {
    let grid = ctx.grid(a.grid_j)?;
    ingest_quotes(open(&a.quotes)?, &grid, &ctx.ingest_options()).stage("ingest", None)
}

fn write_dropped(out: &mut Emitter, got: &fxcurve::curves::IngestOutcome) -> Result<(), CliError> {
    let mut text = String::from("date,missing_share\n");
    for d in &got.dropped {
        text.push_str(&format!("{},{}\n", d.date, d.missing_share));
    }
    out.write_bytes("dropped_days.csv", text.as_bytes())
}

fn ingest(ctx: &Context, a: &QuotesArgs) -> Result<(), CliError> {
    let got = ingest_file(ctx, a)?;
    let mut out = ctx.emitter()?;
    out.write_with("quotes_clean.csv", |b| Ok(got.panel.write_csv(b, &ctx.config.session)?))?;
    write_dropped(&mut out, &got)
}

fn curves(ctx: &Context, a: &QuotesArgs) -> Result<(), CliError> {
    let got = ingest_file(ctx, a)?;
    let mut out = ctx.emitter()?;
    write_dropped(&mut out, &got)?;
    let y = build_ocidr(&got.panel).stage("curves", None)?;
    let x = build_ocibas(&got.panel).stage("curves", None)?;
    let (dm, mean) = demean(&y, None).stage("curves", None)?;
    let sq = square_series(&dm).stage("curves", None)?;
    let rv = realised_vol(&got.panel).stage("curves", None)?;
    let mean_series = CurveSeries::new(y.grid().clone(), vec!["MEAN".into()], vec![mean], CurveKind::Generic)?;
    out.write_with("ocidr.csv", |b| Ok(y.write_csv(b)?))?;
    out.write_with("ocibas.csv", |b| Ok(x.write_csv(b)?))?;
    out.write_with("demeaned.csv", |b| Ok(dm.write_csv(b)?))?;
    out.write_with("squared.csv", |b| Ok(sq.write_csv(b)?))?;
    out.write_with("mean.csv", |b| Ok(mean_series.write_csv(b)?))?;
    let mut text = String::from("date,rv\n");
    for (d, v) in rv.dates.iter().zip(&rv.values) {
        text.push_str(&format!("{d},{v}\n"));
    }
    out.write_bytes("rv.csv", text.as_bytes())
}

fn basis(ctx: &Context, a: &BasisArgs) -> Result<(), CliError> {
    let squared = a
        .curves
        .iter()
        .map(|p| read_curves(p, CurveKind::Squared))
        .collect::<Result<Vec<_>, _>>()?;
    let family: BasisFamily = a.method.into();
    if family != BasisFamily::Mfpca && squared.len() != 1 {
        return Err(CliError::input("only MFPCA takes more than one curve file"));
    }
    let max_k = a.max_k.unwrap_or(ctx.config.max_basis);
    let mut out = ctx.emitter()?;
    if family == BasisFamily::Mfpca {
        let m = fxcurve::basis::mfpca(&squared, max_k, ctx.config.bandwidth).stage("basis", None)?;
        out.write_with("basis_common.csv", |b| Ok(m.common.write_csv(b)?))?;
        for (i, s) in m.specific.iter().enumerate() {
            out.write_with(&format!("basis_specific_{}.csv", i + 1), |b| Ok(s.write_csv(b)?))?;
        }
        return Ok(());
    }
    let search = (max_k + 1).min(squared[0].j());
    let b = match family {
        BasisFamily::Tfpca => fxcurve::basis::tfpca(&squared[0], search),
        BasisFamily::Dfpca => fxcurve::basis::dfpca(&squared[0], search, ctx.config.bandwidth),
        _ => {
            let first = fxcurve::basis::tfpca(&squared[0], 1).stage("basis", None)?;
            let check = fxcurve::longmem::score_stationarity_check(&squared[0], &first.functions[0])
                .stage("basis", None)?;
            fxcurve::basis::lfpca(&squared[0], search, check.stationary, ctx.config.bandwidth)
        }
    }
    .and_then(|b| crate::pipeline::select_dimension(b, max_k))
    .stage("basis", None)?;
    out.write_with("basis.csv", |buf| Ok(b.write_csv(buf)?))
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned())
}

fn fit(ctx: &Context, a: &FitArgs) -> Result<(), CliError> {
    let family: BasisFamily = a.method.into();
    let kind: ModelKind = a.model.into();
    let returns = a
        .returns
        .iter()
        .map(|p| read_curves(p, CurveKind::Ocidr))
        .collect::<Result<Vec<_>, _>>()?;
    let exog = a
        .exog
        .iter()
        .map(|p| read_curves(p, CurveKind::Ocibas))
        .collect::<Result<Vec<_>, _>>()?;
    match kind {
        ModelKind::Fgarchx if exog.len() != returns.len() => {
            return Err(CliError::input("FGARCHX needs one --exog file per --returns file"))
        }
        ModelKind::Fgarch11 if !exog.is_empty() => {
            return Err(CliError::input("--exog is only used with --model fgarchx"))
        }
        _ => {}
    }
    let mut demeaned = Vec::new();
    let mut squared = Vec::new();
    for y in &returns {
        let (dm, mean) = demean(y, None).stage("fit", None)?;
        squared.push(square_series(&dm).stage("fit", None)?);
        demeaned.push((dm, mean));
    }
    let max_k = a.max_k.unwrap_or(ctx.config.max_basis);
    let bases = family_bases(family, &squared, max_k, ctx.config.bandwidth).stage("basis", None)?;
    let mut out = ctx.emitter()?;
    for (i, ((dm, mean), (basis, _))) in demeaned.iter().zip(&bases).enumerate() {
        let options = QmleOptions {
            starts: ctx.config.qmle_starts,
            seed: fxcurve::stats::mix_seed(ctx.config.seed, i as u64),
            max_iter: ctx.config.qmle_max_iter,
            ..QmleOptions::default()
        };
        let spec = ModelSpec { kind, basis_method: family, variance_floor: ctx.config.variance_floor };
        let fit = qmle_fit(spec, dm, mean, basis, exog.get(i), &options).stage("fit", None)?;
        let name = stem(&a.returns[i]);
        let json = fit.document().to_json()?;
        out.write_bytes(&format!("fit_{name}.json"), format!("{json}\n").as_bytes())?;
        out.write_with(&format!("sigma2_{name}.csv"), |b| Ok(fit.sigma2.write_csv(b)?))?;
        out.write_with(&format!("residuals_{name}.csv"), |b| Ok(fit.residuals.write_csv(b)?))?;
    }
    Ok(())
}

fn forecast(ctx: &Context, a: &ForecastArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.fit)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", a.fit.display())))?;
    let doc = FitDocument::from_json(&text)?;
    let model = &doc.model;
    let y = read_curves(&a.returns, CurveKind::Ocidr)?;
    let x = a.exog.as_deref().map(|p| read_curves(p, CurveKind::Ocibas)).transpose()?;
    if model.params.g.is_some() != x.is_some() {
        return Err(CliError::input("--exog must be given exactly when the fit is FGARCHX"));
    }
    let (dm, _) = demean(&y, Some(&model.mean_curve)).stage("forecast", None)?;
    let sq = square_series(&dm).stage("forecast", None)?;
    let s_scores = sq
        .values()
        .iter()
        .map(|r| model.basis.project(r))
        .collect::<Result<Vec<_>, _>>()?;
    let x_scores = x
        .as_ref()
        .map(|x| x.values().iter().map(|r| model.basis.project(r)).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let filtered = variance_recursion(&model.params, &model.basis, &s_scores, x_scores.as_deref(), &model.init, model.spec.variance_floor)
        .stage("forecast", None)?;
    let n = y.len();
    let next = forecast_one_step(model, sq.row(n - 1), &filtered.scores[n - 1], x.as_ref().map(|x| x.row(n - 1)))
        .stage("forecast", None)?;
    let mut dates = y.dates().to_vec();
    dates.push("NEXT".into());
    let mut rows = filtered.curves;
    rows.push(next.curve);
    let out_series = CurveSeries::new(y.grid().clone(), dates, rows, CurveKind::Variance)?;
    ctx.emitter()?.write_with("forecast.csv", |b| Ok(out_series.write_csv(b)?))
}

/// Rows of `s` whose dates appear in `dates`, in `dates` order.
fn align(s: &CurveSeries, dates: &[String]) -> Result<CurveSeries, CliError> {
    let rows = dates
        .iter()
        .map(|d| {
            let t = s.dates().iter().position(|x| x == d).expect("date in intersection");
            s.row(t).to_vec()
        })
        .collect();
    Ok(CurveSeries::new(s.grid().clone(), dates.to_vec(), rows, s.kind())?)
}

fn read_daily(path: &Path, column: &str) -> Result<Vec<(String, f64)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != format!("date,{column}") {
        return Err(CliError::input(format!("{}: header must be date,{column}", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (d, v) = l.split_once(',').ok_or_else(|| CliError::input(format!("{}: line {} malformed", path.display(), i + 2)))?;
            let v: f64 = v.trim().parse().map_err(|_| CliError::input(format!("{}: line {} is not a number", path.display(), i + 2)))?;
            Ok((d.trim().to_string(), v))
        })
        .collect()
}

fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<(), CliError> {
    let proxy = read_curves(&a.proxy, CurveKind::Squared)?;
    let mut forecasts = Vec::new();
    for spec in &a.forecasts {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("--forecast expects NAME=PATH, got '{spec}'")))?;
        forecasts.push((name.to_string(), read_curves(Path::new(path), CurveKind::Variance)?));
    }
    let rv = a.rv.as_deref().map(|p| read_daily(p, "rv")).transpose()?;
    let mut common: Vec<String> = proxy.dates().to_vec();
    for (_, f) in &forecasts {
        let set: BTreeSet<&String> = f.dates().iter().collect();
        common.retain(|d| set.contains(d));
    }
    if let Some(rv) = &rv {
        let set: BTreeSet<&String> = rv.iter().map(|(d, _)| d).collect();
        common.retain(|d| set.contains(d));
    }
    if common.is_empty() {
        return Err(CliError::input("proxy, forecasts and rv share no dates"));
    }
    let proxy = align(&proxy, &common)?;
    let forecasts = forecasts
        .into_iter()
        .map(|(n, f)| Ok((n, align(&f, &common)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let rv_values: Option<Vec<f64>> = rv.map(|rv| {
        common.iter().map(|d| rv.iter().find(|(x, _)| x == d).expect("aligned").1).collect()
    });

    let mut out = ctx.emitter()?;
    let mut all = Vec::new();
    let mut mcs_rows = Vec::new();
    for horizon in [Horizon::Intraday, Horizon::Interdaily] {
        if horizon == Horizon::Interdaily && rv_values.is_none() {
            continue;
        }
        for kind in [LossKind::Msfe, LossKind::Qlike] {
            let losses = forecasts
                .iter()
                .map(|(name, f)| {
                    let l = match horizon {
                        Horizon::Intraday => loss_intraday(&proxy, f, kind),
                        Horizon::Interdaily => {
                            let closing: Vec<f64> = f.values().iter().map(|r| *r.last().expect("grid")).collect();
                            loss_interdaily(rv_values.as_deref().expect("checked"), &closing, kind)
                        }
                    };
                    Ok(l.stage("evaluate", None)?.with_model(name))
                })
                .collect::<Result<Vec<LossSeries>, CliError>>()?;
            let mut dm_rows = Vec::new();
            for i in 0..losses.len() {
                for j in i + 1..losses.len() {
                    dm_rows.push((losses[i].model_id.clone(), losses[j].model_id.clone(), dm_test(&losses[i], &losses[j], None).ok()));
                }
            }
            let tag = format!("{}_{}", horizon.label().to_lowercase(), kind.label().to_lowercase());
            out.write_with(&format!("dm_{tag}.csv"), |b| Ok(write_dm_table(b, &dm_rows)?))?;
            if losses.len() >= 2 {
                let seed = fxcurve::stats::mix_seed(ctx.config.seed, mcs_rows.len() as u64);
                mcs_rows.push((tag, mcs(&losses, ctx.config.mcs_alpha, ctx.config.mcs_bootstrap, ctx.config.mcs_block, seed).stage("evaluate", None)?));
            }
            all.extend(losses);
        }
    }
    for (tag, res) in &mcs_rows {
        out.write_with(&format!("mcs_{tag}.csv"), |b| Ok(write_mcs_table(b, std::slice::from_ref(res))?))?;
    }
    out.write_with("losses.csv", |b| Ok(write_loss_table(b, &all)?))
}

fn var(ctx: &Context, a: &VarArgs) -> Result<(), CliError> {
    let residuals = read_curves(&a.residuals, CurveKind::Residual)?;
    let variance = read_curves(&a.variance, CurveKind::Variance)?;
    let b = a.bootstrap.unwrap_or(ctx.config.var_bootstrap);
    let j = variance.j();
    let mut text = String::from("date,zeta");
    for c in grid_column_names(j) {
        text.push(',');
        text.push_str(&c);
    }
    text.push('\n');
    let quantiles = a
        .zeta
        .iter()
        .enumerate()
        .map(|(i, &z)| residual_quantile_curve(&residuals, z, b, fxcurve::stats::mix_seed(ctx.config.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()
        .stage("var", None)?;
    for t in 0..variance.len() {
        let sigma: Vec<f64> = variance.row(t).iter().map(|v| v.sqrt()).collect();
        for (z, q) in a.zeta.iter().zip(&quantiles) {
            let v = var_forecast(&sigma, q, *z, &variance.dates()[t]).stage("var", None)?;
            text.push_str(&format!("{},{}", v.date, z));
            for x in &v.curve {
                text.push_str(&format!(",{x}"));
            }
            text.push('\n');
        }
    }
    ctx.emitter()?.write_bytes("var.csv", text.as_bytes())
}

/// Reads a `date,zeta,u_...` VaR file into per-zeta curve lists.
fn read_var(path: &Path) -> Result<Vec<(f64, Vec<VarCurve>)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with("date,zeta,") {
        return Err(CliError::input(format!("{}: header must start with date,zeta,", path.display())));
    }
    let mut out: Vec<(f64, Vec<VarCurve>)> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || CliError::input(format!("{}: line {} malformed", path.display(), i + 2));
        let mut cells = line.split(',');
        let date = cells.next().ok_or_else(bad)?.to_string();
        let zeta: f64 = cells.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let curve = cells.map(|c| c.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
        let v = VarCurve { zeta, curve, date };
        match out.iter_mut().find(|(z, _)| *z == zeta) {
            Some((_, list)) => list.push(v),
            None => out.push((zeta, vec![v])),
        }
    }
    Ok(out)
}

fn backtest(ctx: &Context, a: &BacktestArgs) -> Result<(), CliError> {
    let returns = read_curves(&a.returns, CurveKind::Generic)?;
    let var = read_var(&a.var)?;
    let mut rows = Vec::new();
    for (zeta, curves) in var {
        let dates: BTreeSet<&String> = returns.dates().iter().collect();
        let kept: Vec<VarCurve> = curves.into_iter().filter(|c| dates.contains(&c.date)).collect();
        let kept_dates: Vec<String> = kept.iter().map(|c| c.date.clone()).collect();
        let r = align(&returns, &kept_dates)?;
        let side = if zeta < 0.5 { Side::Lower } else { Side::Upper };
        let v = violations(&r, &kept, side).stage("backtest", None)?;
        let row = |test: &str, lag, pvalue| BacktestRow {
            asset: a.asset.clone(),
            model: a.model.clone(),
            zeta,
            test: test.into(),
            lag,
            pvalue,
        };
        rows.push(row("UNBIASEDNESS", None, backtest_unbiasedness(&v).ok().map(|o| o.pvalue)));
        for &h in &ctx.config.backtest_lags {
            rows.push(row("INDEPENDENCE", Some(h), backtest_independence(&v, &[h]).ok().map(|r| r[0].1.pvalue)));
        }
    }
    ctx.emitter()?.write_with("backtest.csv", |b| Ok(write_backtest_table(b, &rows)?))
}

fn trade(ctx: &Context, a: &TradeArgs) -> Result<(), CliError> {
    let got = ingest_file(ctx, &QuotesArgs { quotes: a.quotes.clone(), grid_j: a.grid_j })?;
    let y = build_ocidr(&got.panel).stage("curves", None)?;
    let j = y.j();
    let mean = match &a.mean {
        Some(p) => read_curves(p, CurveKind::Generic)?.row(0).to_vec(),
        None => vec![0.0; j],
    };
    if mean.len() != j {
        return Err(CliError::input("mean curve length differs from the grid"));
    }
    let side = match a.side {
        SideArg::Long => TradeSide::Long,
        SideArg::Short => TradeSide::Short,
    };
    let strategy = ctx.config.strategy.strategy(side, a.var.is_some());
    let var_curves: Vec<VarCurve> = match &a.var {
        Some(p) => read_var(p)?
            .into_iter()
            .find(|(z, _)| *z == strategy.zeta)
            .map(|(_, v)| v)
            .ok_or_else(|| CliError::input(format!("VaR file has no curves at zeta {}", strategy.zeta)))?,
        None => Vec::new(),
    };
    let lookback = strategy.lookback;
    if y.len() <= lookback {
        return Err(CliError::input(format!("need more than {lookback} return curves to trade")));
    }
    let days = (lookback..y.len())
        .map(|t| {
            let date = y.dates()[t].clone();
            Ok(TradingDay {
                forecast: functional_mean_forecast(&y.slice(t - lookback..t), lookback)?,
                prices: got.panel.mid()[t + 1].clone(),
                realized_demeaned: y.row(t).iter().zip(&mean).map(|(v, m)| v - m).collect(),
                var_curve: var_curves.iter().find(|v| v.date == date).cloned(),
                date,
            })
        })
        .collect::<Result<Vec<_>, fxcurve::Error>>()
        .stage("trade", None)?;
    let records = run_strategy(&strategy, &days).stage("trade", None)?;
    let result = performance(&records).stage("trade", None)?;
    let label = if a.var.is_some() { "VAR_CORRECTED" } else { "BENCHMARK" };
    let mut out = ctx.emitter()?;
    out.write_with("trades.csv", |b| Ok(write_trade_log(b, &records)?))?;
    let row = SummaryRow { asset: stem(&a.quotes), side, strategy: label.into(), result };
    out.write_with("summary.csv", |b| Ok(write_summary(b, &[row])?))
}
