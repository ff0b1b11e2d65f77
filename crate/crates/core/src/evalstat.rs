//! Forecast losses, Diebold-Mariano tests and the Model Confidence Set.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curves::CurveSeries;
use crate::error::{Error, Result};
use crate::stats::{bartlett_lrv, cube_root_lag, mean, normal_two_sided_pvalue, rng_for};

/// Proxies below this are lifted before QLIKE is evaluated.
pub const QLIKE_PROXY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Horizon {
    Intraday,
    Interdaily,
}

impl Horizon {
    pub fn label(self) -> &'static str {
        match self {
            Horizon::Intraday => "INTRADAY",
            Horizon::Interdaily => "INTERDAILY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    Msfe,
    Qlike,
}

impl LossKind {
    pub fn label(self) -> &'static str {
        match self {
            LossKind::Msfe => "MSFE",
            LossKind::Qlike => "QLIKE",
        }
    }

    /// Pointwise loss of forecast `f` against proxy `p`.
    fn eval(self, p: f64, f: f64) -> f64 {
        match self {
            LossKind::Msfe => (p - f) * (p - f),
            LossKind::Qlike => f.ln() + p / f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSeries {
    pub model_id: String,
    pub horizon: Horizon,
    pub loss_kind: LossKind,
    pub per_day: Vec<f64>,
    pub mean: f64,
    /// QLIKE proxies lifted to the floor.
    pub lifted: usize,
}

impl LossSeries {
    pub fn new(model_id: &str, horizon: Horizon, loss_kind: LossKind, per_day: Vec<f64>) -> Self {
        Self {
            model_id: model_id.to_string(),
            horizon,
            loss_kind,
            mean: mean(&per_day),
            per_day,
            lifted: 0,
        }
    }

    pub fn with_model(mut self, model_id: &str) -> Self {
        self.model_id = model_id.to_string();
        self
    }
}

fn lift(kind: LossKind, p: f64, lifted: &mut usize) -> f64 {
    if kind == LossKind::Qlike && p < QLIKE_PROXY_FLOOR {
        *lifted += 1;
        QLIKE_PROXY_FLOOR
    } else {
        p
    }
}

/// Daily losses of close-to-close variance forecasts against realised volatility.
pub fn loss_interdaily(rv: &[f64], forecasts: &[f64], kind: LossKind) -> Result<LossSeries> {
    if rv.len() != forecasts.len() {
        return Err(Error::Alignment(format!(
            "{} proxies for {} forecasts",
            rv.len(),
            forecasts.len()
        )));
    }
    if let Some(f) = forecasts.iter().find(|f| !(**f > 0.0)) {
        return Err(Error::Domain(format!("variance forecast {f} is not positive")));
    }
    let mut lifted = 0;
    let per_day = rv
        .iter()
        .zip(forecasts)
        .map(|(&p, &f)| kind.eval(lift(kind, p, &mut lifted), f))
        .collect();
    let mut out = LossSeries::new("", Horizon::Interdaily, kind, per_day);
    out.lifted = lifted;
    Ok(out)
}

/// Daily grid-averaged pointwise losses of variance curves against squared-return curves.
pub fn loss_intraday(proxy: &CurveSeries, forecasts: &CurveSeries, kind: LossKind) -> Result<LossSeries> {
    if proxy.dates() != forecasts.dates() || proxy.grid() != forecasts.grid() {
        return Err(Error::Alignment("proxy and forecast curves differ in dates or grid".into()));
    }
    let j = proxy.j() as f64;
    let mut lifted = 0;
    let mut per_day = Vec::with_capacity(proxy.len());
    for (p_row, f_row) in proxy.values().iter().zip(forecasts.values()) {
        let mut acc = 0.0;
        for (&p, &f) in p_row.iter().zip(f_row) {
            if !(f > 0.0) {
                return Err(Error::Domain(format!("variance forecast {f} is not positive")));
            }
            acc += kind.eval(lift(kind, p, &mut lifted), f);
        }
        per_day.push(acc / j);
    }
    let mut out = LossSeries::new("", Horizon::Intraday, kind, per_day);
    out.lifted = lifted;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub pvalue: f64,
    pub hac_lag: usize,
}

fn check_comparable(a: &LossSeries, b: &LossSeries) -> Result<()> {
    if a.horizon != b.horizon || a.loss_kind != b.loss_kind {
        return Err(Error::Input("loss series differ in horizon or loss kind".into()));
    }
    if a.per_day.len() != b.per_day.len() {
        return Err(Error::Alignment(format!(
            "loss series lengths {} and {} differ",
            a.per_day.len(),
            b.per_day.len()
        )));
    }
    Ok(())
}

/// Diebold-Mariano test on `d_t = lossA_t − lossB_t`; a positive statistic
/// means model A has the larger loss.
pub fn dm_test(a: &LossSeries, b: &LossSeries, hac_lag: Option<usize>) -> Result<DmResult> {
    check_comparable(a, b)?;
    let t = a.per_day.len();
    if t < 30 {
        return Err(Error::InsufficientData(format!("DM test needs T ≥ 30, got {t}")));
    }
    let q = hac_lag.unwrap_or_else(|| cube_root_lag(t));
    let d: Vec<f64> = a.per_day.iter().zip(&b.per_day).map(|(x, y)| x - y).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Ok(DmResult {
            statistic: 0.0,
            pvalue: 1.0,
            hac_lag: q,
        });
    }
    let lrv = bartlett_lrv(&d, q);
    if !(lrv > 1e-14 * mean(&d.iter().map(|v| v * v).collect::<Vec<_>>())) {
        return Err(Error::Degenerate("loss differential has zero variance".into()));
    }
    let statistic = mean(&d) / (lrv / t as f64).sqrt();
    Ok(DmResult {
        statistic,
        pvalue: normal_two_sided_pvalue(statistic),
        hac_lag: q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsStep {
    pub model_id: String,
    /// Monotonised MCS p-value at elimination.
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub surviving: Vec<String>,
    pub elimination_order: Vec<McsStep>,
    /// p-value of the equivalence test that stopped the elimination.
    pub final_pvalue: f64,
    pub alpha: f64,
}

/// Moving-block bootstrap indices of length `t`.
fn block_indices<R: Rng>(rng: &mut R, t: usize, block: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t);
    while idx.len() < t {
        let start = rng.random_range(0..=t - block);
        idx.extend((start..start + block).take(t - idx.len()));
    }
    idx
}

/// Model Confidence Set with the range statistic `max_{i,j} |t_ij|` and a
/// moving-block bootstrap. The model with the largest mean loss is
/// eliminated while equivalence is rejected at `alpha`.
pub fn mcs(
    losses: &[LossSeries],
    alpha: f64,
    bootstrap_b: usize,
    block_len: Option<usize>,
    seed: u64,
) -> Result<McsResult> {
    let m = losses.len();
    if m < 2 {
        return Err(Error::Input("MCS needs at least two models".into()));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Input(format!("alpha {alpha} must lie in (0, 0.5)")));
    }
    if bootstrap_b == 0 {
        return Err(Error::Input("bootstrap replications must be positive".into()));
    }
    for l in &losses[1..] {
        check_comparable(&losses[0], l)?;
    }
    let t = losses[0].per_day.len();
    if t < 2 {
        return Err(Error::InsufficientData("MCS needs at least two days".into()));
    }
    let block = block_len.unwrap_or_else(|| cube_root_lag(t)).clamp(1, t);
    let means: Vec<f64> = losses.iter().map(|l| mean(&l.per_day)).collect();

    // centred bootstrap means ζ*_{b,i}
    let zeta: Vec<Vec<f64>> = (0..bootstrap_b)
        .map(|b| {
            let mut rng = rng_for(seed, b as u64);
            let idx = block_indices(&mut rng, t, block);
            losses
                .iter()
                .zip(&means)
                .map(|(l, mu)| idx.iter().map(|&i| l.per_day[i]).sum::<f64>() / t as f64 - mu)
                .collect()
        })
        .collect();
    let mut var = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = zeta.iter().map(|z| (z[i] - z[j]).powi(2)).sum::<f64>() / bootstrap_b as f64;
            var[i][j] = v;
            var[j][i] = v;
        }
    }
    let ratio = |num: f64, v: f64| -> f64 {
        if v > 0.0 {
            num.abs() / v.sqrt()
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };

    let mut alive: Vec<usize> = (0..m).collect();
    let mut elimination_order = Vec::new();
    let mut running_p: f64 = 0.0;
    let final_pvalue = loop {
        if alive.len() == 1 {
            break 1.0;
        }
        let mut stat: f64 = 0.0;
        for (a, &i) in alive.iter().enumerate() {
            for &j in &alive[a + 1..] {
                stat = stat.max(ratio(means[i] - means[j], var[i][j]));
            }
        }
        let exceed = zeta
            .iter()
            .filter(|z| {
                let mut s: f64 = 0.0;
                for (a, &i) in alive.iter().enumerate() {
                    for &j in &alive[a + 1..] {
                        // a zero-variance pair has an identically zero bootstrap difference
                        if var[i][j] > 0.0 {
                            s = s.max((z[i] - z[j]).abs() / var[i][j].sqrt());
                        }
                    }
                }
                s >= stat
            })
            .count();
        let p = exceed as f64 / bootstrap_b as f64;
        if p >= alpha {
            break p.max(running_p);
        }
        let worst = *alive
            .iter()
            .max_by(|&&x, &&y| means[x].total_cmp(&means[y]).then(y.cmp(&x)))
            .expect("non-empty set");
        running_p = running_p.max(p);
        elimination_order.push(McsStep {
            model_id: losses[worst].model_id.clone(),
            pvalue: running_p,
        });
        alive.retain(|&i| i != worst);
    };
    Ok(McsResult {
        surviving: alive.iter().map(|&i| losses[i].model_id.clone()).collect(),
        elimination_order,
        final_pvalue,
        alpha,
    })
}

pub fn write_loss_table<W: Write>(writer: W, losses: &[LossSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "horizon", "loss_kind", "mean_loss"])?;
    for l in losses {
        w.write_record([
            l.model_id.as_str(),
            l.horizon.label(),
            l.loss_kind.label(),
            &l.mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of `(modelA, modelB, result)`; `None` is written as `NA`.
pub fn write_dm_table<W: Write>(writer: W, rows: &[(String, String, Option<DmResult>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["modelA", "modelB", "dm_stat", "pvalue"])?;
    for (a, b, r) in rows {
        let (s, p) = match r {
            Some(r) => (r.statistic.to_string(), r.pvalue.to_string()),
            None => ("NA".into(), "NA".into()),
        };
        w.write_record([a, b, &s, &p])?;
    }
    w.flush()?;
    Ok(())
}

/// Surviving models are joined with `;`.
pub fn write_mcs_table<W: Write>(writer: W, results: &[McsResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "surviving_models"])?;
    for r in results {
        w.write_record([r.alpha.to_string(), r.surviving.join(";")])?;
    }
    w.flush()?;
    Ok(())
}
