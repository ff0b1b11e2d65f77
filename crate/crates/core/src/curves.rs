//! Quote ingestion and construction of intraday curve series.
//!
//! Quotes arrive as `date,time,bid,ask[,mid]` rows and are snapped onto a
//! uniform intraday grid. From the resulting [`QuotePanel`] we build the
//! overnight cumulative intraday return curves (OCIDR, in percent), the
//! overnight cumulative bid-ask spread curves (OCIBAS) and daily realised
//! volatility. All curve-valued data travels as a [`CurveSeries`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform intraday grid `u_j = (j−1)/(J−1)` on `[0, 1]`, `u_J = 1` being the close.
///
/// Inner products use trapezoid weights, so `∫ 1 du = 1` exactly. A single-point
/// grid sits at `u = 1` with unit weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct IntradayGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    j: usize,
}

impl TryFrom<GridSpec> for IntradayGrid {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<Self> {
        IntradayGrid::uniform(spec.j)
    }
}

impl From<IntradayGrid> for GridSpec {
    fn from(g: IntradayGrid) -> Self {
        GridSpec { j: g.len() }
    }
}

impl IntradayGrid {
    pub fn uniform(j: usize) -> Result<Self> {
        match j {
            0 => Err(Error::Input("grid needs at least one point".into())),
            1 => Ok(Self {
                points: vec![1.0],
                weights: vec![1.0],
            }),
            _ => {
                let step = 1.0 / (j - 1) as f64;
                let mut points: Vec<f64> = (0..j).map(|i| i as f64 * step).collect();
                points[j - 1] = 1.0;
                let mut weights = vec![step; j];
                weights[0] = 0.5 * step;
                weights[j - 1] = 0.5 * step;
                Ok(Self { points, weights })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature inner product `⟨a, b⟩ = ∫ a(u) b(u) du`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    pub fn integral(&self, a: &[f64]) -> f64 {
        a.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }
}

/// Maps `HH:MM` clock times onto grid slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionClock {
    /// Minutes after midnight of the first grid point.
    pub start_minute: u32,
    /// Sampling interval in minutes.
    pub step_minutes: u32,
}

impl Default for SessionClock {
    fn default() -> Self {
        Self {
            start_minute: 0,
            step_minutes: 5,
        }
    }
}

impl SessionClock {
    /// Nearest grid slot of a clock time, or `None` outside the session.
    pub fn slot(&self, minute_of_day: u32, j: usize) -> Option<usize> {
        let rel = minute_of_day as f64 - self.start_minute as f64;
        let slot = (rel / self.step_minutes as f64).round();
        if slot < 0.0 || slot >= j as f64 {
            None
        } else {
            Some(slot as usize)
        }
    }

    pub fn label(&self, slot: usize) -> String {
        let m = self.start_minute as usize + slot * self.step_minutes as usize;
        format!("{:02}:{:02}", (m / 60) % 24, m % 60)
    }
}

/// Bid/ask/mid quotes for `N` trading days on a common `J`-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotePanel {
    grid: IntradayGrid,
    dates: Vec<String>,
    bid: Vec<Vec<f64>>,
    ask: Vec<Vec<f64>>,
    mid: Vec<Vec<f64>>,
}

impl QuotePanel {
    pub fn new(
        grid: IntradayGrid,
        dates: Vec<String>,
        bid: Vec<Vec<f64>>,
        ask: Vec<Vec<f64>>,
        mid: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = dates.len();
        if bid.len() != n || ask.len() != n || mid.len() != n {
            return Err(Error::Shape("quote matrices must have one row per date".into()));
        }
        check_dates_increasing(&dates)?;
        let j = grid.len();
        for t in 0..n {
            if bid[t].len() != j || ask[t].len() != j || mid[t].len() != j {
                return Err(Error::Shape(format!("day {} does not have {j} slots", dates[t])));
            }
            for u in 0..j {
                let (b, a, m) = (bid[t][u], ask[t][u], mid[t][u]);
                if !(b.is_finite() && a.is_finite() && m.is_finite()) {
                    return Err(Error::Input(format!("non-finite quote on {}", dates[t])));
                }
                if b < 0.0 || a < 0.0 || m < 0.0 {
                    return Err(Error::Input(format!("negative quote on {}", dates[t])));
                }
                if a < b {
                    return Err(Error::Input(format!(
                        "crossed quote (ask < bid) on {} slot {}",
                        dates[t],
                        u + 1
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            dates,
            bid,
            ask,
            mid,
        })
    }

    pub fn grid(&self) -> &IntradayGrid {
        &self.grid
    }
    pub fn dates(&self) -> &[String] {
        &self.dates
    }
    pub fn bid(&self) -> &[Vec<f64>] {
        &self.bid
    }
    pub fn ask(&self) -> &[Vec<f64>] {
        &self.ask
    }
    pub fn mid(&self) -> &[Vec<f64>] {
        &self.mid
    }
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Writes the panel back out in the ingest CSV format.
    pub fn write_csv<W: Write>(&self, writer: W, clock: &SessionClock) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "time", "bid", "ask", "mid"])?;
        for t in 0..self.n_days() {
            for u in 0..self.grid.len() {
                w.write_record([
                    self.dates[t].clone(),
                    clock.label(u),
                    self.bid[t][u].to_string(),
                    self.ask[t][u].to_string(),
                    self.mid[t][u].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Ingestion knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub clock: SessionClock,
    /// Days with a larger share of empty slots are dropped.
    pub max_missing_share: f64,
    /// Dates removed before anything else (holidays, partial sessions).
    pub exclude_dates: Vec<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            clock: SessionClock::default(),
            max_missing_share: 0.05,
            exclude_dates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedDay {
    pub date: String,
    pub missing_share: f64,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub panel: QuotePanel,
    pub dropped: Vec<DroppedDay>,
    /// Rows whose time fell outside the session grid.
    pub ignored_rows: usize,
    /// Slots filled by interpolation across all kept days.
    pub filled_slots: usize,
}

#[derive(Default)]
struct DaySlots {
    bid: Vec<Option<f64>>,
    ask: Vec<Option<f64>>,
    mid: Vec<Option<f64>>,
}

/// Reads the quote CSV, snaps rows to the grid, drops sparse days and fills gaps.
pub fn ingest_quotes<R: Read>(
    source: R,
    grid: &IntradayGrid,
    options: &IngestOptions,
) -> Result<IngestOutcome> {
    let j = grid.len();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(c_date), Some(c_time), Some(c_bid), Some(c_ask)) =
        (col("date"), col("time"), col("bid"), col("ask"))
    else {
        return Err(Error::Parse {
            line: 1,
            message: "header must contain date,time,bid,ask[,mid]".into(),
        });
    };
    let c_mid = col("mid");
    let excluded: BTreeSet<&str> = options.exclude_dates.iter().map(String::as_str).collect();

    let mut days: BTreeMap<String, DaySlots> = BTreeMap::new();
    let mut ignored_rows = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |c: usize| -> Result<&str> {
            record.get(c).ok_or_else(|| Error::Parse {
                line,
                message: "missing column".into(),
            })
        };
        let date = field(c_date)?;
        validate_date(date).map_err(|message| Error::Parse { line, message })?;
        let minute = parse_clock(field(c_time)?).map_err(|message| Error::Parse { line, message })?;
        let price = |c: usize, what: &str| -> Result<f64> {
            let raw = field(c)?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{what} '{raw}' is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    line,
                    message: format!("{what} must be a finite non-negative price"),
                });
            }
            Ok(v)
        };
        let bid = price(c_bid, "bid")?;
        let ask = price(c_ask, "ask")?;
        if ask < bid {
            return Err(Error::Parse {
                line,
                message: format!("crossed quote: ask {ask} < bid {bid}"),
            });
        }
        let mid = match c_mid {
            Some(c) if record.get(c).is_some_and(|s| !s.is_empty()) => price(c, "mid")?,
            _ => 0.5 * (bid + ask),
        };
        if excluded.contains(date) {
            continue;
        }
        let Some(slot) = options.clock.slot(minute, j) else {
            ignored_rows += 1;
            continue;
        };
        let day = days.entry(date.to_string()).or_insert_with(|| DaySlots {
            bid: vec![None; j],
            ask: vec![None; j],
            mid: vec![None; j],
        });
        // last observation per slot wins
        day.bid[slot] = Some(bid);
        day.ask[slot] = Some(ask);
        day.mid[slot] = Some(mid);
    }

    let mut dates = Vec::new();
    let (mut bids, mut asks, mut mids) = (Vec::new(), Vec::new(), Vec::new());
    let mut dropped = Vec::new();
    let mut filled_slots = 0usize;
    for (date, slots) in days {
        let missing = slots.mid.iter().filter(|v| v.is_none()).count();
        let share = missing as f64 / j as f64;
        if share > options.max_missing_share {
            dropped.push(DroppedDay {
                date,
                missing_share: share,
            });
            continue;
        }
        filled_slots += missing;
        dates.push(date);
        bids.push(fill_gaps(&slots.bid));
        asks.push(fill_gaps(&slots.ask));
        mids.push(fill_gaps(&slots.mid));
    }
    if dates.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} usable trading day(s) after ingestion, need at least 2",
            dates.len()
        )));
    }
    let panel = QuotePanel::new(grid.clone(), dates, bids, asks, mids)?;
    Ok(IngestOutcome {
        panel,
        dropped,
        ignored_rows,
        filled_slots,
    })
}

/// Linear interpolation across interior gaps, nearest value at the boundaries.
fn fill_gaps(slots: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = slots
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|x| (i, x)))
        .collect();
    let mut out = vec![0.0; slots.len()];
    let (first, last) = (known[0], known[known.len() - 1]);
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        if i <= first.0 {
            *o = first.1;
        } else if i >= last.0 {
            *o = last.1;
        } else {
            while known[k + 1].0 < i {
                k += 1;
            }
            let (i0, v0) = known[k];
            let (i1, v1) = known[k + 1];
            *o = if i == i1 {
                v1
            } else {
                v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
            };
        }
    }
    out
}

fn validate_date(s: &str) -> std::result::Result<(), String> {
    let b = s.as_bytes();
    let ok_shape = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !ok_shape {
        return Err(format!("date '{s}' is not ISO-8601 (YYYY-MM-DD)"));
    }
    let month: u32 = s[5..7].parse().unwrap_or(0);
    let day: u32 = s[8..10].parse().unwrap_or(0);
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(format!("date '{s}' is out of range"));
    }
    Ok(())
}

fn parse_clock(s: &str) -> std::result::Result<u32, String> {
    let mut parts = s.split(':');
    let (Some(h), Some(m)) = (parts.next(), parts.next()) else {
        return Err(format!("time '{s}' is not HH:MM"));
    };
    let h: u32 = h.parse().map_err(|_| format!("time '{s}' is not HH:MM"))?;
    let m: u32 = m.parse().map_err(|_| format!("time '{s}' is not HH:MM"))?;
    if h > 23 || m > 59 {
        return Err(format!("time '{s}' out of range"));
    }
    Ok(h * 60 + m)
}

fn check_dates_increasing(dates: &[String]) -> Result<()> {
    for w in dates.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Input(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// What a [`CurveSeries`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CurveKind {
    Ocidr,
    Ocibas,
    Squared,
    Variance,
    Residual,
    Generic,
}

/// `N` dated curves on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    grid: IntradayGrid,
    dates: Vec<String>,
    values: Vec<Vec<f64>>,
    kind: CurveKind,
}

impl CurveSeries {
    pub fn new(
        grid: IntradayGrid,
        dates: Vec<String>,
        values: Vec<Vec<f64>>,
        kind: CurveKind,
    ) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} dates for {} curves",
                dates.len(),
                values.len()
            )));
        }
        check_dates_increasing(&dates)?;
        for (t, row) in values.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "curve {t} has {} points, grid has {}",
                    row.len(),
                    grid.len()
                )));
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::Numeric {
                        t,
                        message: "curve value is not finite".into(),
                    });
                }
                let ok = match kind {
                    CurveKind::Variance => v > 0.0,
                    CurveKind::Squared => v >= 0.0,
                    _ => true,
                };
                if !ok {
                    return Err(Error::Domain(format!(
                        "{kind:?} curve {t} violates its sign constraint"
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            dates,
            values,
            kind,
        })
    }

    pub fn grid(&self) -> &IntradayGrid {
        &self.grid
    }
    pub fn dates(&self) -> &[String] {
        &self.dates
    }
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }
    pub fn kind(&self) -> CurveKind {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn j(&self) -> usize {
        self.grid.len()
    }

    /// Rows `range` as a new series of the same kind.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CurveSeries {
        CurveSeries {
            grid: self.grid.clone(),
            dates: self.dates[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
            kind: self.kind,
        }
    }

    pub fn with_kind(self, kind: CurveKind) -> Result<Self> {
        CurveSeries::new(self.grid, self.dates, self.values, kind)
    }

    /// Pointwise sample mean curve.
    pub fn mean_curve(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.j()];
        for row in &self.values {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// CSV with a `date` column followed by `u_0001..u_J`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(grid_column_names(self.j()));
        w.write_record(&header)?;
        for (date, row) in self.dates.iter().zip(&self.values) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(date.clone());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, kind: CurveKind) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("date") || headers.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                message: "curve CSV must start with 'date' followed by u_0001..u_J".into(),
            });
        }
        let j = headers.len() - 1;
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            dates.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("'{s}' is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        CurveSeries::new(IntradayGrid::uniform(j)?, dates, values, kind)
    }
}

pub fn grid_column_names(j: usize) -> impl Iterator<Item = String> {
    (1..=j).map(|i| format!("u_{i:04}"))
}

/// One value per dated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub dates: Vec<String>,
    pub values: Vec<f64>,
}

fn require_two_days(panel: &QuotePanel) -> Result<()> {
    if panel.n_days() < 2 {
        return Err(Error::InsufficientData(
            "curve construction needs the previous day's close (N ≥ 2)".into(),
        ));
    }
    Ok(())
}

fn log_mid(panel: &QuotePanel) -> Result<Vec<Vec<f64>>> {
    panel
        .mid()
        .iter()
        .zip(panel.dates())
        .map(|(row, d)| {
            row.iter()
                .map(|&p| {
                    if p > 0.0 {
                        Ok(p.ln())
                    } else {
                        Err(Error::Domain(format!("non-positive mid price {p} on {d}")))
                    }
                })
                .collect()
        })
        .collect()
}

/// OCIDR curves `y_t(u) = 100·[ln P_t(u) − ln P_{t−1}(1)]` for `t = 2..N`.
pub fn build_ocidr(panel: &QuotePanel) -> Result<CurveSeries> {
    require_two_days(panel)?;
    let logp = log_mid(panel)?;
    let j = panel.grid().len();
    let values = (1..panel.n_days())
        .map(|t| {
            let prev_close = logp[t - 1][j - 1];
            logp[t].iter().map(|lp| 100.0 * (lp - prev_close)).collect()
        })
        .collect();
    CurveSeries::new(
        panel.grid().clone(),
        panel.dates()[1..].to_vec(),
        values,
        CurveKind::Ocidr,
    )
}

/// OCIBAS curves `IBAS_t(u) − IBAS_{t−1}(1)` with `IBAS = ask − bid`.
pub fn build_ocibas(panel: &QuotePanel) -> Result<CurveSeries> {
    require_two_days(panel)?;
    let j = panel.grid().len();
    let spread: Vec<Vec<f64>> = panel
        .ask()
        .iter()
        .zip(panel.bid())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let values = (1..panel.n_days())
        .map(|t| {
            let prev_close = spread[t - 1][j - 1];
            spread[t].iter().map(|s| s - prev_close).collect()
        })
        .collect();
    CurveSeries::new(
        panel.grid().clone(),
        panel.dates()[1..].to_vec(),
        values,
        CurveKind::Ocibas,
    )
}

/// Removes a functional mean. With `mean = None` the pointwise sample mean is
/// estimated and returned; a supplied mean is used verbatim.
pub fn demean(series: &CurveSeries, mean: Option<&[f64]>) -> Result<(CurveSeries, Vec<f64>)> {
    if series.is_empty() {
        return Err(Error::InsufficientData("cannot demean an empty series".into()));
    }
    let c = match mean {
        Some(m) if m.len() != series.j() => {
            return Err(Error::Shape(format!(
                "mean has {} points, grid has {}",
                m.len(),
                series.j()
            )))
        }
        Some(m) => m.to_vec(),
        None => series.mean_curve(),
    };
    let values = series
        .values()
        .iter()
        .map(|row| row.iter().zip(&c).map(|(y, m)| y - m).collect())
        .collect();
    let out = CurveSeries::new(
        series.grid().clone(),
        series.dates().to_vec(),
        values,
        match series.kind() {
            CurveKind::Variance | CurveKind::Squared => CurveKind::Generic,
            k => k,
        },
    )?;
    Ok((out, c))
}

/// Daily realised variance in squared percent, one value per day `t = 2..N`:
/// squared intraday 100×log returns plus the squared overnight return.
pub fn realised_vol(panel: &QuotePanel) -> Result<DailySeries> {
    require_two_days(panel)?;
    let logp = log_mid(panel)?;
    let j = panel.grid().len();
    let values = (1..panel.n_days())
        .map(|t| {
            let overnight = 100.0 * (logp[t][0] - logp[t - 1][j - 1]);
            let intraday: f64 = logp[t]
                .windows(2)
                .map(|w| {
                    let r = 100.0 * (w[1] - w[0]);
                    r * r
                })
                .sum();
            intraday + overnight * overnight
        })
        .collect();
    Ok(DailySeries {
        dates: panel.dates()[1..].to_vec(),
        values,
    })
}

/// Pointwise square of a return (or generic) series.
pub fn square_series(series: &CurveSeries) -> Result<CurveSeries> {
    if !matches!(series.kind(), CurveKind::Ocidr | CurveKind::Generic) {
        return Err(Error::Input(format!(
            "square_series expects OCIDR or GENERIC curves, got {:?}",
            series.kind()
        )));
    }
    let values = series
        .values()
        .iter()
        .map(|row| row.iter().map(|v| v * v).collect())
        .collect();
    CurveSeries::new(
        series.grid().clone(),
        series.dates().to_vec(),
        values,
        CurveKind::Squared,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel_from(mids: Vec<Vec<f64>>) -> QuotePanel {
        let j = mids[0].len();
        let dates = (0..mids.len()).map(|i| format!("2020-01-{:02}", i + 1)).collect();
        QuotePanel::new(
            IntradayGrid::uniform(j).unwrap(),
            dates,
            mids.clone(),
            mids.clone(),
            mids,
        )
        .unwrap()
    }

    #[test]
    fn grid_weights_integrate_constants() {
        for j in [1, 2, 3, 50, 288] {
            let g = IntradayGrid::uniform(j).unwrap();
            assert!((g.integral(&vec![1.0; j]) - 1.0).abs() < 1e-12);
            assert_eq!(*g.points().last().unwrap(), 1.0);
        }
    }

    #[test]
    fn ingest_complete_days() {
        let csv = "date,time,bid,ask\n\
                   2020-01-02,00:00,1.0,1.2\n2020-01-02,00:05,1.1,1.3\n2020-01-02,00:10,1.0,1.1\n\
                   2020-01-03,00:00,1.0,1.2\n2020-01-03,00:05,1.1,1.3\n2020-01-03,00:10,1.0,1.1\n";
        let grid = IntradayGrid::uniform(3).unwrap();
        let out = ingest_quotes(csv.as_bytes(), &grid, &IngestOptions::default()).unwrap();
        assert_eq!(out.panel.n_days(), 2);
        assert_eq!(out.panel.grid().len(), 3);
        assert!(out.dropped.is_empty());
        assert!((out.panel.mid()[0][0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn ingest_drops_sparse_day_and_reports_it() {
        let mut csv = String::from("date,time,bid,ask,mid\n");
        for d in ["2020-01-02", "2020-01-03", "2020-01-06"] {
            for s in 0..4 {
                if d == "2020-01-03" && s >= 2 {
                    continue;
                }
                csv += &format!("{d},00:{:02},1.0,1.0,1.0\n", s * 5);
            }
        }
        let grid = IntradayGrid::uniform(4).unwrap();
        let out = ingest_quotes(csv.as_bytes(), &grid, &IngestOptions::default()).unwrap();
        assert_eq!(out.panel.dates(), ["2020-01-02", "2020-01-06"]);
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].date, "2020-01-03");
        assert!((out.dropped[0].missing_share - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ingest_rejects_crossed_quote_with_line() {
        let csv = "date,time,bid,ask\n2020-01-02,00:00,1.0,1.2\n2020-01-02,00:05,1.3,1.2\n";
        let grid = IntradayGrid::uniform(2).unwrap();
        let err = ingest_quotes(csv.as_bytes(), &grid, &IngestOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("crossed"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ingest_needs_two_days() {
        let csv = "date,time,bid,ask\n2020-01-02,00:00,1.0,1.2\n2020-01-02,00:05,1.0,1.2\n";
        let grid = IntradayGrid::uniform(2).unwrap();
        assert!(matches!(
            ingest_quotes(csv.as_bytes(), &grid, &IngestOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn ingest_interpolates_small_gaps() {
        let mut csv = String::from("date,time,bid,ask\n");
        for d in ["2020-01-02", "2020-01-03"] {
            for s in 0..40 {
                if s == 10 || s == 0 {
                    continue;
                }
                let p = 1.0 + s as f64 * 0.01;
                csv += &format!("{d},{:02}:{:02},{p},{p}\n", (s * 5) / 60, (s * 5) % 60);
            }
        }
        let grid = IntradayGrid::uniform(40).unwrap();
        let out = ingest_quotes(csv.as_bytes(), &grid, &IngestOptions::default()).unwrap();
        let mid = &out.panel.mid()[0];
        assert!((mid[10] - 1.10).abs() < 1e-12);
        assert!((mid[0] - 1.01).abs() < 1e-12);
        assert_eq!(out.filled_slots, 4);
    }

    #[test]
    fn ocidr_examples() {
        let p = panel_from(vec![vec![100.0; 3], vec![100.0; 3]]);
        let y = build_ocidr(&p).unwrap();
        assert!(y.row(0).iter().all(|v| *v == 0.0));

        let p = panel_from(vec![vec![1.0, 1.0], vec![0.02f64.exp(), 1.0]]);
        let y = build_ocidr(&p).unwrap();
        assert!((y.row(0)[0] - 2.0).abs() < 1e-12);

        let one = panel_from(vec![vec![1.0; 2]]);
        assert!(matches!(build_ocidr(&one), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ocidr_rejects_nonpositive_price() {
        let p = panel_from(vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(build_ocidr(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn ocibas_examples() {
        let grid = IntradayGrid::uniform(3).unwrap();
        let dates = vec!["2020-01-01".to_string(), "2020-01-02".to_string()];
        let mid = vec![vec![1.0; 3]; 2];
        let bid = vec![vec![1.0; 3]; 2];
        let ask = vec![vec![1.0, 1.0, 3.0], vec![4.0; 3]];
        let p = QuotePanel::new(grid.clone(), dates.clone(), bid.clone(), ask, mid.clone()).unwrap();
        let x = build_ocibas(&p).unwrap();
        assert_eq!(x.row(0), &[1.0, 1.0, 1.0]);

        let ask = vec![vec![1.5; 3]; 2];
        let p = QuotePanel::new(grid, dates, bid, ask, mid).unwrap();
        assert!(build_ocibas(&p).unwrap().row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn realised_vol_examples() {
        let r: f64 = 0.003;
        let p = panel_from(vec![vec![1.0; 4], vec![r.exp(); 4]]);
        let rv = realised_vol(&p).unwrap();
        assert!((rv.values[0] - (100.0 * r).powi(2)).abs() < 1e-9);

        let p = panel_from(vec![vec![1.0; 3], vec![1.0, 0.01f64.exp(), 1.0]]);
        let rv = realised_vol(&p).unwrap();
        assert!((rv.values[0] - 2.0).abs() < 1e-9);

        let p = panel_from(vec![vec![2.0; 3]; 2]);
        assert_eq!(realised_vol(&p).unwrap().values[0], 0.0);
    }

    #[test]
    fn demean_examples() {
        let g = IntradayGrid::uniform(2).unwrap();
        let s = CurveSeries::new(
            g,
            vec!["2020-01-01".into(), "2020-01-02".into()],
            vec![vec![3.0, 4.0], vec![3.0, 4.0]],
            CurveKind::Generic,
        )
        .unwrap();
        let (d, m) = demean(&s, None).unwrap();
        assert_eq!(m, vec![3.0, 4.0]);
        assert!(d.values().iter().flatten().all(|v| *v == 0.0));
        let (same, _) = demean(&s, Some(&[0.0, 0.0])).unwrap();
        assert_eq!(same.values(), s.values());
        assert!(matches!(demean(&s, Some(&[0.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn square_examples() {
        let g = IntradayGrid::uniform(2).unwrap();
        let s = CurveSeries::new(g, vec!["2020-01-01".into()], vec![vec![0.0, -2.0]], CurveKind::Generic)
            .unwrap();
        let sq = square_series(&s).unwrap();
        assert_eq!(sq.row(0), &[0.0, 4.0]);
        assert_eq!(sq.kind(), CurveKind::Squared);
        let twice = square_series(&sq.clone().with_kind(CurveKind::Generic).unwrap()).unwrap();
        assert_eq!(twice.row(0), &[0.0, 16.0]);
        assert!(square_series(&sq).is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let g = IntradayGrid::uniform(3).unwrap();
        let s = CurveSeries::new(
            g,
            vec!["2020-01-01".into(), "2020-01-02".into()],
            vec![vec![0.1, -2.5, 1.0 / 3.0], vec![1e-17, 3.0, 4.0]],
            CurveKind::Ocidr,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("date,u_0001,u_0002,u_0003\n"));
        let back = CurveSeries::read_csv(buf.as_slice(), CurveKind::Ocidr).unwrap();
        assert_eq!(back, s);
    }
}
