use rand::Rng;
use rand_distr::StandardNormal;

use super::recursion::floor_curve;
use super::{project_onto, ProjectedParams, DEFAULT_VARIANCE_FLOOR};
use crate::curves::{CurveKind, CurveSeries, IntradayGrid};
use crate::error::{Error, Result};
use crate::stats::rng_for;

/// Correlation range of the Ornstein-Uhlenbeck error curves.
const OU_RANGE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorModel {
    /// Unit-variance Gaussian curves with correlation `exp(−|u−v|/0.3)`.
    GaussianOu,
    /// Curves drawn with replacement from the given pool.
    Bootstrap(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    pub burn_in: usize,
    pub allow_unstable: bool,
    pub variance_floor: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            burn_in: 200,
            allow_unstable: false,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub returns: CurveSeries,
    pub sigma2: CurveSeries,
    pub errors: Vec<Vec<f64>>,
    pub floor_engagements: usize,
}

/// One OU error curve on `grid`: an exact AR(1) discretisation.
pub fn ou_error_curve<R: Rng + ?Sized>(grid: &IntradayGrid, rng: &mut R) -> Vec<f64> {
    let pts = grid.points();
    let mut out = Vec::with_capacity(pts.len());
    let mut prev: f64 = rng.sample(StandardNormal);
    out.push(prev);
    for w in pts.windows(2) {
        let rho = (-(w[1] - w[0]) / OU_RANGE).exp();
        let z: f64 = rng.sample(StandardNormal);
        prev = rho * prev + (1.0 - rho * rho).sqrt() * z;
        out.push(prev);
    }
    out
}

/// Simulates `n` curves `y_t = σ_t ε_t` from the score recursion with
/// basis `functions`. The exogenous term is not simulated.
pub fn simulate(
    params: &ProjectedParams,
    grid: &IntradayGrid,
    functions: &[Vec<f64>],
    error_model: &ErrorModel,
    n: usize,
    seed: u64,
    options: &SimulateOptions,
) -> Result<SimulatedPath> {
    let total = options.burn_in + n;
    let mut rng = rng_for(seed, 0);
    let errors: Vec<Vec<f64>> = match error_model {
        ErrorModel::GaussianOu => (0..total).map(|_| ou_error_curve(grid, &mut rng)).collect(),
        ErrorModel::Bootstrap(pool) => {
            if pool.is_empty() {
                return Err(Error::Input("bootstrap pool is empty".into()));
            }
            if pool.iter().any(|c| c.len() != grid.len()) {
                return Err(Error::Shape("bootstrap curves do not match the grid".into()));
            }
            (0..total)
                .map(|_| pool[rng.random_range(0..pool.len())].clone())
                .collect()
        }
    };
    simulate_with_errors(params, grid, functions, &errors, options)
}

/// Runs the recursion on supplied error curves; the first `burn_in` are discarded.
pub fn simulate_with_errors(
    params: &ProjectedParams,
    grid: &IntradayGrid,
    functions: &[Vec<f64>],
    errors: &[Vec<f64>],
    options: &SimulateOptions,
) -> Result<SimulatedPath> {
    params.validate()?;
    let k = params.k();
    if functions.len() != k {
        return Err(Error::Shape(format!("{} basis functions for {k} parameters", functions.len())));
    }
    if functions.iter().chain(errors).any(|f| f.len() != grid.len()) {
        return Err(Error::Shape("curves do not match the grid".into()));
    }
    if errors.len() <= options.burn_in {
        return Err(Error::Input("need more error curves than the burn-in".into()));
    }
    let rho = params.b_spectral_radius();
    if rho >= 1.0 && !options.allow_unstable {
        return Err(Error::Unstable(format!("spectral radius of B is {rho:.4} ≥ 1")));
    }
    let reconstruct = |h: &[f64]| {
        let mut c = vec![0.0; grid.len()];
        for (hl, f) in h.iter().zip(functions) {
            c.iter_mut().zip(f).for_each(|(o, v)| *o += hl * v);
        }
        c
    };

    let mut h = params.d.clone();
    let mut start = reconstruct(&h);
    floor_curve(&mut start, options.variance_floor);
    let mut s = project_onto(grid, functions, &start)?;

    let n = errors.len() - options.burn_in;
    let mut returns = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    let mut floor_engagements = 0;
    for (t, eps) in errors.iter().enumerate() {
        h = params.step(&s, &h, None);
        let mut sig = reconstruct(&h);
        let floored = floor_curve(&mut sig, options.variance_floor);
        let y: Vec<f64> = sig.iter().zip(eps).map(|(v, e)| v.sqrt() * e).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                t,
                message: "simulated curve is not finite".into(),
            });
        }
        let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
        s = project_onto(grid, functions, &y2)?;
        if t >= options.burn_in {
            floor_engagements += floored;
            returns.push(y);
            sigma2.push(sig);
        }
    }
    let dates = business_dates(n);
    Ok(SimulatedPath {
        returns: CurveSeries::new(grid.clone(), dates.clone(), returns, CurveKind::Ocidr)?,
        sigma2: CurveSeries::new(grid.clone(), dates, sigma2, CurveKind::Variance)?,
        errors: errors[options.burn_in..].to_vec(),
        floor_engagements,
    })
}

/// `n` consecutive weekday dates (ISO format) starting on 2010-01-04.
pub fn business_dates(n: usize) -> Vec<String> {
    let mut day = days_from_civil(2010, 1, 4);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        // 1970-01-01 was a Thursday
        let weekday = (day + 3).rem_euclid(7);
        if weekday < 5 {
            let (y, m, d) = civil_from_days(day);
            out.push(format!("{y:04}-{m:02}-{d:02}"));
        }
        day += 1;
    }
    out
}

fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}
