use rand::Rng;

use super::optim::{minimize, BfgsOptions};
use super::recursion::{variance_recursion, RecursionInit};
use super::{FGarchFit, FitBasis, FittedModel, ModelKind, ModelSpec, ProjectedParams};
use crate::curves::{CurveKind, CurveSeries};
use crate::error::{Error, Result};
use crate::stats::{mix_seed, rng_for};

const THETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct QmleOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub f_tol: f64,
    /// Extra starting point tried before the seeded ones.
    pub warm_start: Option<ProjectedParams>,
}

impl Default for QmleOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 0,
            max_iter: 500,
            f_tol: 1e-8,
            warm_start: None,
        }
    }
}

/// Score-space quasi-likelihood
/// `(1/N) Σ_t Σ_l [ s_{t,l} / h_{t,l} + ln h_{t,l} ]`
/// as a function of `η = ln θ`, with its analytic gradient.
#[derive(Debug, Clone)]
pub struct QmleObjective {
    k: usize,
    free: Vec<usize>,
    has_g: bool,
    s: Vec<Vec<f64>>,
    x: Option<Vec<Vec<f64>>>,
    init: RecursionInit,
}

impl QmleObjective {
    pub fn new(
        basis: &FitBasis,
        squared_scores: Vec<Vec<f64>>,
        x_scores: Option<Vec<Vec<f64>>>,
        init: RecursionInit,
    ) -> Self {
        let free = basis
            .free_mask()
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        Self {
            k: basis.k(),
            free,
            has_g: x_scores.is_some(),
            s: squared_scores,
            x: x_scores,
            init,
        }
    }

    pub fn dim(&self) -> usize {
        self.k + self.free.len() * if self.has_g { 3 } else { 2 }
    }

    pub fn params_from_eta(&self, eta: &[f64]) -> ProjectedParams {
        let k = self.k;
        let nf = self.free.len();
        let mut p = ProjectedParams::zeros(k, self.has_g);
        for l in 0..k {
            p.d[l] = eta[l].exp();
        }
        for (i, &idx) in self.free.iter().enumerate() {
            let (r, c) = (idx / k, idx % k);
            p.a[r][c] = eta[k + i].exp();
            p.b[r][c] = eta[k + nf + i].exp();
            if let Some(g) = &mut p.g {
                g[r][c] = eta[k + 2 * nf + i].exp();
            }
        }
        p
    }

    pub fn eta_from_params(&self, p: &ProjectedParams) -> Vec<f64> {
        let k = self.k;
        let ln = |v: f64| v.max(THETA_FLOOR).ln();
        let mut eta: Vec<f64> = p.d.iter().map(|&v| ln(v)).collect();
        eta.extend(self.free.iter().map(|&i| ln(p.a[i / k][i % k])));
        eta.extend(self.free.iter().map(|&i| ln(p.b[i / k][i % k])));
        if self.has_g {
            let g = p.g.as_ref().expect("G present for FGARCH-X");
            eta.extend(self.free.iter().map(|&i| ln(g[i / k][i % k])));
        }
        eta
    }

    /// Objective value; `+∞` when any projected variance is non-positive.
    pub fn value(&self, eta: &[f64]) -> f64 {
        self.forward(&self.params_from_eta(eta)).map_or(f64::INFINITY, |(f, _)| f)
    }

    fn forward(&self, p: &ProjectedParams) -> Option<(f64, Vec<Vec<f64>>)> {
        let n = self.s.len();
        let mut h_path = Vec::with_capacity(n);
        let mut h_prev = self.init.sigma2_scores.clone();
        let mut f = 0.0;
        for t in 0..n {
            let s_prev = if t == 0 { &self.init.squared_scores } else { &self.s[t - 1] };
            let x_prev = match &self.x {
                Some(_) if t == 0 => self.init.x_scores.as_deref(),
                Some(x) => Some(x[t - 1].as_slice()),
                None => None,
            };
            let h = p.step(s_prev, &h_prev, x_prev);
            for (hl, sl) in h.iter().zip(&self.s[t]) {
                if !(*hl > 0.0) || !hl.is_finite() {
                    return None;
                }
                f += sl / hl + hl.ln();
            }
            h_prev = h.clone();
            h_path.push(h);
        }
        let f = f / n as f64;
        f.is_finite().then_some((f, h_path))
    }

    /// Value and gradient with respect to `η`, by a reverse (adjoint) sweep
    /// through the recursion.
    pub fn value_and_gradient(&self, eta: &[f64]) -> (f64, Vec<f64>) {
        let p = self.params_from_eta(eta);
        let Some((f, h)) = self.forward(&p) else {
            return (f64::INFINITY, vec![0.0; self.dim()]);
        };
        let k = self.k;
        let n = self.s.len();
        let inv_n = 1.0 / n as f64;
        let mut grad_d = vec![0.0; k];
        let mut grad_a = vec![0.0; k * k];
        let mut grad_b = vec![0.0; k * k];
        let mut grad_g = vec![0.0; k * k];
        let mut lambda_next = vec![0.0; k];
        for t in (0..n).rev() {
            // λ_t = ∂f/∂h_t + Bᵀ λ_{t+1}
            let mut lambda = vec![0.0; k];
            for l in 0..k {
                let hl = h[t][l];
                let mut v = inv_n * (1.0 / hl - self.s[t][l] / (hl * hl));
                for m in 0..k {
                    v += p.b[m][l] * lambda_next[m];
                }
                lambda[l] = v;
            }
            let s_prev = if t == 0 { &self.init.squared_scores } else { &self.s[t - 1] };
            let h_prev = if t == 0 { &self.init.sigma2_scores } else { &h[t - 1] };
            let x_prev = match &self.x {
                Some(_) if t == 0 => self.init.x_scores.as_deref(),
                Some(x) => Some(x[t - 1].as_slice()),
                None => None,
            };
            for l in 0..k {
                grad_d[l] += lambda[l];
                for m in 0..k {
                    grad_a[l * k + m] += lambda[l] * s_prev[m];
                    grad_b[l * k + m] += lambda[l] * h_prev[m];
                    if let Some(x) = x_prev {
                        grad_g[l * k + m] += lambda[l] * x[m];
                    }
                }
            }
            lambda_next = lambda;
        }
        let mut grad: Vec<f64> = (0..k).map(|l| grad_d[l] * p.d[l]).collect();
        grad.extend(self.free.iter().map(|&i| grad_a[i] * p.a[i / k][i % k]));
        grad.extend(self.free.iter().map(|&i| grad_b[i] * p.b[i / k][i % k]));
        if let Some(g) = &p.g {
            grad.extend(self.free.iter().map(|&i| grad_g[i] * g[i / k][i % k]));
        }
        (f, grad)
    }
}

fn score_rows(basis: &FitBasis, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| basis.project(r)).collect()
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows[0].len();
    let mut m = vec![0.0; k];
    for r in rows {
        m.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    m.iter_mut().for_each(|a| *a /= rows.len() as f64);
    m
}

/// Seeded starting parameters. `D`, `A`, `B` come from one stream and `G`
/// from another, so adding an inactive `G` leaves the other draws unchanged.
fn starting_params(
    start: usize,
    seed: u64,
    s_mean: &[f64],
    s_abs_mean: &[f64],
    x_abs_mean: Option<&[f64]>,
    mask: &[bool],
) -> ProjectedParams {
    let k = s_mean.len();
    let mut rng = rng_for(seed, start as u64);
    let mut rng_g = rng_for(mix_seed(seed, 0x6A09_E667), start as u64);
    let mut p = ProjectedParams::zeros(k, x_abs_mean.is_some());
    for l in 0..k {
        let (a, b) = if start == 0 {
            (0.1, 0.6)
        } else {
            let a: f64 = rng.random_range(0.02..0.35);
            let b: f64 = rng.random_range(0.2..(0.92 - a));
            (a, b)
        };
        let level = if s_mean[l] > 0.0 { s_mean[l] } else { 1e-3 * s_abs_mean[l].max(1e-12) };
        p.d[l] = (level * (1.0 - a - b)).max(1e-6 * level);
        for m in 0..k {
            if !mask[l * k + m] {
                continue;
            }
            if l == m {
                p.a[l][m] = a;
                p.b[l][m] = b;
            } else {
                p.a[l][m] = 1e-3 * a;
                p.b[l][m] = 1e-3 * b;
            }
        }
    }
    if let (Some(g), Some(xm)) = (&mut p.g, x_abs_mean) {
        for l in 0..k {
            let scale = if xm[l] > 0.0 { s_abs_mean[l] / xm[l] } else { 1.0 };
            let gl: f64 = if start == 0 { 0.05 } else { rng_g.random_range(0.01..0.2) };
            for m in 0..k {
                if mask[l * k + m] {
                    g[l][m] = if l == m { gl * scale } else { 1e-3 * gl * scale };
                }
            }
        }
    }
    p
}

/// Quasi-maximum-likelihood fit on demeaned curves `ỹ_t`.
///
/// `basis` is reoriented so every function has a non-negative inner product
/// with `ω̂ = mean ỹ²`. After estimation `D`, `A`, `G` and the initial
/// variance scores are rescaled so that the residuals satisfy
/// `mean ε̂² = 1` over all grid points and days.
pub fn qmle_fit(
    spec: ModelSpec,
    demeaned: &CurveSeries,
    mean_curve: &[f64],
    basis: &FitBasis,
    x: Option<&CurveSeries>,
    options: &QmleOptions,
) -> Result<FGarchFit> {
    let n = demeaned.len();
    if n < 100 {
        return Err(Error::InsufficientData(format!("QMLE needs at least 100 curves, got {n}")));
    }
    if demeaned.grid() != &basis.grid || mean_curve.len() != basis.grid.len() {
        return Err(Error::Shape("curves, mean curve and basis must share a grid".into()));
    }
    if basis.k() == 0 {
        return Err(Error::Input("basis has no functions".into()));
    }
    if !(spec.variance_floor > 0.0) {
        return Err(Error::Config("variance floor must be positive".into()));
    }
    let x = match (spec.kind, x) {
        (ModelKind::Fgarchx, None) => {
            return Err(Error::Config("FGARCH-X needs an exogenous curve series".into()))
        }
        (ModelKind::Fgarch11, Some(_)) => {
            return Err(Error::Config("FGARCH(1,1) takes no exogenous curves".into()))
        }
        (_, x) => x,
    };
    if let Some(x) = x {
        if x.dates() != demeaned.dates() || x.grid() != demeaned.grid() {
            return Err(Error::Alignment("exogenous curves must share dates and grid with the returns".into()));
        }
    }

    let squared: Vec<Vec<f64>> = demeaned
        .values()
        .iter()
        .map(|r| r.iter().map(|v| v * v).collect())
        .collect();
    let omega_hat = column_means(&squared);
    if !(demeaned.grid().integral(&omega_hat) > 0.0) {
        return Err(Error::EstimationFailure(
            "degenerate likelihood: demeaned curves are identically zero".into(),
        ));
    }
    let basis = basis.oriented(&omega_hat);
    let s = score_rows(&basis, &squared)?;
    let xs = x.map(|x| score_rows(&basis, x.values())).transpose()?;
    let init = RecursionInit::new(&basis, &omega_hat, xs.as_ref().map(|v| column_means(v)))?;
    let objective = QmleObjective::new(&basis, s.clone(), xs.clone(), init.clone());

    let s_mean = column_means(&s);
    let abs = |rows: &[Vec<f64>]| {
        column_means(&rows.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect::<Vec<_>>())
    };
    let s_abs_mean = abs(&s);
    let x_abs_mean = xs.as_ref().map(|v| abs(v));
    let mask = basis.free_mask();

    let bfgs = BfgsOptions {
        max_iter: options.max_iter,
        f_tol: options.f_tol,
        ..BfgsOptions::default()
    };
    let mut candidates = Vec::new();
    if let Some(w) = &options.warm_start {
        if w.k() == basis.k() && w.g.is_some() == xs.is_some() {
            candidates.push(w.clone());
        }
    }
    for start in 0..options.starts {
        candidates.push(starting_params(
            start,
            options.seed,
            &s_mean,
            &s_abs_mean,
            x_abs_mean.as_deref(),
            &mask,
        ));
    }

    let mut best: Option<super::BfgsOutcome> = None;
    let mut succeeded = 0;
    for mut p in candidates {
        // shrink the loadings towards D until the start is admissible
        let mut eta = objective.eta_from_params(&p);
        let mut tries = 0;
        while !objective.value(&eta).is_finite() && tries < 40 {
            p.a.iter_mut().flatten().for_each(|v| *v *= 0.5);
            p.b.iter_mut().flatten().for_each(|v| *v *= 0.5);
            if let Some(g) = &mut p.g {
                g.iter_mut().flatten().for_each(|v| *v *= 0.5);
            }
            eta = objective.eta_from_params(&p);
            tries += 1;
        }
        let Some(out) = minimize(|e| objective.value_and_gradient(e), &eta, &bfgs) else {
            continue;
        };
        succeeded += 1;
        if best.as_ref().is_none_or(|b| out.f < b.f) {
            best = Some(out);
        }
    }
    let best = best.ok_or_else(|| {
        Error::EstimationFailure("no starting point gave a finite quasi-likelihood".into())
    })?;

    let mut params = objective.params_from_eta(&best.x);
    let mut init = init;
    let mut out = variance_recursion(&params, &basis, &s, xs.as_deref(), &init, spec.variance_floor)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for (y2, sig) in squared.iter().zip(&out.curves) {
        for (a, b) in y2.iter().zip(sig) {
            acc += a / b;
            count += 1;
        }
    }
    let rescale = acc / count as f64;
    if !rescale.is_finite() || rescale <= 0.0 {
        return Err(Error::Numeric {
            t: n - 1,
            message: "residual normalisation constant is not positive and finite".into(),
        });
    }
    out.curves.iter_mut().flatten().for_each(|v| *v *= rescale);
    out.scores.iter_mut().flatten().for_each(|v| *v *= rescale);
    params.d.iter_mut().for_each(|v| *v *= rescale);
    params.a.iter_mut().flatten().for_each(|v| *v *= rescale);
    if let Some(g) = &mut params.g {
        g.iter_mut().flatten().for_each(|v| *v *= rescale);
    }
    init.sigma2_scores.iter_mut().for_each(|v| *v *= rescale);

    let residual_rows: Vec<Vec<f64>> = demeaned
        .values()
        .iter()
        .zip(&out.curves)
        .map(|(y, sig)| y.iter().zip(sig).map(|(a, b)| a / b.sqrt()).collect())
        .collect();
    let dates = demeaned.dates().to_vec();
    let grid = demeaned.grid().clone();
    let sigma2 = CurveSeries::new(grid.clone(), dates.clone(), out.curves, CurveKind::Variance)?;
    let residuals = CurveSeries::new(grid, dates, residual_rows, CurveKind::Residual)?;

    Ok(FGarchFit {
        model: FittedModel {
            spec,
            basis,
            params,
            mean_curve: mean_curve.to_vec(),
            init,
        },
        sigma2,
        residuals,
        sigma2_scores: out.scores,
        squared_scores: s,
        x_scores: xs,
        loglik: -(n as f64) * best.f,
        objective: best.f,
        converged: best.converged,
        floor_engagements: out.floor_engagements,
        rescale,
        objective_trace: best.trace,
        starts_succeeded: succeeded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::IntradayGrid;
    use crate::fgarch::{simulate, BasisFamily, ErrorModel, SimulateOptions};

    fn const_basis(j: usize) -> FitBasis {
        FitBasis {
            grid: IntradayGrid::uniform(j).unwrap(),
            functions: vec![vec![1.0; j]],
            blocks: vec![1],
        }
    }

    fn simulated(n: usize, seed: u64) -> CurveSeries {
        let b = const_basis(20);
        simulate(
            &ProjectedParams::scalar(0.2, 0.3, 0.4),
            &b.grid,
            &b.functions,
            &ErrorModel::GaussianOu,
            n,
            seed,
            &SimulateOptions::default(),
        )
        .unwrap()
        .returns
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let y = simulated(300, 1);
        let b = const_basis(20);
        let sq: Vec<Vec<f64>> = y.values().iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
        let s = score_rows(&b, &sq).unwrap();
        let init = RecursionInit::new(&b, &column_means(&sq), None).unwrap();
        let obj = QmleObjective::new(&b, s, None, init);
        let eta = vec![(0.3f64).ln(), (0.2f64).ln(), (0.5f64).ln()];
        let (_, g) = obj.value_and_gradient(&eta);
        for i in 0..3 {
            let mut up = eta.clone();
            let mut dn = eta.clone();
            up[i] += 1e-5;
            dn[i] -= 1e-5;
            let fd = (obj.value(&up) - obj.value(&dn)) / 2e-5;
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1e-3), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn zero_input_fails() {
        let b = const_basis(5);
        let y = CurveSeries::new(
            b.grid.clone(),
            (0..120).map(|i| format!("d{i:04}")).collect(),
            vec![vec![0.0; 5]; 120],
            CurveKind::Generic,
        )
        .unwrap();
        let r = qmle_fit(
            ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
            &y,
            &[0.0; 5],
            &b,
            None,
            &QmleOptions::default(),
        );
        assert!(matches!(r, Err(Error::EstimationFailure(_))));
    }

    #[test]
    fn fit_normalises_residuals_and_is_monotone() {
        let y = simulated(400, 3);
        let b = const_basis(20);
        let fit = qmle_fit(
            ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
            &y,
            &[0.0; 20],
            &b,
            None,
            &QmleOptions::default(),
        )
        .unwrap();
        let r = fit.residuals.values();
        let m: f64 = r.iter().flatten().map(|e| e * e).sum::<f64>() / (400.0 * 20.0);
        assert!((m - 1.0).abs() < 1e-6);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.sigma2.values().iter().flatten().all(|v| *v >= 1e-8));
    }

    #[test]
    fn inactive_exogenous_term_matches_plain_model() {
        let y = simulated(300, 5);
        let b = const_basis(20);
        let zeros = CurveSeries::new(
            y.grid().clone(),
            y.dates().to_vec(),
            vec![vec![0.0; 20]; 300],
            CurveKind::Ocibas,
        )
        .unwrap();
        let opts = QmleOptions::default();
        let plain = qmle_fit(
            ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
            &y,
            &[0.0; 20],
            &b,
            None,
            &opts,
        )
        .unwrap();
        let with_x = qmle_fit(
            ModelSpec::new(ModelKind::Fgarchx, BasisFamily::Tfpca),
            &y,
            &[0.0; 20],
            &b,
            Some(&zeros),
            &opts,
        )
        .unwrap();
        assert!((plain.objective - with_x.objective).abs() < 1e-6);
        assert_eq!(plain.sigma2.values(), with_x.sigma2.values());
    }

    #[test]
    fn in_sample_forecast_consistency() {
        let y = simulated(200, 9);
        let b = const_basis(20);
        let fit = qmle_fit(
            ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
            &y,
            &[0.0; 20],
            &b,
            None,
            &QmleOptions::default(),
        )
        .unwrap();
        let t = 150;
        let sq: Vec<f64> = y.row(t).iter().map(|v| v * v).collect();
        let f = crate::fgarch::forecast_one_step(&fit.model, &sq, &fit.sigma2_scores[t], None).unwrap();
        assert_eq!(f.curve.as_slice(), fit.sigma2.row(t + 1));
    }

    #[test]
    fn document_round_trips() {
        let y = simulated(150, 2);
        let b = const_basis(20);
        let fit = qmle_fit(
            ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
            &y,
            &[0.0; 20],
            &b,
            None,
            &QmleOptions::default(),
        )
        .unwrap();
        let doc = fit.document();
        let back = crate::fgarch::FitDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(doc, back);
    }
}
