use serde::{Deserialize, Serialize};

use super::{project_onto, FitBasis, FittedModel, ProjectedParams};
use crate::basis::BasisSet;
use crate::error::{Error, Result};

/// Scores `s_l = ⟨curve, ψ_l⟩`.
pub fn project(curve: &[f64], basis: &BasisSet) -> Result<Vec<f64>> {
    project_onto(&basis.grid, &basis.functions, curve)
}

/// Starting values of the recursion at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionInit {
    /// `σ²_0` scores: projection of the unit constant function.
    pub sigma2_scores: Vec<f64>,
    /// `ỹ²_0` scores: projection of the mean squared curve `ω̂`.
    pub squared_scores: Vec<f64>,
    pub x_scores: Option<Vec<f64>>,
}

impl RecursionInit {
    pub fn new(basis: &FitBasis, omega_hat: &[f64], x_mean_scores: Option<Vec<f64>>) -> Result<Self> {
        Ok(Self {
            sigma2_scores: basis.project(&vec![1.0; basis.grid.len()])?,
            squared_scores: basis.project(omega_hat)?,
            x_scores: x_mean_scores,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionOutput {
    /// `h_t`, one row per day.
    pub scores: Vec<Vec<f64>>,
    /// Floored `σ²_t(u)`.
    pub curves: Vec<Vec<f64>>,
    /// Grid points where the floor replaced the reconstruction.
    pub floor_engagements: usize,
}

/// Floors a reconstructed curve, returning how many points were raised.
pub(crate) fn floor_curve(curve: &mut [f64], floor: f64) -> usize {
    let mut n = 0;
    for v in curve.iter_mut() {
        if *v < floor {
            *v = floor;
            n += 1;
        }
    }
    n
}

/// Runs `h_t = D + A s_{t−1} + B h_{t−1} [+ G x_{t−1}]` over `t = 1..N`, with
/// the `t = 0` quantities taken from `init`.
pub fn variance_recursion(
    params: &ProjectedParams,
    basis: &FitBasis,
    squared_scores: &[Vec<f64>],
    x_scores: Option<&[Vec<f64>]>,
    init: &RecursionInit,
    floor: f64,
) -> Result<RecursionOutput> {
    let k = basis.k();
    if params.k() != k || init.sigma2_scores.len() != k || init.squared_scores.len() != k {
        return Err(Error::Shape(format!("recursion expects {k} scores")));
    }
    if squared_scores.iter().any(|r| r.len() != k) {
        return Err(Error::Shape(format!("squared scores must have {k} columns")));
    }
    if let Some(x) = x_scores {
        if x.len() != squared_scores.len() {
            return Err(Error::Alignment(format!(
                "{} exogenous score rows for {} squared score rows",
                x.len(),
                squared_scores.len()
            )));
        }
    }
    let n = squared_scores.len();
    let mut scores = Vec::with_capacity(n);
    let mut curves = Vec::with_capacity(n);
    let mut floor_engagements = 0;
    let mut h_prev = init.sigma2_scores.clone();
    for t in 0..n {
        let s_prev: &[f64] = if t == 0 { &init.squared_scores } else { &squared_scores[t - 1] };
        let x_prev = match x_scores {
            Some(_) if t == 0 => init.x_scores.as_deref(),
            Some(x) => Some(x[t - 1].as_slice()),
            None => None,
        };
        let h = params.step(s_prev, &h_prev, x_prev);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                t,
                message: "variance scores became non-finite".into(),
            });
        }
        let mut curve = basis.reconstruct(&h);
        floor_engagements += floor_curve(&mut curve, floor);
        curves.push(curve);
        h_prev = h.clone();
        scores.push(h);
    }
    Ok(RecursionOutput {
        scores,
        curves,
        floor_engagements,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStepForecast {
    pub scores: Vec<f64>,
    /// Floored `σ̂²_{t+1}(u)`; the last element is the close-to-close forecast.
    pub curve: Vec<f64>,
    pub floor_engagements: usize,
}

impl OneStepForecast {
    pub fn closing(&self) -> f64 {
        *self.curve.last().expect("non-empty grid")
    }
}

/// `σ̂²_{t+1}` from the day-`t` squared demeaned curve, day-`t` variance scores
/// and, for FGARCH-X, the day-`t` exogenous curve.
pub fn forecast_one_step(
    model: &FittedModel,
    latest_squared: &[f64],
    latest_sigma2_scores: &[f64],
    latest_x: Option<&[f64]>,
) -> Result<OneStepForecast> {
    let s = model.basis.project(latest_squared)?;
    let x = latest_x.map(|x| model.basis.project(x)).transpose()?;
    forecast_from_scores(model, &s, latest_sigma2_scores, x.as_deref())
}

pub(crate) fn forecast_from_scores(
    model: &FittedModel,
    s: &[f64],
    h: &[f64],
    x: Option<&[f64]>,
) -> Result<OneStepForecast> {
    let k = model.basis.k();
    if h.len() != k || s.len() != k {
        return Err(Error::Shape(format!("forecast expects {k} scores")));
    }
    if model.params.g.is_some() && x.is_none() {
        return Err(Error::Input("FGARCH-X forecast needs the latest exogenous curve".into()));
    }
    // one step of the same recursion used in-sample
    let init = RecursionInit {
        sigma2_scores: h.to_vec(),
        squared_scores: s.to_vec(),
        x_scores: x.map(|v| v.to_vec()),
    };
    let placeholder = vec![vec![0.0; k]];
    let xs = x.map(|_| placeholder.clone());
    let out = variance_recursion(
        &model.params,
        &model.basis,
        &placeholder,
        xs.as_deref(),
        &init,
        model.spec.variance_floor,
    )?;
    Ok(OneStepForecast {
        scores: out.scores[0].clone(),
        curve: out.curves[0].clone(),
        floor_engagements: out.floor_engagements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::IntradayGrid;
    use crate::fgarch::{BasisFamily, ModelKind, ModelSpec};

    fn const_basis(j: usize) -> FitBasis {
        FitBasis {
            grid: IntradayGrid::uniform(j).unwrap(),
            functions: vec![vec![1.0; j]],
            blocks: vec![1],
        }
    }

    fn cosine_basis(j: usize, k: usize) -> FitBasis {
        let grid = IntradayGrid::uniform(j).unwrap();
        let mut functions: Vec<Vec<f64>> = Vec::new();
        for l in 0..k {
            let mut f: Vec<f64> = grid
                .points()
                .iter()
                .map(|u| (std::f64::consts::PI * l as f64 * u).cos())
                .collect();
            for q in &functions {
                let c = grid.inner(&f, q);
                f.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let n = grid.norm(&f);
            f.iter_mut().for_each(|a| *a /= n);
            functions.push(f);
        }
        FitBasis {
            grid,
            functions,
            blocks: vec![k],
        }
    }

    #[test]
    fn projection_of_scaled_basis_function() {
        let b = cosine_basis(41, 3);
        let curve: Vec<f64> = b.functions[0].iter().map(|v| 2.0 * v).collect();
        let s = b.project(&curve).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
        assert_eq!(b.project(&[0.0; 41]).unwrap(), vec![0.0; 3]);
        assert!(matches!(b.project(&[0.0; 40]), Err(Error::Shape(_))));
    }

    #[test]
    fn projection_residual_matches_dense_least_squares() {
        // oracle: weighted least squares via the normal equations
        let b = cosine_basis(31, 3);
        let grid = &b.grid;
        let curve: Vec<f64> = grid.points().iter().map(|u| (3.0 * u).exp() - u * u).collect();
        let s = b.project(&curve).unwrap();
        let recon = b.reconstruct(&s);
        let resid: Vec<f64> = curve.iter().zip(&recon).map(|(a, r)| a - r).collect();
        let gram = nalgebra::DMatrix::from_fn(3, 3, |i, j| grid.inner(&b.functions[i], &b.functions[j]));
        let rhs = nalgebra::DVector::from_fn(3, |i, _| grid.inner(&curve, &b.functions[i]));
        let coef = gram.lu().solve(&rhs).unwrap();
        let mut dense = curve.clone();
        for i in 0..3 {
            dense.iter_mut().zip(&b.functions[i]).for_each(|(d, f)| *d -= coef[i] * f);
        }
        assert!((grid.norm(&resid) - grid.norm(&dense)).abs() < 1e-12);
    }

    #[test]
    fn recursion_collapses_without_dynamics() {
        let b = cosine_basis(11, 2);
        let mut p = ProjectedParams::zeros(2, false);
        p.d = vec![0.5, 0.1];
        let init = RecursionInit::new(&b, &[1.0; 11], None).unwrap();
        let s = vec![vec![3.0, -1.0]; 5];
        let out = variance_recursion(&p, &b, &s, None, &init, 1e-8).unwrap();
        let expected = b.reconstruct(&p.d);
        for c in &out.curves {
            for (v, e) in c.iter().zip(&expected) {
                assert_eq!(*v, e.max(1e-8));
            }
        }
    }

    #[test]
    fn scalar_recursion_reaches_fixed_point() {
        let b = const_basis(5);
        let p = ProjectedParams::scalar(0.1, 0.2, 0.5);
        let init = RecursionInit {
            sigma2_scores: vec![1.0],
            squared_scores: vec![1.0],
            x_scores: None,
        };
        let s = vec![vec![1.0]; 200];
        let out = variance_recursion(&p, &b, &s, None, &init, 1e-8).unwrap();
        // h* = (0.1 + 0.2·1) / (1 − 0.5)
        assert!((out.scores[199][0] - 0.6).abs() < 1e-12);
        // first steps by hand
        assert!((out.scores[0][0] - (0.1 + 0.2 + 0.5)).abs() < 1e-15);
        assert!((out.scores[1][0] - (0.1 + 0.2 + 0.5 * 0.8)).abs() < 1e-15);
    }

    #[test]
    fn floor_is_counted() {
        let b = cosine_basis(11, 2);
        let mut p = ProjectedParams::zeros(2, false);
        p.d = vec![0.1, 1.0];
        let init = RecursionInit::new(&b, &[1.0; 11], None).unwrap();
        let out = variance_recursion(&p, &b, &[vec![0.0, 0.0]], None, &init, 1e-8).unwrap();
        let raw = b.reconstruct(&p.d);
        let below = raw.iter().filter(|v| **v < 1e-8).count();
        assert!(below > 0);
        assert_eq!(out.floor_engagements, below);
        assert!(out.curves[0].iter().all(|v| *v >= 1e-8));
    }

    #[test]
    fn non_finite_reports_time() {
        let b = const_basis(3);
        let p = ProjectedParams::scalar(0.1, 1.0, 0.0);
        let init = RecursionInit {
            sigma2_scores: vec![1.0],
            squared_scores: vec![1.0],
            x_scores: None,
        };
        let s = vec![vec![1.0], vec![f64::INFINITY], vec![1.0]];
        match variance_recursion(&p, &b, &s, None, &init, 1e-8) {
            Err(Error::Numeric { t, .. }) => assert_eq!(t, 2),
            other => panic!("{other:?}"),
        }
    }

    fn model(params: ProjectedParams, basis: FitBasis) -> FittedModel {
        let init = RecursionInit::new(&basis, &vec![1.0; basis.grid.len()], None).unwrap();
        FittedModel {
            spec: ModelSpec::new(ModelKind::Fgarch11, BasisFamily::Tfpca),
            mean_curve: vec![0.0; basis.grid.len()],
            basis,
            params,
            init,
        }
    }

    #[test]
    fn forecast_without_dynamics_is_intercept() {
        let b = cosine_basis(9, 2);
        let mut p = ProjectedParams::zeros(2, false);
        p.d = vec![0.4, 0.05];
        let m = model(p, b.clone());
        let f = forecast_one_step(&m, &[7.0; 9], &[3.0, 1.0], None).unwrap();
        let expected = b.reconstruct(&[0.4, 0.05]);
        for (v, e) in f.curve.iter().zip(&expected) {
            assert_eq!(*v, e.max(1e-8));
        }
    }

    #[test]
    fn scalar_forecast_by_hand() {
        let b = const_basis(4);
        let m = model(ProjectedParams::scalar(0.1, 0.2, 0.5), b);
        // h_t = 0.6, ỹ²_t ≡ 2 → h_{t+1} = 0.1 + 0.4 + 0.3
        let f = forecast_one_step(&m, &[2.0; 4], &[0.6], None).unwrap();
        assert!((f.scores[0] - 0.8).abs() < 1e-15);
        assert!((f.closing() - 0.8).abs() < 1e-15);
    }
}
