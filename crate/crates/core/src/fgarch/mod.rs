//! Functional GARCH(1,1) and GARCH-X models in projected (score) coordinates.
//!
//! A conditional-variance curve is carried by its scores `h_t` on an
//! orthonormal basis `ψ_1..ψ_K`:
//!
//! ```text
//! h_t = D + A s_{t−1} + B h_{t−1} [+ G x_{t−1}],   σ²_t(u) = Σ_l h_{t,l} ψ_l(u)
//! ```
//!
//! where `s_t` are the scores of the squared demeaned curve and `x_t` those of
//! an exogenous curve.

mod optim;
mod qmle;
mod recursion;
mod simulate;

pub use optim::{minimize, BfgsOptions, BfgsOutcome};
pub use qmle::{qmle_fit, QmleObjective, QmleOptions};
pub use recursion::{
    forecast_one_step, project, variance_recursion, OneStepForecast, RecursionInit,
    RecursionOutput,
};
pub use simulate::{
    business_dates, ou_error_curve, simulate, simulate_with_errors, ErrorModel, SimulateOptions,
    SimulatedPath,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::curves::{CurveSeries, IntradayGrid};
use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "FGARCH11")]
    Fgarch11,
    #[serde(rename = "FGARCHX")]
    Fgarchx,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Fgarch11 => "FGARCH11",
            ModelKind::Fgarchx => "FGARCHX",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "FGARCH11" | "FGARCH" => Some(ModelKind::Fgarch11),
            "FGARCHX" | "FGARCH-X" => Some(ModelKind::Fgarchx),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BasisFamily {
    Tfpca,
    Dfpca,
    Lfpca,
    Mfpca,
}

impl BasisFamily {
    pub const ALL: [BasisFamily; 4] = [
        BasisFamily::Tfpca,
        BasisFamily::Dfpca,
        BasisFamily::Lfpca,
        BasisFamily::Mfpca,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BasisFamily::Tfpca => "TFPCA",
            BasisFamily::Dfpca => "DFPCA",
            BasisFamily::Lfpca => "LFPCA",
            BasisFamily::Mfpca => "MFPCA",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        BasisFamily::ALL.into_iter().find(|b| b.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub basis_method: BasisFamily,
    pub variance_floor: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, basis_method: BasisFamily) -> Self {
        Self {
            kind,
            basis_method,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

/// Orthonormal functions used for projection, partitioned into blocks.
/// Parameters only couple scores inside the same block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBasis {
    pub grid: IntradayGrid,
    pub functions: Vec<Vec<f64>>,
    pub blocks: Vec<usize>,
}

impl FitBasis {
    pub fn from_basis(basis: &BasisSet) -> Self {
        Self {
            grid: basis.grid.clone(),
            functions: basis.functions.clone(),
            blocks: vec![basis.k()],
        }
    }

    /// Common functions followed by the specific ones orthonormalised against
    /// them. Specific functions (nearly) inside the common span are dropped.
    pub fn multilevel(common: &BasisSet, specific: &BasisSet) -> Result<Self> {
        if common.grid != specific.grid {
            return Err(Error::Shape("common and specific bases use different grids".into()));
        }
        let grid = common.grid.clone();
        let mut functions = common.functions.clone();
        let mut kept = 0;
        for f in &specific.functions {
            let mut v = f.clone();
            for _ in 0..2 {
                for q in &functions {
                    let c = grid.inner(&v, q);
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
                }
            }
            let norm = grid.norm(&v);
            if norm > 1e-6 {
                v.iter_mut().for_each(|a| *a /= norm);
                functions.push(v);
                kept += 1;
            }
        }
        let mut blocks = vec![common.k()];
        if kept > 0 {
            blocks.push(kept);
        }
        Ok(Self {
            grid,
            functions,
            blocks,
        })
    }

    pub fn k(&self) -> usize {
        self.functions.len()
    }

    /// Block index of each function.
    pub fn block_of(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| std::iter::repeat(b).take(n))
            .collect()
    }

    /// Row-major `K×K` mask of entries that may be non-zero.
    pub fn free_mask(&self) -> Vec<bool> {
        let block = self.block_of();
        let k = self.k();
        (0..k * k).map(|i| block[i / k] == block[i % k]).collect()
    }

    pub fn project(&self, curve: &[f64]) -> Result<Vec<f64>> {
        project_onto(&self.grid, &self.functions, curve)
    }

    /// `Σ_l scores_l ψ_l(u)` without flooring.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (s, f) in scores.iter().zip(&self.functions) {
            out.iter_mut().zip(f).for_each(|(o, v)| *o += s * v);
        }
        out
    }

    /// Flips every function whose inner product with `reference` is negative.
    pub fn oriented(&self, reference: &[f64]) -> Self {
        let mut out = self.clone();
        for f in &mut out.functions {
            if self.grid.inner(f, reference) < 0.0 {
                f.iter_mut().for_each(|v| *v = -*v);
            }
        }
        out
    }
}

pub(crate) fn project_onto(grid: &IntradayGrid, functions: &[Vec<f64>], curve: &[f64]) -> Result<Vec<f64>> {
    if curve.len() != grid.len() {
        return Err(Error::Shape(format!(
            "curve has {} points, basis grid has {}",
            curve.len(),
            grid.len()
        )));
    }
    Ok(functions.iter().map(|f| grid.inner(curve, f)).collect())
}

/// `D`, `A`, `B` and optionally `G`; matrices are stored as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedParams {
    pub d: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub g: Option<Vec<Vec<f64>>>,
}

impl ProjectedParams {
    pub fn k(&self) -> usize {
        self.d.len()
    }

    pub fn zeros(k: usize, with_g: bool) -> Self {
        let m = vec![vec![0.0; k]; k];
        Self {
            d: vec![0.0; k],
            a: m.clone(),
            b: m.clone(),
            g: with_g.then_some(m),
        }
    }

    /// Scalar `K = 1` parameters.
    pub fn scalar(d: f64, a: f64, b: f64) -> Self {
        Self {
            d: vec![d],
            a: vec![vec![a]],
            b: vec![vec![b]],
            g: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let square = |m: &Vec<Vec<f64>>| m.len() == k && m.iter().all(|r| r.len() == k);
        if !square(&self.a) || !square(&self.b) || self.g.as_ref().is_some_and(|g| !square(g)) {
            return Err(Error::Shape(format!("parameter matrices must be {k}×{k}")));
        }
        let all = self
            .d
            .iter()
            .chain(self.a.iter().flatten())
            .chain(self.b.iter().flatten())
            .chain(self.g.iter().flatten().flatten());
        for &v in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("parameter value {v} is not a finite non-negative number")));
            }
        }
        Ok(())
    }

    /// Spectral radius of `B`.
    pub fn b_spectral_radius(&self) -> f64 {
        let k = self.k();
        if k == 0 {
            return 0.0;
        }
        let m = DMatrix::from_fn(k, k, |i, j| self.b[i][j]);
        m.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// One step of the score recursion.
    pub fn step(&self, s_prev: &[f64], h_prev: &[f64], x_prev: Option<&[f64]>) -> Vec<f64> {
        let k = self.k();
        (0..k)
            .map(|l| {
                let mut v = self.d[l];
                for m in 0..k {
                    v += self.a[l][m] * s_prev[m];
                }
                for m in 0..k {
                    v += self.b[l][m] * h_prev[m];
                }
                if let (Some(g), Some(x)) = (&self.g, x_prev) {
                    for m in 0..k {
                        v += g[l][m] * x[m];
                    }
                }
                v
            })
            .collect()
    }
}

/// Everything needed to continue the recursion and forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub basis: FitBasis,
    pub params: ProjectedParams,
    pub mean_curve: Vec<f64>,
    pub init: RecursionInit,
}

/// A fitted FGARCH / FGARCH-X model with its in-sample output.
#[derive(Debug, Clone)]
pub struct FGarchFit {
    pub model: FittedModel,
    pub sigma2: CurveSeries,
    pub residuals: CurveSeries,
    /// In-sample variance scores `h_t`.
    pub sigma2_scores: Vec<Vec<f64>>,
    /// Scores of the squared demeaned curves.
    pub squared_scores: Vec<Vec<f64>>,
    pub x_scores: Option<Vec<Vec<f64>>>,
    /// Maximised quasi log-likelihood `−N·objective`, before rescaling.
    pub loglik: f64,
    pub objective: f64,
    pub converged: bool,
    pub floor_engagements: usize,
    /// Factor applied by the `E ε² = 1` normalisation.
    pub rescale: f64,
    /// Objective path of the winning start.
    pub objective_trace: Vec<f64>,
    pub starts_succeeded: usize,
}

impl FGarchFit {
    pub fn document(&self) -> FitDocument {
        FitDocument {
            model: self.model.clone(),
            loglik: self.loglik,
            converged: self.converged,
            floor_engagements: self.floor_engagements,
        }
    }

    /// Forecast for the day after the last in-sample curve.
    pub fn forecast_next(&self, x_last: Option<&[f64]>) -> Result<OneStepForecast> {
        let n = self.sigma2_scores.len();
        let last_sq = self.squared_scores[n - 1].clone();
        let h = self.sigma2_scores[n - 1].clone();
        recursion::forecast_from_scores(&self.model, &last_sq, &h, match (x_last, &self.x_scores) {
            (Some(x), _) => Some(self.model.basis.project(x)?),
            (None, Some(xs)) => Some(xs[n - 1].clone()),
            (None, None) => None,
        }.as_deref())
    }
}

/// Serialised form of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub model: FittedModel,
    pub loglik: f64,
    pub converged: bool,
    pub floor_engagements: usize,
}

impl FitDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
