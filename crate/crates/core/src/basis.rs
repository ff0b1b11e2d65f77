//! Data-driven basis functions for squared return curves.
//!
//! Every basis family is an eigendecomposition of some covariance kernel of the
//! squared curves, differing only in which kernel:
//!
//! | family | kernel |
//! |--------|--------|
//! | TFPCA  | lag-0 sample covariance |
//! | DFPCA  | Bartlett long-run covariance `Σ_{|ℓ|≤h} (1−|ℓ|/h) r̂_ℓ` |
//! | LFPCA  | unnormalised Bartlett long-run covariance (stationary) or `(1/N) Σ y²⊗y²` (non-stationary) |
//! | MFPCA  | long-run covariances of the common and asset-specific parts of a multi-level split |
//!
//! Kernels are discretised on the intraday grid and decomposed under trapezoid
//! quadrature, so returned functions satisfy `∫ψ_l ψ_k = δ_lk`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curves::{grid_column_names, CurveKind, CurveSeries, IntradayGrid};
use crate::error::{Error, Result};
use crate::stats::cube_root_lag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BasisMethod {
    Tfpca,
    Dfpca,
    Lfpca,
    MfpcaCommon,
    MfpcaSpecific,
}

impl BasisMethod {
    pub fn label(self) -> &'static str {
        match self {
            BasisMethod::Tfpca => "TFPCA",
            BasisMethod::Dfpca => "DFPCA",
            BasisMethod::Lfpca => "LFPCA",
            BasisMethod::MfpcaCommon => "MFPCA_COMMON",
            BasisMethod::MfpcaSpecific => "MFPCA_SPECIFIC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "TFPCA" => BasisMethod::Tfpca,
            "DFPCA" => BasisMethod::Dfpca,
            "LFPCA" => BasisMethod::Lfpca,
            "MFPCA_COMMON" => BasisMethod::MfpcaCommon,
            "MFPCA_SPECIFIC" => BasisMethod::MfpcaSpecific,
            _ => return None,
        })
    }
}

/// Orthonormal basis functions with their eigenvalues and explained-variation shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub grid: IntradayGrid,
    /// `K` rows of `J` values.
    pub functions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub variation_explained: Vec<f64>,
    pub method: BasisMethod,
}

impl BasisSet {
    pub fn k(&self) -> usize {
        self.functions.len()
    }

    /// Keeps the leading `k` functions.
    pub fn truncated(&self, k: usize) -> BasisSet {
        let k = k.min(self.k());
        BasisSet {
            grid: self.grid.clone(),
            functions: self.functions[..k].to_vec(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            variation_explained: self.variation_explained[..k].to_vec(),
            method: self.method,
        }
    }

    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (l, a) in self.functions.iter().enumerate() {
            for (k, b) in self.functions.iter().enumerate() {
                let target = if l == k { 1.0 } else { 0.0 };
                worst = worst.max((self.grid.inner(a, b) - target).abs());
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["method", "index", "eigenvalue", "share"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(grid_column_names(self.grid.len()));
        w.write_record(&header)?;
        for (l, f) in self.functions.iter().enumerate() {
            let mut rec = vec![
                self.method.label().to_string(),
                (l + 1).to_string(),
                self.eigenvalues[l].to_string(),
                self.variation_explained[l].to_string(),
            ];
            rec.extend(f.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<BasisSet> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 5 || headers.get(0) != Some("method") {
            return Err(Error::Parse {
                line: 1,
                message: "basis CSV must have method,index,eigenvalue,share,u_0001..".into(),
            });
        }
        let grid = IntradayGrid::uniform(headers.len() - 4)?;
        let mut method = None;
        let (mut functions, mut eigenvalues, mut shares) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("'{s}' is not a number"),
                })
            };
            method = Some(BasisMethod::parse(&rec[0]).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown basis method '{}'", &rec[0]),
            })?);
            eigenvalues.push(num(&rec[2])?);
            shares.push(num(&rec[3])?);
            functions.push(rec.iter().skip(4).map(num).collect::<Result<Vec<_>>>()?);
        }
        let method = method.ok_or_else(|| Error::Parse {
            line: 2,
            message: "basis CSV has no rows".into(),
        })?;
        Ok(BasisSet {
            grid,
            functions,
            eigenvalues,
            variation_explained: shares,
            method,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KernelNormalization {
    Lag0,
    BartlettLongrun,
    UnnormalizedLr,
    NonstationarySum,
}

/// A symmetric covariance kernel `c(u_i, u_j)` on the grid.
#[derive(Debug, Clone)]
pub struct CovKernel {
    pub grid: IntradayGrid,
    pub matrix: DMatrix<f64>,
    pub normalization: KernelNormalization,
}

fn centered_matrix(series: &CurveSeries) -> DMatrix<f64> {
    let mean = series.mean_curve();
    DMatrix::from_fn(series.len(), series.j(), |t, u| series.row(t)[u] - mean[u])
}

fn raw_matrix(series: &CurveSeries) -> DMatrix<f64> {
    DMatrix::from_fn(series.len(), series.j(), |t, u| series.row(t)[u])
}

/// `r̂_ℓ(u, v) = (1/N) Σ_{t=1}^{N−ℓ} ỹ_t(u) ỹ_{t+ℓ}(v)` from a centred `N×J` matrix.
fn lag_cov(centered: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let n = centered.nrows();
    let rows = n - lag;
    let lead = centered.rows(0, rows);
    let lagged = centered.rows(lag, rows);
    (lead.transpose() * lagged) / n as f64
}

/// Lag-0 sample covariance of the (internally demeaned) curves.
pub fn lag0_kernel(series: &CurveSeries) -> CovKernel {
    let x = centered_matrix(series);
    CovKernel {
        grid: series.grid().clone(),
        matrix: lag_cov(&x, 0),
        normalization: KernelNormalization::Lag0,
    }
}

/// Bartlett-weighted long-run covariance `Σ_{|ℓ|≤h} (1 − |ℓ|/h) r̂_ℓ`.
///
/// `h = 0` returns the lag-0 covariance unchanged.
pub fn long_run_kernel(series: &CurveSeries, bandwidth: usize) -> Result<CovKernel> {
    if bandwidth >= series.len() {
        return Err(Error::Input(format!(
            "bandwidth {bandwidth} must be smaller than the sample size {}",
            series.len()
        )));
    }
    let x = centered_matrix(series);
    let mut c = lag_cov(&x, 0);
    for lag in 1..bandwidth {
        let w = 1.0 - lag as f64 / bandwidth as f64;
        let r = lag_cov(&x, lag);
        c += (&r + r.transpose()) * w;
    }
    Ok(CovKernel {
        grid: series.grid().clone(),
        matrix: c,
        normalization: KernelNormalization::BartlettLongrun,
    })
}

/// `(1/N) Σ_t y_t ⊗ y_t` of the raw, non-demeaned curves.
pub fn nonstationary_kernel(series: &CurveSeries) -> CovKernel {
    let x = raw_matrix(series);
    CovKernel {
        grid: series.grid().clone(),
        matrix: lag_cov(&x, 0),
        normalization: KernelNormalization::NonstationarySum,
    }
}

fn default_method(n: KernelNormalization) -> BasisMethod {
    match n {
        KernelNormalization::Lag0 => BasisMethod::Tfpca,
        KernelNormalization::BartlettLongrun => BasisMethod::Dfpca,
        KernelNormalization::UnnormalizedLr | KernelNormalization::NonstationarySum => {
            BasisMethod::Lfpca
        }
    }
}

/// Leading `max_k` eigenpairs of the integral operator of `kernel`.
///
/// Functions are normalised to `∫ψ² = 1` and oriented so that `∫ψ > 0`
/// (largest-magnitude coordinate positive when the integral vanishes).
/// Shares are `λ_l / Σ λ` over all non-negative eigenvalues.
pub fn eigendecompose(kernel: &CovKernel, max_k: usize) -> Result<BasisSet> {
    let grid = &kernel.grid;
    let j = grid.len();
    let c = &kernel.matrix;
    if c.nrows() != j || c.ncols() != j {
        return Err(Error::Shape(format!(
            "kernel is {}×{}, grid has {j} points",
            c.nrows(),
            c.ncols()
        )));
    }
    if max_k > j {
        return Err(Error::Input(format!("max_K = {max_k} exceeds J = {j}")));
    }
    let scale = c.amax().max(f64::MIN_POSITIVE);
    let asym = (c - c.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Input(format!(
            "kernel is not symmetric (max asymmetry {asym:e})"
        )));
    }

    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut m = DMatrix::from_fn(j, j, |a, b| sw[a] * c[(a, b)] * sw[b]);
    m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().filter(|v| **v > 0.0).sum();

    let mut functions = Vec::with_capacity(max_k);
    let mut eigenvalues = Vec::with_capacity(max_k);
    let mut shares = Vec::with_capacity(max_k);
    for &idx in order.iter().take(max_k) {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let v = eig.eigenvectors.column(idx);
        let mut psi: Vec<f64> = (0..j).map(|a| v[a] / sw[a]).collect();
        let norm = grid.norm(&psi);
        psi.iter_mut().for_each(|p| *p /= norm);
        orient(grid, &mut psi);
        functions.push(psi);
        eigenvalues.push(lambda);
        shares.push(if total > 0.0 { lambda / total } else { 0.0 });
    }
    Ok(BasisSet {
        grid: grid.clone(),
        functions,
        eigenvalues,
        variation_explained: shares,
        method: default_method(kernel.normalization),
    })
}

fn orient(grid: &IntradayGrid, psi: &mut [f64]) {
    let integral = grid.integral(psi);
    let flip = if integral.abs() > 1e-10 {
        integral < 0.0
    } else {
        let (mut best, mut val) = (0.0f64, 0.0);
        for &p in psi.iter() {
            if p.abs() > best {
                best = p.abs();
                val = p;
            }
        }
        val < 0.0
    };
    if flip {
        psi.iter_mut().for_each(|p| *p = -*p);
    }
}

/// Eigenvalue-ratio dimension choice: `argmin_{1≤l≤L̄} λ_{l+1}/λ_l`, ties to the smallest `l`.
pub fn eigenvalue_ratio(eigenvalues: &[f64], l_bar: usize) -> Result<usize> {
    if l_bar < 1 {
        return Err(Error::Input("L_bar must be at least 1".into()));
    }
    if eigenvalues.len() < l_bar + 1 {
        return Err(Error::Input(format!(
            "need {} eigenvalues for L_bar = {l_bar}, got {}",
            l_bar + 1,
            eigenvalues.len()
        )));
    }
    let lead = eigenvalues[0];
    if !(lead > 0.0) {
        return Err(Error::Degenerate("leading eigenvalue is not positive".into()));
    }
    let floor = 1e-12 * lead;
    let lam = |i: usize| eigenvalues[i].max(floor);
    let mut best = 1;
    let mut best_ratio = f64::INFINITY;
    for l in 1..=l_bar {
        let ratio = lam(l) / lam(l - 1);
        if ratio < best_ratio {
            best_ratio = ratio;
            best = l;
        }
    }
    Ok(best)
}

/// Decomposes with `L̄ = l_bar` candidates and keeps the eigenvalue-ratio choice.
pub fn select_by_ratio(kernel: &CovKernel, l_bar: usize) -> Result<BasisSet> {
    let l_bar = l_bar.min(kernel.grid.len().saturating_sub(1)).max(1);
    let full = eigendecompose(kernel, (l_bar + 1).min(kernel.grid.len()))?;
    if full.eigenvalues.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::Degenerate("kernel has no positive eigenvalue".into()));
    }
    if full.k() < 2 {
        return Ok(full);
    }
    let k = eigenvalue_ratio(&full.eigenvalues, l_bar.min(full.k() - 1))?;
    Ok(full.truncated(k))
}

fn require_rows(series: &CurveSeries, min: usize, what: &str) -> Result<()> {
    if series.len() < min {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {min} curves, got {}",
            series.len()
        )));
    }
    Ok(())
}

fn nondegenerate(basis: BasisSet) -> Result<BasisSet> {
    if basis.eigenvalues.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::Degenerate(
            "covariance of the squared curves is zero".into(),
        ));
    }
    Ok(basis)
}

/// Truncated FPCA: eigenfunctions of the lag-0 covariance.
pub fn tfpca(squared: &CurveSeries, max_k: usize) -> Result<BasisSet> {
    require_rows(squared, 2, "TFPCA")?;
    nondegenerate(eigendecompose(&lag0_kernel(squared), max_k)?)
}

/// Dynamic FPCA: eigenfunctions of the Bartlett long-run covariance.
/// Default bandwidth `⌊N^{1/3}⌋`.
pub fn dfpca(squared: &CurveSeries, max_k: usize, bandwidth: Option<usize>) -> Result<BasisSet> {
    require_rows(squared, 10, "DFPCA")?;
    let h = bandwidth.unwrap_or_else(|| cube_root_lag(squared.len()));
    let mut b = eigendecompose(&long_run_kernel(squared, h)?, max_k)?;
    b.method = BasisMethod::Dfpca;
    nondegenerate(b)
}

/// Long-range dependent FPCA.
///
/// The memory-parameter normalisations only rescale the kernel, so they are
/// dropped: the stationary branch is the Bartlett long-run kernel multiplied by
/// `h` (identical eigenfunctions to DFPCA), the non-stationary branch is the raw
/// sum of tensor products.
pub fn lfpca(
    squared: &CurveSeries,
    max_k: usize,
    stationary: bool,
    bandwidth: Option<usize>,
) -> Result<BasisSet> {
    require_rows(squared, 50, "LFPCA")?;
    let mut b = if stationary {
        let h = bandwidth.unwrap_or_else(|| cube_root_lag(squared.len()));
        let mut b = eigendecompose(&long_run_kernel(squared, h)?, max_k)?;
        let factor = h.max(1) as f64;
        b.eigenvalues.iter_mut().for_each(|l| *l *= factor);
        b
    } else {
        eigendecompose(&nonstationary_kernel(squared), max_k)?
    };
    b.method = BasisMethod::Lfpca;
    nondegenerate(b)
}

/// Common/asset-specific split of a multi-asset squared-curve panel.
#[derive(Debug, Clone)]
pub struct MultiLevelDecomposition {
    pub mu_common: Vec<f64>,
    pub mu_specific: Vec<Vec<f64>>,
    pub u_common: CurveSeries,
    pub u_specific: Vec<CurveSeries>,
}

impl MultiLevelDecomposition {
    /// `μ_c + μ_j + U_{c,t} + U_{j,t}` at grid index `u`.
    pub fn reconstruct(&self, asset: usize, t: usize, u: usize) -> f64 {
        self.mu_common[u]
            + self.mu_specific[asset][u]
            + self.u_common.row(t)[u]
            + self.u_specific[asset].row(t)[u]
    }
}

#[derive(Debug, Clone)]
pub struct MfpcaResult {
    pub decomposition: MultiLevelDecomposition,
    pub common: BasisSet,
    pub specific: Vec<BasisSet>,
}

/// Computes the sample means and trends of the multi-level model.
pub fn multilevel_split(panels: &[CurveSeries]) -> Result<MultiLevelDecomposition> {
    let d = panels.len();
    if d < 2 {
        return Err(Error::Input(format!("MFPCA needs at least 2 assets, got {d}")));
    }
    let first = &panels[0];
    for p in &panels[1..] {
        if p.dates() != first.dates() || p.grid() != first.grid() {
            return Err(Error::Alignment(
                "MFPCA panels must share dates and grid".into(),
            ));
        }
    }
    let (n, j) = (first.len(), first.j());
    if n == 0 {
        return Err(Error::InsufficientData("empty MFPCA panel".into()));
    }
    let asset_means: Vec<Vec<f64>> = panels.iter().map(|p| p.mean_curve()).collect();
    let mu_common: Vec<f64> = (0..j)
        .map(|u| asset_means.iter().map(|m| m[u]).sum::<f64>() / d as f64)
        .collect();
    let mu_specific: Vec<Vec<f64>> = asset_means
        .iter()
        .map(|m| m.iter().zip(&mu_common).map(|(a, c)| a - c).collect())
        .collect();
    let cross_avg: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            (0..j)
                .map(|u| panels.iter().map(|p| p.row(t)[u]).sum::<f64>() / d as f64)
                .collect()
        })
        .collect();
    let u_common_vals: Vec<Vec<f64>> = cross_avg
        .iter()
        .map(|row| row.iter().zip(&mu_common).map(|(a, c)| a - c).collect())
        .collect();
    let u_specific = panels
        .iter()
        .zip(&mu_specific)
        .map(|(p, mu_j)| {
            let vals = (0..n)
                .map(|t| {
                    (0..j)
                        .map(|u| p.row(t)[u] - mu_common[u] - mu_j[u] - u_common_vals[t][u])
                        .collect()
                })
                .collect();
            CurveSeries::new(first.grid().clone(), first.dates().to_vec(), vals, CurveKind::Generic)
        })
        .collect::<Result<Vec<_>>>()?;
    let u_common = CurveSeries::new(
        first.grid().clone(),
        first.dates().to_vec(),
        u_common_vals,
        CurveKind::Generic,
    )?;
    Ok(MultiLevelDecomposition {
        mu_common,
        mu_specific,
        u_common,
        u_specific,
    })
}

/// Multi-level FPCA. The common basis comes from the long-run covariance of
/// `Û_c`, each specific basis from that of `Û_j`; dimensions are picked by the
/// eigenvalue ratio with `L̄ = max_k`.
pub fn mfpca(
    panels: &[CurveSeries],
    max_k: usize,
    bandwidth: Option<usize>,
) -> Result<MfpcaResult> {
    let decomposition = multilevel_split(panels)?;
    let n = decomposition.u_common.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "MFPCA needs at least 10 curves, got {n}"
        )));
    }
    let h = bandwidth.unwrap_or_else(|| cube_root_lag(n));
    let mut common = select_by_ratio(&long_run_kernel(&decomposition.u_common, h)?, max_k)?;
    common.method = BasisMethod::MfpcaCommon;
    let specific = decomposition
        .u_specific
        .iter()
        .map(|u| {
            let mut b = select_by_ratio(&long_run_kernel(u, h)?, max_k)?;
            b.method = BasisMethod::MfpcaSpecific;
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MfpcaResult {
        decomposition,
        common,
        specific,
    })
}
