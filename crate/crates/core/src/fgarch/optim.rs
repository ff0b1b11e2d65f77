//! Quasi-Newton (BFGS) minimiser with a monotone Armijo backtracking line search.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when an accepted step improves the objective by less than this.
    pub f_tol: f64,
    pub g_tol: f64,
    /// Largest coordinate move per iteration.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            f_tol: 1e-8,
            g_tol: 1e-8,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f`, which returns the value and gradient (value may be `+∞`
/// outside the admissible region). Returns `None` if `f(x0)` is not finite.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Option<BfgsOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut trace = vec![fx];
    // inverse Hessian, row-major
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if g.iter().all(|v| v.abs() < opts.g_tol) {
            converged = true;
            break;
        }
        let mut dir = mat_vec(&h, &g, n);
        dir.iter_mut().for_each(|d| *d = -*d);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let biggest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut step = if biggest > opts.max_step {
            opts.max_step / biggest
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            // no descent along the quasi-Newton direction; a reset to steepest
            // descent gets one more chance before giving up
            if is_identity(&h, n) {
                converged = g.iter().all(|v| v.abs() < 1e-5);
                break;
            }
            h = identity(n);
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if iterations == 1 {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, n);
        }
        if improvement < opts.f_tol {
            converged = true;
            break;
        }
    }
    Some(BfgsOutcome {
        x,
        f: fx,
        grad: g,
        iterations,
        converged,
        trace,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn is_identity(m: &[f64], n: usize) -> bool {
    (0..n).all(|i| (0..n).all(|j| m[i * n + j] == if i == j { 1.0 } else { 0.0 }))
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/(yᵀs)`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
