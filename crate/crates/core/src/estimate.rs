//! Local quasi-maximum-likelihood fits over the parameter polytope.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{BoundaryPolicy, KernelSpec};
use crate::likelihood::{cond_variance, weighted_likelihood, weighted_value, CompensatedSum, LocalData};
use crate::omega::OmegaSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Stop once the projected-gradient norm drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of starting points tried when the first one fails.
    pub starts: usize,
    /// Overrides the default first start.
    pub initial: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            starts: 3,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub t0: usize,
    pub u0: f64,
    pub b: f64,
    pub estimate: Vec<f64>,
    pub value: f64,
    /// Sup norm of `alpha - P(alpha - grad)`.
    pub gradient_norm: f64,
    pub hessian_at_opt: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub active_constraints: Vec<String>,
    pub stderr: Option<Vec<f64>>,
    pub varz2_hat: Option<f64>,
}

struct Outcome {
    alpha: Vec<f64>,
    value: f64,
    pg: f64,
    iterations: usize,
    converged: bool,
    #[allow(dead_code)] // objective values per iteration, checked in tests
    trace: Vec<f64>,
}

fn pg_norm(omega: &OmegaSpace, alpha: &[f64], grad: &DVector<f64>) -> f64 {
    let step: Vec<f64> = alpha.iter().zip(grad.iter()).map(|(a, g)| a - g).collect();
    let y = omega.project(&step).expect("finite");
    alpha.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// Which constraints bind at `alpha`, judged by where a gradient step lands.
struct ActiveSet {
    fixed: Vec<bool>,
    sum: bool,
}

fn active_set(omega: &OmegaSpace, alpha: &[f64], grad: &DVector<f64>) -> ActiveSet {
    let step: Vec<f64> = alpha.iter().zip(grad.iter()).map(|(a, g)| a - g).collect();
    let y = omega.project(&step).expect("finite");
    let (r1, r2) = (omega.rho1(), omega.rho2());
    let mut fixed = vec![false; alpha.len()];
    fixed[0] = (near(alpha[0], r1) && near(y[0], r1)) || (near(alpha[0], r2) && near(y[0], r2));
    for j in 1..alpha.len() {
        fixed[j] = near(alpha[j], r1) && near(y[j], r1);
    }
    let sum = alpha.len() > 1
        && near(alpha[1..].iter().sum::<f64>(), 1.0)
        && near(y[1..].iter().sum::<f64>(), 1.0)
        && (1..alpha.len()).any(|j| !fixed[j]);
    ActiveSet { fixed, sum }
}

/// Cholesky factor of `h + tau I`, raising `tau` until it succeeds.
fn shifted_cholesky(h: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Some(c);
    }
    let scale = h.diagonal().iter().map(|v| v.abs()).fold(1e-12, f64::max);
    let mut tau = 1e-10 * scale;
    for _ in 0..40 {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * tau;
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        tau *= 10.0;
    }
    None
}

/// Reduced Newton direction on the free coordinates, keeping the sum of
/// the free lag coefficients fixed when the sum constraint binds.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, act: &ActiveSet) -> Option<DVector<f64>> {
    let free: Vec<usize> = (0..g.len()).filter(|&i| !act.fixed[i]).collect();
    let mut d = DVector::zeros(g.len());
    if free.is_empty() {
        return Some(d);
    }
    let m = free.len();
    let hf = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let gf = DVector::from_fn(m, |a, _| g[free[a]]);
    let chol = shifted_cholesky(&hf)?;
    let mut df = -chol.solve(&gf);
    if act.sum {
        let ones = DVector::from_fn(m, |a, _| if free[a] >= 1 { 1.0 } else { 0.0 });
        let hinv1 = chol.solve(&ones);
        let denom = ones.dot(&hinv1);
        if denom > 0.0 {
            let lambda = ones.dot(&df) / denom;
            df -= hinv1 * lambda;
        }
    }
    for (a, &i) in free.iter().enumerate() {
        d[i] = df[a];
    }
    Some(d)
}

/// Backtracking along the projected arc `P(alpha + s d)`.
fn armijo(
    data: &LocalData,
    omega: &OmegaSpace,
    alpha: &[f64],
    value: f64,
    grad: &DVector<f64>,
    d: &DVector<f64>,
) -> Option<(Vec<f64>, f64)> {
    let mut s = 1.0;
    for _ in 0..60 {
        let trial: Vec<f64> = alpha.iter().zip(d.iter()).map(|(a, di)| a + s * di).collect();
        let trial = omega.project(&trial).ok()?;
        let slope: f64 = trial.iter().zip(alpha).zip(grad.iter()).map(|((t, a), g)| g * (t - a)).sum();
        if slope < 0.0 {
            let v = weighted_value(data, &trial);
            if v <= value + 1e-4 * slope {
                return Some((trial, v));
            }
        } else if trial == alpha {
            return None;
        }
        s *= 0.5;
    }
    None
}

fn solve(data: &LocalData, omega: &OmegaSpace, start: &[f64], opts: &FitOptions) -> Outcome {
    let mut alpha = omega.project(start).expect("finite start");
    let mut eval = weighted_likelihood(data, &alpha);
    let mut trace = vec![eval.value];
    let mut iterations = 0;
    let mut pg = pg_norm(omega, &alpha, &eval.gradient);
    while pg > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let act = active_set(omega, &alpha, &eval.gradient);
        let newton = newton_direction(&eval.hessian, &eval.gradient, &act)
            .and_then(|d| armijo(data, omega, &alpha, eval.value, &eval.gradient, &d));
        let step = newton.or_else(|| {
            let d = -eval.gradient.clone();
            armijo(data, omega, &alpha, eval.value, &eval.gradient, &d)
        });
        let Some((next, _)) = step else { break };
        alpha = next;
        eval = weighted_likelihood(data, &alpha);
        trace.push(eval.value);
        pg = pg_norm(omega, &alpha, &eval.gradient);
    }
    let mut converged = pg <= opts.tol;
    if converged {
        // a flat direction leaves the minimizer undetermined
        let act = active_set(omega, &alpha, &eval.gradient);
        converged = reduced_is_definite(&eval.hessian, &act);
    }
    Outcome {
        value: eval.value,
        alpha,
        pg,
        iterations,
        converged,
        trace,
    }
}

fn reduced_is_definite(h: &DMatrix<f64>, act: &ActiveSet) -> bool {
    let free: Vec<usize> = (0..h.nrows()).filter(|&i| !act.fixed[i]).collect();
    if free.is_empty() {
        return true;
    }
    let m = free.len();
    let mut hf = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    if act.sum {
        // restrict to directions with zero lag-sum change
        let lag: Vec<usize> = (0..m).filter(|&a| free[a] >= 1).collect();
        if let Some(&last) = lag.last() {
            if m == 1 {
                return true;
            }
            let mut basis = DMatrix::zeros(m, m - 1);
            let mut col = 0;
            for a in 0..m {
                if a == last {
                    continue;
                }
                basis[(a, col)] = 1.0;
                if free[a] >= 1 {
                    basis[(last, col)] = -1.0;
                }
                col += 1;
            }
            hf = basis.transpose() * hf * basis;
        }
    }
    let eig = SymmetricEigen::new(hf).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    max > 0.0 && min > 1e-12 * max
}

/// Default starting points: `alpha_0 = (1 - s) m`, `alpha_j = s / p`, with
/// `m` the weighted mean of `X^2` and `s` in `{0.5, 0.2, 0.8}`.
fn default_starts(data: &LocalData, omega: &OmegaSpace) -> Vec<Vec<f64>> {
    let p = data.order();
    let m = data.weighted_mean();
    [0.5, 0.2, 0.8]
        .iter()
        .map(|&s| {
            let mut a = vec![(1.0 - s) * m];
            a.extend(std::iter::repeat_n(s / p.max(1) as f64, p));
            omega.project(&a).expect("finite")
        })
        .collect()
}

fn better(a: &Outcome, b: &Outcome) -> bool {
    if a.converged != b.converged {
        return a.converged;
    }
    if a.value != b.value {
        return a.value < b.value;
    }
    a.alpha.partial_cmp(&b.alpha) == Some(std::cmp::Ordering::Less)
}

/// Names of the constraints the estimate sits on.
pub fn active_constraints(omega: &OmegaSpace, alpha: &[f64]) -> Vec<String> {
    let mut out = Vec::new();
    if near(alpha[0], omega.rho1()) {
        out.push("alpha0>=rho1".to_string());
    }
    if near(alpha[0], omega.rho2()) {
        out.push("alpha0<=rho2".to_string());
    }
    for (j, &a) in alpha.iter().enumerate().skip(1) {
        if near(a, omega.rho1()) {
            out.push(format!("alpha{j}>=rho1"));
        }
    }
    if alpha.len() > 1 && near(alpha[1..].iter().sum(), 1.0) {
        out.push("sum<=1".to_string());
    }
    out
}

/// Minimizes the weighted quasi-likelihood over `omega`. A result is
/// returned even when the solver fails, with `converged = false`.
pub fn fit_local(data: &LocalData, omega: &OmegaSpace, opts: &FitOptions) -> Result<FitResult> {
    if omega.order() != data.order() {
        return Err(Error::InvalidInput(format!(
            "omega has order {}, data has order {}",
            omega.order(),
            data.order()
        )));
    }
    let mut starts = default_starts(data, omega);
    if let Some(init) = &opts.initial {
        starts.insert(0, omega.project(init)?);
    }
    let mut best = solve(data, omega, &starts[0], opts);
    if !best.converged {
        for s in starts.iter().skip(1).take(opts.starts.saturating_sub(1)) {
            let o = solve(data, omega, s, opts);
            if better(&o, &best) {
                best = o;
            }
        }
    }
    let eval = weighted_likelihood(data, &best.alpha);
    let n = data.n();
    Ok(FitResult {
        t0: data.t0(),
        u0: data.t0() as f64 / n as f64,
        b: data.weights().bn / n as f64,
        active_constraints: active_constraints(omega, &best.alpha),
        estimate: best.alpha,
        value: best.value,
        gradient_norm: best.pg,
        hessian_at_opt: eval.hessian,
        iterations: best.iterations,
        converged: best.converged,
        stderr: None,
        varz2_hat: None,
    })
}

/// Plug-in standard errors `sqrt(w2 var(Z^2) / 2 (Sigma^-1)_ii / (bN))`,
/// with `Sigma` and `var(Z^2)` estimated at the fit.
pub fn standard_errors(fit: &FitResult, data: &LocalData, kernel: &KernelSpec) -> Result<FitResult> {
    if !fit.converged {
        return Err(Error::FitNotUsable("fit did not converge".into()));
    }
    if !fit.active_constraints.is_empty() {
        return Err(Error::FitNotUsable(format!(
            "constraints active at the estimate: {}",
            fit.active_constraints.join(", ")
        )));
    }
    let d = data.order() + 1;
    let alpha = &fit.estimate;
    let mut wsum = CompensatedSum::default();
    let mut sig = vec![CompensatedSum::default(); d * d];
    let mut r1 = CompensatedSum::default();
    let mut dw = vec![0.0; d];
    data.for_each(|wk, x2, lags| {
        let w = cond_variance(alpha, lags);
        dw[0] = 1.0;
        dw[1..].copy_from_slice(lags);
        for i in 0..d {
            for j in 0..d {
                sig[i * d + j].add(wk * 0.5 * dw[i] * dw[j] / (w * w));
            }
        }
        wsum.add(wk);
        r1.add(wk * x2 / w);
    });
    let total = wsum.value();
    let sigma = DMatrix::from_fn(d, d, |i, j| sig[i * d + j].value() / total);
    let mean_z2 = r1.value() / total;
    let mut r2 = CompensatedSum::default();
    data.for_each(|wk, x2, lags| {
        let e = x2 / cond_variance(alpha, lags) - mean_z2;
        r2.add(wk * e * e);
    });
    let varz2 = r2.value() / total;
    let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if cond > 1e12 {
        return Err(Error::SingularSigma(cond));
    }
    let inv = sigma.try_inverse().ok_or(Error::SingularSigma(cond))?;
    let bn = data.weights().bn;
    let w2 = kernel.moments().w2;
    let stderr = (0..d).map(|i| (w2 * varz2 / 2.0 * inv[(i, i)] / bn).sqrt()).collect();
    Ok(FitResult {
        stderr: Some(stderr),
        varz2_hat: Some(varz2),
        ..fit.clone()
    })
}

/// Fits at every anchor of `grid`. Warm starting chains each anchor to the
/// previous estimate and runs sequentially; otherwise anchors run in
/// parallel. Errors are kept per anchor.
#[allow(clippy::too_many_arguments)]
pub fn fit_path(
    x2: &[f64],
    grid: &[usize],
    kernel: &KernelSpec,
    omega: &OmegaSpace,
    opts: &FitOptions,
    policy: BoundaryPolicy,
    warm_start: bool,
    with_stderr: bool,
) -> Vec<Result<FitResult>> {
    let p = omega.order();
    let one = |t0: usize, o: &FitOptions| -> Result<FitResult> {
        let data = LocalData::new(x2, p, kernel, t0, policy)?;
        let fit = fit_local(&data, omega, o)?;
        if with_stderr && fit.converged && fit.active_constraints.is_empty() {
            standard_errors(&fit, &data, kernel)
        } else {
            Ok(fit)
        }
    };
    if warm_start {
        let mut out = Vec::with_capacity(grid.len());
        let mut o = opts.clone();
        for &t0 in grid {
            let r = one(t0, &o);
            if let Ok(f) = &r {
                if f.converged {
                    o.initial = Some(f.estimate.clone());
                }
            }
            out.push(r);
        }
        out
    } else {
        grid.par_iter().map(|&t0| one(t0, opts)).collect()
    }
}
