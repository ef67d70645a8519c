//! Limit-theory quantities: the information matrix `Sigma(u0)`, the bias
//! direction `mu(u0)`, the MSE-optimal bandwidth and confidence intervals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::kernel::KernelSpec;
use crate::model::{var_z2, Extension, MomentLevel, TvArchSpec};
use crate::rng::derive_seed;
use crate::simulate::{mean_and_stderr, simulate_stationary};

/// Monte Carlo budget: `reps` stationary paths of length `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSettings {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n: 10_000,
            reps: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    MonteCarlo,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEstimate {
    pub matrix: DMatrix<f64>,
    /// Entrywise MC standard errors (zero for the closed form).
    pub stderr: DMatrix<f64>,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasEstimate {
    pub mu: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `|mu_5 - mu_3|`, the gap between the five- and three-point stencils.
    pub stencil_error: Vec<f64>,
    pub method: Method,
}

fn check_mc(mc: &McSettings, p: usize) -> Result<()> {
    if mc.reps < 2 || mc.n < p + 2 {
        return Err(Error::InvalidInput(format!(
            "Monte Carlo needs reps >= 2 and n > p + 1 (reps={}, n={})",
            mc.reps, mc.n
        )));
    }
    Ok(())
}

fn ordered_map<T: Send>(reps: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..reps).into_par_iter().map(f).collect()
}

/// Time average of `grad w grad w' / (2 w^2)` on one path at `alpha`.
fn path_outer(x2: &[f64], alpha: &[f64]) -> Vec<f64> {
    let d = alpha.len();
    let p = d - 1;
    let mut acc = vec![0.0; d * d];
    let mut dw = vec![0.0; d];
    for t in p..x2.len() {
        dw[0] = 1.0;
        for j in 1..=p {
            dw[j] = x2[t - j];
        }
        let w: f64 = alpha.iter().zip(&dw).map(|(a, g)| a * g).sum();
        let s = 0.5 / (w * w);
        for i in 0..d {
            for j in 0..d {
                acc[i * d + j] += s * dw[i] * dw[j];
            }
        }
    }
    let m = (x2.len() - p) as f64;
    acc.iter_mut().for_each(|v| *v /= m);
    acc
}

/// Time average of the point-likelihood gradient on one path at `alpha`.
fn path_gradient(x2: &[f64], alpha: &[f64]) -> Vec<f64> {
    let d = alpha.len();
    let p = d - 1;
    let mut acc = vec![0.0; d];
    for t in p..x2.len() {
        let mut w = alpha[0];
        for j in 1..=p {
            w += alpha[j] * x2[t - j];
        }
        let s = 0.5 * (1.0 - x2[t] / w) / w;
        acc[0] += s;
        for j in 1..=p {
            acc[j] += s * x2[t - j];
        }
    }
    let m = (x2.len() - p) as f64;
    acc.iter_mut().for_each(|v| *v /= m);
    acc
}

fn summarize(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = samples[0].len();
    (0..k)
        .map(|i| {
            let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            mean_and_stderr(&col)
        })
        .unzip()
}

/// `Sigma(u0) = E[grad w grad w' / (2 w^2)]` at `alpha = a(u0)`; closed form
/// `1 / (2 a_0^2)` when `p = 0` unless `force_mc`.
pub fn sigma_of_u(spec: &TvArchSpec, u0: f64, mc: &McSettings, force_mc: bool) -> Result<SigmaEstimate> {
    let p = spec.order();
    let d = p + 1;
    let a = spec.eval_coefficients(u0, 0, Extension::Clamped)?;
    if p == 0 && !force_mc {
        return Ok(SigmaEstimate {
            matrix: DMatrix::from_element(1, 1, 1.0 / (2.0 * a[0] * a[0])),
            stderr: DMatrix::zeros(1, 1),
            method: Method::ClosedForm,
        });
    }
    check_mc(mc, p)?;
    let samples = ordered_map(mc.reps, |r| {
        let path = simulate_stationary(spec, u0, mc.n, derive_seed(mc.seed, r as u64))?;
        Ok(path_outer(&path.x2, &a))
    })?;
    let (mean, se) = summarize(&samples);
    let matrix = DMatrix::from_fn(d, d, |i, j| 0.5 * (mean[i * d + j] + mean[j * d + i]));
    Ok(SigmaEstimate {
        matrix,
        stderr: DMatrix::from_fn(d, d, |i, j| se[i * d + j]),
        method: Method::MonteCarlo,
    })
}

/// Bias direction `mu(u0) = w(2) Sigma^-1 g''(u0) / 2` where
/// `g(u) = E grad l~(u, a(u0))`, differentiated on a five-point stencil of
/// step `du` with shared innovations. For `p = 0` the closed form
/// `-w(2) a_0''(u0) / 2` is used unless `force_mc`.
pub fn bias_mu(
    spec: &TvArchSpec,
    u0: f64,
    kernel: &KernelSpec,
    mc: &McSettings,
    du: f64,
    force_mc: bool,
) -> Result<BiasEstimate> {
    let report = spec.validate_moment_conditions(MomentLevel::Bias)?;
    if let Some(c) = report.first_failure() {
        return Err(Error::MomentCondition(format!(
            "{}: {:.6} > {:.6}",
            c.inequality, c.lhs, c.rhs
        )));
    }
    if !(du > 0.0) || u0 - 2.0 * du <= 0.0 || u0 + 2.0 * du >= 1.0 {
        return Err(Error::StencilOutOfRange {
            lo: u0 - 2.0 * du,
            hi: u0 + 2.0 * du,
        });
    }
    let p = spec.order();
    let w2nd = kernel.moments().w2nd;
    let a = spec.eval_coefficients(u0, 0, Extension::Clamped)?;
    let a2 = spec.eval_coefficients(u0, 2, Extension::Clamped)?;
    if p == 0 && !force_mc {
        return Ok(BiasEstimate {
            // written as a difference so a flat curve gives +0, not -0
            mu: vec![0.0 - 0.5 * w2nd * a2[0]],
            stderr: vec![0.0],
            stencil_error: vec![0.0],
            method: Method::ClosedForm,
        });
    }
    check_mc(mc, p)?;
    let sigma = sigma_of_u(spec, u0, mc, force_mc)?;
    let sinv = sigma
        .matrix
        .clone()
        .try_inverse()
        .ok_or(Error::SingularSigma(f64::INFINITY))?;
    let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let samples = ordered_map(mc.reps, |r| {
        let seed = derive_seed(mc.seed, r as u64);
        let mut g = Vec::with_capacity(5);
        for o in offsets {
            let path = simulate_stationary(spec, u0 + o * du, mc.n, seed)?;
            g.push(DVector::from_vec(path_gradient(&path.x2, &a)));
        }
        // grouped so that equal stencil values cancel exactly
        let five = ((&g[1] + &g[3]) * 16.0 - (&g[0] + &g[4]) - &g[2] * 30.0) / (12.0 * du * du);
        let three = ((&g[1] + &g[3]) - &g[2] * 2.0) / (du * du);
        let mu5 = &sinv * five * (0.5 * w2nd);
        let mu3 = &sinv * three * (0.5 * w2nd);
        let mut out: Vec<f64> = mu5.iter().copied().collect();
        out.extend(mu3.iter());
        Ok(out)
    })?;
    let (mean, se) = summarize(&samples);
    let d = p + 1;
    Ok(BiasEstimate {
        mu: mean[..d].to_vec(),
        stderr: se[..d].to_vec(),
        stencil_error: (0..d).map(|i| (mean[i] - mean[d + i]).abs()).collect(),
        method: Method::MonteCarlo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthChoice {
    pub b: f64,
    /// Set when `mu = 0`; `b` is then the upper clip 0.5.
    pub zero_bias: bool,
}

/// Minimizer over `(0, 1/2]` of the conjectured MSE
/// `b^4 |mu|^2 + w2 var(Z^2) tr(Sigma^-1) / (2 b N)`.
pub fn optimal_bandwidth(
    spec: &TvArchSpec,
    n: usize,
    kernel: &KernelSpec,
    sigma: &DMatrix<f64>,
    mu: &[f64],
) -> Result<BandwidthChoice> {
    let norm2: f64 = mu.iter().map(|m| m * m).sum();
    if norm2 == 0.0 {
        return Ok(BandwidthChoice {
            b: 0.5,
            zero_bias: true,
        });
    }
    let inv = sigma.clone().try_inverse().ok_or(Error::SingularSigma(f64::INFINITY))?;
    let tr = inv.trace();
    let v = var_z2(spec.innovation());
    let b5 = kernel.moments().w2 * v * tr / (8.0 * n as f64 * norm2);
    Ok(BandwidthChoice {
        b: b5.powf(0.2).min(0.5),
        zero_bias: false,
    })
}

/// `b^4 |mu|^2 + w2 var(Z^2) tr(Sigma^-1) / (2 b N)`.
pub fn conjectured_mse(b: f64, n: usize, w2: f64, varz2: f64, trace_inv: f64, mu_norm2: f64) -> f64 {
    b.powi(4) * mu_norm2 + w2 * varz2 * trace_inv / (2.0 * b * n as f64)
}

/// Normal-theory intervals `a_i (+ b^2 mu_i) -/+ q se_i`.
pub fn confidence_intervals(fit: &FitResult, level: f64, bias: Option<(&[f64], f64)>) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.5 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} outside (0.5, 1)")));
    }
    let se = fit
        .stderr
        .as_ref()
        .ok_or_else(|| Error::FitNotUsable("fit has no standard errors".into()))?;
    let q = normal_quantile((1.0 + level) / 2.0);
    Ok(fit
        .estimate
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let centre = match bias {
                Some((mu, b)) => a + b * b * mu[i],
                None => a,
            };
            (centre - q * se[i], centre + q * se[i])
        })
        .collect())
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Everything `asymptotics` reports at one `u0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticsReport {
    pub u0: f64,
    pub sigma: SigmaEstimate,
    pub sigma_eigenvalues: Vec<f64>,
    pub bias: BiasEstimate,
    pub bandwidth: Option<BandwidthChoice>,
    pub n: usize,
}

pub fn asymptotics_report(
    spec: &TvArchSpec,
    u0: f64,
    n: usize,
    kernel: &KernelSpec,
    mc: &McSettings,
    du: f64,
) -> Result<AsymptoticsReport> {
    let sigma = sigma_of_u(spec, u0, mc, false)?;
    let bias = bias_mu(spec, u0, kernel, mc, du, false)?;
    let mut eig: Vec<f64> = SymmetricEigen::new(sigma.matrix.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let bandwidth = Some(optimal_bandwidth(spec, n, kernel, &sigma.matrix, &bias.mu)?);
    Ok(AsymptoticsReport {
        u0,
        sigma,
        sigma_eigenvalues: eig,
        bias,
        bandwidth,
        n,
    })
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl AsymptoticsReport {
    /// `key = value` lines.
    pub fn render(&self) -> String {
        let d = self.sigma.matrix.nrows();
        let mut s = String::new();
        s.push_str(&format!("u0 = {}\n", self.u0));
        s.push_str(&format!("n = {}\n", self.n));
        s.push_str(&format!("sigma.method = {}\n", self.sigma.method.name()));
        for i in 0..d {
            s.push_str(&format!("sigma.row{i} = {}\n", join(self.sigma.matrix.row(i).iter().copied())));
        }
        for i in 0..d {
            s.push_str(&format!("sigma.stderr.row{i} = {}\n", join(self.sigma.stderr.row(i).iter().copied())));
        }
        s.push_str(&format!("sigma.eigenvalues = {}\n", join(self.sigma_eigenvalues.iter().copied())));
        s.push_str(&format!("mu.method = {}\n", self.bias.method.name()));
        s.push_str(&format!("mu = {}\n", join(self.bias.mu.iter().copied())));
        s.push_str(&format!("mu.stderr = {}\n", join(self.bias.stderr.iter().copied())));
        s.push_str(&format!("mu.stencil_error = {}\n", join(self.bias.stencil_error.iter().copied())));
        if let Some(bw) = &self.bandwidth {
            s.push_str(&format!("b_opt = {}\n", bw.b));
            s.push_str("b_opt.objective = conjectured\n");
            s.push_str(&format!("zero_bias = {}\n", bw.zero_bias));
        }
        s
    }

    pub fn csv_header(&self) -> Vec<String> {
        let d = self.sigma.matrix.nrows();
        let mut h = vec!["u0".to_string(), "n".to_string(), "sigma_method".to_string()];
        for i in 0..d {
            for j in 0..d {
                h.push(format!("sigma_{i}{j}"));
            }
        }
        h.push("mu_method".into());
        for i in 0..d {
            h.push(format!("mu_{i}"));
            h.push(format!("mu_se_{i}"));
        }
        h.extend(["b_opt".to_string(), "zero_bias".to_string()]);
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let d = self.sigma.matrix.nrows();
        let mut r = vec![self.u0.to_string(), self.n.to_string(), self.sigma.method.name().to_string()];
        for i in 0..d {
            for j in 0..d {
                r.push(self.sigma.matrix[(i, j)].to_string());
            }
        }
        r.push(self.bias.method.name().into());
        for i in 0..d {
            r.push(self.bias.mu[i].to_string());
            r.push(self.bias.stderr[i].to_string());
        }
        let bw = self.bandwidth.unwrap_or(BandwidthChoice {
            b: f64::NAN,
            zero_bias: false,
        });
        r.extend([bw.b.to_string(), bw.zero_bias.to_string()]);
        r
    }
}
