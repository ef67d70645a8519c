//! Replicated experiments: simulate, fit or measure, and summarize per cell.
//!
//! Replication `r` always uses `derive_seed(base_seed, r)`. Replications run
//! on a rayon pool but results are collected in replication order and reduced
//! sequentially, so summaries do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{bias_mu, normal_quantile, sigma_of_u, McSettings};
use crate::error::{Error, Result};
use crate::estimate::{fit_local, standard_errors, FitOptions};
use crate::kernel::{BoundaryPolicy, KernelFamily, KernelSpec};
use crate::likelihood::{CompensatedSum, LocalData};
use crate::model::{var_z2, Extension, TvArchSpec};
use crate::omega::OmegaSpace;
use crate::simulate::{mean_and_stderr, simulate_stationary, tvarch_prefix, StartMode};

pub use crate::rng::derive_seed;

/// Smallest effective sample size `bN` an experiment accepts.
pub const MIN_BN: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Mean error of the local fit against `-b^2 mu(u0)`.
    BiasLaw,
    /// Coverage of uncorrected normal intervals and the spread of `sqrt(bN)(a_hat - a)`.
    CltCoverage,
    /// `E|X_{t,N}^2 - X~_t(u0)^2|` at several distances `t/N - u0`.
    ApproximationRate,
    /// Mean squared error of the local fit across bandwidths.
    BandwidthSweep,
    /// Kernel-weighted averages of the stationary approximation.
    ErgodicSum,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BiasLaw => "bias-law",
            ExperimentKind::CltCoverage => "clt-coverage",
            ExperimentKind::ApproximationRate => "approximation-rate",
            ExperimentKind::BandwidthSweep => "bandwidth-sweep",
            ExperimentKind::ErgodicSum => "ergodic-sum",
        }
    }

    fn fits(&self) -> bool {
        matches!(
            self,
            ExperimentKind::BiasLaw | ExperimentKind::CltCoverage | ExperimentKind::BandwidthSweep
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BandwidthRule {
    Fixed { values: Vec<f64> },
    /// `b = c N^-gamma`.
    Power { c: f64, gamma: f64 },
}

impl BandwidthRule {
    pub fn bandwidths(&self, n: usize) -> Vec<f64> {
        match self {
            BandwidthRule::Fixed { values } => values.clone(),
            BandwidthRule::Power { c, gamma } => vec![c * (n as f64).powf(-gamma)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: TvArchSpec,
    pub kind: ExperimentKind,
    pub u0: Vec<f64>,
    pub n: Vec<usize>,
    pub b: BandwidthRule,
    pub kernel: KernelFamily,
    pub reps: usize,
    pub base_seed: u64,
    pub omega: Option<OmegaSpace>,
    /// `t/N - u0` offsets for the approximation-rate kind.
    pub distances: Vec<f64>,
    pub start_mode: StartMode,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.u0.is_empty() || self.n.is_empty() {
            return Err(Error::Config("u0 and n lists must be non-empty".into()));
        }
        if let Some(u) = self.u0.iter().find(|u| !(**u > 0.0 && **u < 1.0)) {
            return Err(Error::Config(format!("u0 = {u} outside (0, 1)")));
        }
        if self.kind == ExperimentKind::ApproximationRate {
            if self.distances.is_empty() {
                return Err(Error::Config("approximation-rate needs a distances list".into()));
            }
            for &u in &self.u0 {
                for &d in &self.distances {
                    if !(u + d > 0.0 && u + d <= 1.0) {
                        return Err(Error::Config(format!("u0 + distance = {} outside (0, 1]", u + d)));
                    }
                }
            }
            return Ok(());
        }
        for &n in &self.n {
            let bs = self.b.bandwidths(n);
            if bs.is_empty() {
                return Err(Error::Config("bandwidth list is empty".into()));
            }
            for b in bs {
                if !(b > 0.0 && b < 1.0) {
                    return Err(Error::Config(format!("bandwidth {b} outside (0, 1)")));
                }
                if b * (n as f64) < MIN_BN {
                    return Err(Error::Config(format!(
                        "b = {b} with N = {n} gives bN = {} < {MIN_BN}",
                        b * n as f64
                    )));
                }
            }
        }
        if self.kind.fits() {
            let om = self
                .omega
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} needs an omega block", self.kind.name())))?;
            if om.order() != self.spec.order() {
                return Err(Error::Config(format!(
                    "omega order {} does not match model order {}",
                    om.order(),
                    self.spec.order()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub u0: f64,
    pub n: usize,
    pub b: Option<f64>,
    pub distance: Option<f64>,
    pub reps_ok: usize,
    pub failed: usize,
    pub stats: Vec<Stat>,
}

impl Cell {
    pub fn stat(&self, name: &str) -> Option<&Stat> {
        self.stats.iter().find(|s| s.name == name)
    }

    fn push(&mut self, name: impl Into<String>, value: f64, stderr: f64) {
        self.stats.push(Stat {
            name: name.into(),
            value,
            stderr,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub kind: ExperimentKind,
    pub reps: usize,
    pub base_seed: u64,
    pub cells: Vec<Cell>,
}

impl ExperimentSummary {
    /// Header and rows with one row per cell and a value / stderr column
    /// pair per statistic.
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut names: Vec<String> = Vec::new();
        for c in &self.cells {
            for s in &c.stats {
                if !names.contains(&s.name) {
                    names.push(s.name.clone());
                }
            }
        }
        let mut header: Vec<String> = ["kind", "u0", "n", "b", "distance", "reps_ok", "failed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for n in &names {
            header.push(n.clone());
            header.push(format!("{n}_se"));
        }
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows = self
            .cells
            .iter()
            .map(|c| {
                let mut r = vec![
                    self.kind.name().to_string(),
                    c.u0.to_string(),
                    c.n.to_string(),
                    opt(c.b),
                    opt(c.distance),
                    c.reps_ok.to_string(),
                    c.failed.to_string(),
                ];
                for n in &names {
                    match c.stat(n) {
                        Some(s) => {
                            r.push(s.value.to_string());
                            r.push(s.stderr.to_string());
                        }
                        None => r.extend([String::new(), String::new()]),
                    }
                }
                r
            })
            .collect();
        (header, rows)
    }
}

/// Runs every cell of the experiment on a pool of `threads` workers
/// (0 = rayon default). The summary is identical for every thread count.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<ExperimentSummary> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_cells(config))
}

fn run_cells(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let mut cells = Vec::new();
    for &u0 in &config.u0 {
        for &n in &config.n {
            match config.kind {
                ExperimentKind::ApproximationRate => {
                    cells.extend(approximation_cells(config, u0, n)?);
                }
                ExperimentKind::ErgodicSum => {
                    for b in config.b.bandwidths(n) {
                        cells.push(ergodic_cell(config, u0, n, b)?);
                    }
                }
                _ => {
                    for b in config.b.bandwidths(n) {
                        cells.push(fit_cell(config, u0, n, b)?);
                    }
                }
            }
        }
    }
    Ok(ExperimentSummary {
        kind: config.kind,
        reps: config.reps,
        base_seed: config.base_seed,
        cells,
    })
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

fn replicate<T: Send>(reps: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Vec<Result<T>> {
    (0..reps as u64).into_par_iter().map(f).collect()
}

struct FitRep {
    err: Vec<f64>,
    stderr: Option<Vec<f64>>,
}

fn fit_cell(config: &ExperimentConfig, u0: f64, n: usize, b: f64) -> Result<Cell> {
    let spec = &config.spec;
    let p = spec.order();
    let omega = config.omega.as_ref().expect("validated");
    let kernel = KernelSpec::new(config.kernel, b)?;
    let t0 = (u0 * n as f64).round() as usize;
    let weights = kernel.weights(t0, n, p, BoundaryPolicy::Strict)?;
    let upto = weights.last();
    let truth = spec.eval_coefficients(t0 as f64 / n as f64, 0, Extension::Clamped)?;
    let need_se = config.kind == ExperimentKind::CltCoverage;
    let opts = FitOptions::default();
    let results = replicate(config.reps, |r| -> Result<FitRep> {
        let seed = derive_seed(config.base_seed, r);
        let path = tvarch_prefix(spec, n, upto, seed, config.start_mode)?;
        let mut x2 = path.x2;
        x2.resize(n, 0.0);
        let data = LocalData::from_weights(&x2, p, weights.clone())?;
        let fit = fit_local(&data, omega, &opts)?;
        if !fit.converged {
            return Err(Error::FitNotUsable("not converged".into()));
        }
        let stderr = if need_se && fit.active_constraints.is_empty() {
            Some(standard_errors(&fit, &data, &kernel)?.stderr.unwrap())
        } else {
            None
        };
        Ok(FitRep {
            err: fit.estimate.iter().zip(&truth).map(|(a, t)| a - t).collect(),
            stderr,
        })
    });
    let ok: Vec<FitRep> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = config.reps - ok.len();
    check_failures(failed, config.reps)?;
    let mut cell = Cell {
        u0,
        n,
        b: Some(b),
        distance: None,
        reps_ok: ok.len(),
        failed,
        stats: Vec::new(),
    };
    if ok.is_empty() {
        return Ok(cell);
    }
    let d = p + 1;
    let bn = b * n as f64;
    for i in 0..d {
        let e: Vec<f64> = ok.iter().map(|f| f.err[i]).collect();
        let (m, se) = mean_and_stderr(&e);
        cell.push(format!("bias_{i}"), m, se);
        let sq: Vec<f64> = e.iter().map(|x| x * x).collect();
        let (m, se) = mean_and_stderr(&sq);
        cell.push(format!("mse_{i}"), m, se);
    }
    // sample covariance of sqrt(bN) (a_hat - a)
    let k = ok.len() as f64;
    let means: Vec<f64> = (0..d).map(|i| ok.iter().map(|f| f.err[i]).sum::<f64>() / k).collect();
    for i in 0..d {
        for j in i..d {
            let mut s = CompensatedSum::default();
            for f in &ok {
                s.add((f.err[i] - means[i]) * (f.err[j] - means[j]));
            }
            let cov = if ok.len() > 1 { bn * s.value() / (k - 1.0) } else { f64::NAN };
            cell.push(format!("cov_{i}{j}"), cov, f64::NAN);
        }
    }
    if need_se {
        // fits on the boundary of Omega have no interval; they count as misses
        let m = ok.len() as f64;
        let boundary = ok.iter().filter(|f| f.stderr.is_none()).count() as f64 / m;
        cell.push("boundary_fraction", boundary, (boundary * (1.0 - boundary) / m).sqrt());
        for level in [0.90, 0.95, 0.99] {
            let q = normal_quantile((1.0 + level) / 2.0);
            for i in 0..d {
                let hits = ok
                    .iter()
                    .filter(|f| f.stderr.as_ref().is_some_and(|s| f.err[i].abs() <= q * s[i]))
                    .count() as f64;
                let c = hits / m;
                cell.push(
                    format!("coverage{}_{i}", (level * 100.0).round() as u32),
                    c,
                    (c * (1.0 - c) / m).sqrt(),
                );
            }
        }
    }
    if p == 0 {
        let kernel_m = kernel.moments();
        let sigma = sigma_of_u(spec, u0, &McSettings::default(), false)?.matrix[(0, 0)];
        cell.push("theory_var_0", kernel_m.w2 * var_z2(spec.innovation()) / 2.0 / sigma, 0.0);
        if let Ok(mu) = bias_mu(spec, u0, &kernel, &McSettings::default(), 0.02, false) {
            cell.push("pred_bias_0", -b * b * mu.mu[0], 0.0);
        }
    }
    Ok(cell)
}

fn approximation_cells(config: &ExperimentConfig, u0: f64, n: usize) -> Result<Vec<Cell>> {
    let spec = &config.spec;
    let mut cells = Vec::new();
    for &dist in &config.distances {
        let t = ((u0 + dist) * n as f64).round() as usize;
        let t = t.clamp(1, n);
        let results = replicate(config.reps, |r| -> Result<f64> {
            let seed = derive_seed(config.base_seed, r);
            let tv = tvarch_prefix(spec, n, t, seed, config.start_mode)?;
            let st = simulate_stationary(spec, u0, t, seed)?;
            Ok((tv.x2[t - 1] - st.x2[t - 1]).abs())
        });
        let ok: Vec<f64> = results.into_iter().filter_map(|r| r.ok()).collect();
        let failed = config.reps - ok.len();
        check_failures(failed, config.reps)?;
        let (m, se) = mean_and_stderr(&ok);
        let mut cell = Cell {
            u0,
            n,
            b: None,
            distance: Some(dist),
            reps_ok: ok.len(),
            failed,
            stats: Vec::new(),
        };
        cell.push("mean_abs_gap", m, se);
        cells.push(cell);
    }
    Ok(cells)
}

fn ergodic_cell(config: &ExperimentConfig, u0: f64, n: usize, b: f64) -> Result<Cell> {
    let spec = &config.spec;
    let p = spec.order();
    let kernel = KernelSpec::new(config.kernel, b)?;
    let t0 = (u0 * n as f64).round() as usize;
    let weights = kernel.weights(t0, n, p, BoundaryPolicy::Strict)?;
    let a = spec.eval_coefficients(u0, 0, Extension::Clamped)?;
    let target = a[0] / (1.0 - a[1..].iter().sum::<f64>());
    let results = replicate(config.reps, |r| -> Result<f64> {
        let path = simulate_stationary(spec, u0, n, derive_seed(config.base_seed, r))?;
        let mut num = CompensatedSum::default();
        let mut den = CompensatedSum::default();
        for &(k, w) in &weights.entries {
            num.add(w * path.x2[k - 1]);
            den.add(w);
        }
        Ok(num.value() / den.value())
    });
    let ok: Vec<f64> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failed = config.reps - ok.len();
    check_failures(failed, config.reps)?;
    let (m, se) = mean_and_stderr(&ok);
    let sq: Vec<f64> = ok.iter().map(|v| (v - target).powi(2)).collect();
    let (mse, mse_se) = mean_and_stderr(&sq);
    let rmse = mse.sqrt();
    let mut cell = Cell {
        u0,
        n,
        b: Some(b),
        distance: None,
        reps_ok: ok.len(),
        failed,
        stats: Vec::new(),
    };
    cell.push("target", target, 0.0);
    cell.push("weighted_mean", m, se);
    cell.push("rmse", rmse, if rmse > 0.0 { mse_se / (2.0 * rmse) } else { 0.0 });
    Ok(cell)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
