//! Path generators: the tvARCH recursion, its frozen-coefficient stationary
//! approximation, truncated Volterra expansions, the bounding process `U_t`
//! and the derivative processes in rescaled time.
//!
//! All generators index innovations by absolute time through
//! [`InnovationStream`], so paths built from the same seed share `Z_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Extension, TvArchSpec};
use crate::rng::{derive_seed, InnovationStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// `X_t^2 = 0` for `t <= 0`.
    PaperExact,
    /// Curves extended constantly below `u = 0`, with a discarded burn-in.
    StationaryStart,
}

impl StartMode {
    pub fn name(&self) -> &'static str {
        match self {
            StartMode::PaperExact => "paper-exact",
            StartMode::StationaryStart => "stationary-start",
        }
    }
}

impl std::str::FromStr for StartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-exact" => Ok(StartMode::PaperExact),
            "stationary-start" => Ok(StartMode::StationaryStart),
            _ => Err(Error::InvalidInput(format!("unknown start mode {s:?}"))),
        }
    }
}

/// Presample length discarded by stationary starts.
pub fn burn_in(p: usize) -> usize {
    512.max(20 * p)
}

/// A realization at times `t = 1..=n`; entry `i` holds time `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub n: usize,
    pub x2: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub z: Vec<f64>,
    pub seed: u64,
    pub start_mode: StartMode,
    pub burn_in: usize,
}

/// `d^s X~_t(u)^2 / du^s` at `u0` for `t = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativePath {
    pub n: usize,
    pub u0: f64,
    pub order: u8,
    pub values: Vec<f64>,
    pub base: SamplePath,
}

fn check_n(spec: &TvArchSpec, n: usize) -> Result<()> {
    if n < spec.order() + 1 {
        return Err(Error::InvalidInput(format!(
            "path length {n} shorter than p + 1 = {}",
            spec.order() + 1
        )));
    }
    Ok(())
}

fn check_u0(u0: f64) -> Result<()> {
    if !(u0 > 0.0 && u0 <= 1.0) {
        return Err(Error::InvalidInput(format!("u0 = {u0} outside (0, 1]")));
    }
    Ok(())
}

/// Runs `sigma_t^2 = a_0 + sum_j a_j X_{t-j}^2` for `t = first..=n` from zero
/// pre-history, calling `coef(t, buf)` for the coefficients of step `t`.
/// Returns values for `t = 1..=n`.
fn arch_recursion(
    stream: &InnovationStream,
    p: usize,
    first: i64,
    n: usize,
    mut coef: impl FnMut(i64, &mut [f64]),
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let total = (n as i64 - first + 1) as usize;
    let mut x2 = vec![0.0; total];
    let mut s2 = vec![0.0; total];
    let mut zs = vec![0.0; total];
    let mut a = vec![0.0; p + 1];
    for i in 0..total {
        let t = first + i as i64;
        coef(t, &mut a);
        let mut s = a[0];
        for j in 1..=p.min(i) {
            s += a[j] * x2[i - j];
        }
        let z = stream.z(t);
        zs[i] = z;
        s2[i] = s;
        x2[i] = z * z * s;
    }
    let skip = (1 - first) as usize;
    (x2.split_off(skip), s2.split_off(skip), zs.split_off(skip))
}

/// tvARCH(p) path `X_{t,N}^2 = Z_t^2 (a_0(t/N) + sum_j a_j(t/N) X_{t-j,N}^2)`.
pub fn simulate_tvarch(spec: &TvArchSpec, n: usize, seed: u64, mode: StartMode) -> Result<SamplePath> {
    check_n(spec, n)?;
    tvarch_prefix(spec, n, n, seed, mode)
}

/// The first `upto` steps of a length-`n` tvARCH path.
pub(crate) fn tvarch_prefix(
    spec: &TvArchSpec,
    n: usize,
    upto: usize,
    seed: u64,
    mode: StartMode,
) -> Result<SamplePath> {
    let p = spec.order();
    let stream = InnovationStream::new(seed, spec.innovation());
    let nf = n as f64;
    let (first, burn, ext) = match mode {
        StartMode::PaperExact => (1, 0, Extension::Zero),
        StartMode::StationaryStart => (1 - burn_in(p) as i64, burn_in(p), Extension::Clamped),
    };
    let (x2, sigma2, z) = arch_recursion(&stream, p, first, upto, |t, a| {
        spec.eval_coefficients_into(t as f64 / nf, 0, ext, a).expect("order 0")
    });
    Ok(SamplePath {
        n: upto,
        x2,
        sigma2,
        z,
        seed,
        start_mode: mode,
        burn_in: burn,
    })
}

/// Stationary ARCH(p) path with coefficients frozen at `a(u0)`.
pub fn simulate_stationary(spec: &TvArchSpec, u0: f64, n: usize, seed: u64) -> Result<SamplePath> {
    check_n(spec, n)?;
    check_u0(u0)?;
    let p = spec.order();
    let stream = InnovationStream::new(seed, spec.innovation());
    let frozen = spec.eval_coefficients(u0, 0, Extension::Clamped)?;
    let burn = burn_in(p);
    let (x2, sigma2, z) = arch_recursion(&stream, p, 1 - burn as i64, n, |_, a| {
        a.copy_from_slice(&frozen)
    });
    Ok(SamplePath {
        n,
        x2,
        sigma2,
        z,
        seed,
        start_mode: StartMode::StationaryStart,
        burn_in: burn,
    })
}

/// Volterra terms up to order `r` by the recursion
/// `m_t(k) = Z_t^2 sum_j a_j(t) m_{t-j}(k-1)`, `m_t(0) = a_0(t) Z_t^2`,
/// for `t = first..=n`. Terms reaching below `first` are zero.
fn volterra_recursion(
    stream: &InnovationStream,
    p: usize,
    first: i64,
    n: usize,
    r: usize,
    mut coef: impl FnMut(i64, &mut [f64]),
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let total = (n as i64 - first + 1) as usize;
    let mut zs = vec![0.0; total];
    let mut coefs = vec![0.0; total * (p + 1)];
    for i in 0..total {
        let t = first + i as i64;
        zs[i] = stream.z(t);
        coef(t, &mut coefs[i * (p + 1)..(i + 1) * (p + 1)]);
    }
    // sigma2 accumulates a_0 + sum_k s_t(k) with m_t(k) = Z_t^2 s_t(k)
    let mut sigma2: Vec<f64> = (0..total).map(|i| coefs[i * (p + 1)]).collect();
    let mut prev: Vec<f64> = (0..total).map(|i| coefs[i * (p + 1)] * zs[i] * zs[i]).collect();
    let mut next = vec![0.0; total];
    for _k in 1..=r {
        if p == 0 {
            break;
        }
        for i in 0..total {
            let a = &coefs[i * (p + 1)..(i + 1) * (p + 1)];
            let mut s = 0.0;
            for j in 1..=p.min(i) {
                s += a[j] * prev[i - j];
            }
            sigma2[i] += s;
            next[i] = zs[i] * zs[i] * s;
        }
        std::mem::swap(&mut prev, &mut next);
    }
    let x2: Vec<f64> = sigma2.iter().zip(&zs).map(|(s, z)| z * z * s).collect();
    let skip = (1 - first) as usize;
    let mut x2 = x2;
    (x2.split_off(skip), sigma2.split_off(skip), zs.split_off(skip))
}

/// Volterra expansion of the tvARCH path truncated after `r` product terms,
/// with coefficients vanishing before the sample.
pub fn volterra_truncated(spec: &TvArchSpec, n: usize, r: usize, seed: u64) -> Result<SamplePath> {
    check_n(spec, n)?;
    if r < 1 {
        return Err(Error::InvalidInput("truncation order r must be >= 1".into()));
    }
    let stream = InnovationStream::new(seed, spec.innovation());
    let nf = n as f64;
    let (x2, sigma2, z) = volterra_recursion(&stream, spec.order(), 1, n, r, |t, a| {
        spec.eval_coefficients_into(t as f64 / nf, 0, Extension::Zero, a).expect("order 0")
    });
    Ok(SamplePath {
        n,
        x2,
        sigma2,
        z,
        seed,
        start_mode: StartMode::PaperExact,
        burn_in: 0,
    })
}

/// Volterra expansion of the stationary approximation at `u0`, truncated
/// after `r` terms. Uses the innovations back to `t = 1 - r p`.
pub fn volterra_stationary(spec: &TvArchSpec, u0: f64, n: usize, r: usize, seed: u64) -> Result<SamplePath> {
    check_n(spec, n)?;
    check_u0(u0)?;
    if r < 1 {
        return Err(Error::InvalidInput("truncation order r must be >= 1".into()));
    }
    let p = spec.order();
    let stream = InnovationStream::new(seed, spec.innovation());
    let frozen = spec.eval_coefficients(u0, 0, Extension::Clamped)?;
    let first = 1 - (r * p) as i64;
    let (x2, sigma2, z) = volterra_recursion(&stream, p, first, n, r, |_, a| a.copy_from_slice(&frozen));
    Ok(SamplePath {
        n,
        x2,
        sigma2,
        z,
        seed,
        start_mode: StartMode::StationaryStart,
        burn_in: r * p,
    })
}

/// Truncated bounding process
/// `U_t = Z_t^2 + sum_{k=1}^r Q^{k-1} k B_t(k)` where
/// `A_t(k) = Z_t^2 sum_j A_{t-j}(k-1) / l(j)` and
/// `B_t(k) = Z_t^2 sum_j (j A_{t-j}(k-1) + B_{t-j}(k-1)) / l(j)`,
/// `A_t(0) = Z_t^2`, `B_t(0) = 0`. Values for `t = 1..=n`.
pub fn companion_u(spec: &TvArchSpec, n: usize, r: usize, seed: u64) -> Result<Vec<f64>> {
    check_n(spec, n)?;
    if r < 1 {
        return Err(Error::InvalidInput("truncation order r must be >= 1".into()));
    }
    let p = spec.order();
    let reg = spec.regularity();
    let inv_ell: Vec<f64> = (0..=p).map(|j| if j == 0 { 0.0 } else { 1.0 / reg.ell.ell(j) }).collect();
    let stream = InnovationStream::new(seed, spec.innovation());
    let first = 1 - (r * p) as i64;
    let total = (n as i64 - first + 1) as usize;
    let z2: Vec<f64> = (0..total).map(|i| stream.z(first + i as i64).powi(2)).collect();
    let mut u = z2.clone();
    let mut a_prev = z2.clone();
    let mut b_prev = vec![0.0; total];
    let mut a_next = vec![0.0; total];
    let mut b_next = vec![0.0; total];
    let mut qk = 1.0;
    for k in 1..=r {
        if p == 0 {
            break;
        }
        for i in 0..total {
            let (mut sa, mut sb) = (0.0, 0.0);
            for j in 1..=p.min(i) {
                sa += inv_ell[j] * a_prev[i - j];
                sb += inv_ell[j] * (j as f64 * a_prev[i - j] + b_prev[i - j]);
            }
            a_next[i] = z2[i] * sa;
            b_next[i] = z2[i] * sb;
            u[i] += qk * k as f64 * b_next[i];
        }
        qk *= reg.q;
        std::mem::swap(&mut a_prev, &mut a_next);
        std::mem::swap(&mut b_prev, &mut b_next);
    }
    Ok(u.split_off((1 - first) as usize))
}

/// First and (optionally) second derivative processes at `u0`, sharing the
/// innovations and burn-in of `simulate_stationary(spec, u0, n, seed)`:
///
/// `D_t = Z_t^2 (a_0' + sum_j a_j' X~_{t-j}^2 + sum_j a_j D_{t-j})`,
/// `D2_t = Z_t^2 (a_0'' + sum_j a_j'' X~_{t-j}^2 + 2 sum_j a_j' D_{t-j} + sum_j a_j D2_{t-j})`.
pub fn derivative_processes(
    spec: &TvArchSpec,
    u0: f64,
    n: usize,
    seed: u64,
    second: bool,
) -> Result<(SamplePath, Vec<f64>, Option<Vec<f64>>)> {
    check_n(spec, n)?;
    check_u0(u0)?;
    let p = spec.order();
    let a = spec.eval_coefficients(u0, 0, Extension::Clamped)?;
    let d1 = spec.eval_coefficients(u0, 1, Extension::Clamped)?;
    let d2 = if second {
        Some(spec.eval_coefficients(u0, 2, Extension::Clamped)?)
    } else {
        None
    };
    let base = simulate_stationary(spec, u0, n, seed)?;
    let stream = InnovationStream::new(seed, spec.innovation());
    let burn = burn_in(p);
    let first = 1 - burn as i64;
    let total = n + burn;
    // the stationary path again, including the burn-in
    let (x2_full, _, _) = {
        let mut x2 = vec![0.0; total];
        let mut zs = vec![0.0; total];
        for i in 0..total {
            let mut s = a[0];
            for j in 1..=p.min(i) {
                s += a[j] * x2[i - j];
            }
            let z = stream.z(first + i as i64);
            zs[i] = z;
            x2[i] = z * z * s;
        }
        (x2, (), zs)
    };
    debug_assert_eq!(&x2_full[burn..], &base.x2[..]);
    let mut dd1 = vec![0.0; total];
    let mut dd2 = vec![0.0; if second { total } else { 0 }];
    for i in 0..total {
        let z = stream.z(first + i as i64);
        let z2 = z * z;
        let mut s1 = d1[0];
        for j in 1..=p.min(i) {
            s1 += d1[j] * x2_full[i - j] + a[j] * dd1[i - j];
        }
        dd1[i] = z2 * s1;
        if let Some(d2c) = &d2 {
            let mut s2 = d2c[0];
            for j in 1..=p.min(i) {
                s2 += d2c[j] * x2_full[i - j] + 2.0 * d1[j] * dd1[i - j] + a[j] * dd2[i - j];
            }
            dd2[i] = z2 * s2;
        }
    }
    let first_order = dd1.split_off(burn);
    let second_order = if second { Some(dd2.split_off(burn)) } else { None };
    Ok((base, first_order, second_order))
}

/// Derivative process of order 1 or 2 at `u0`.
pub fn derivative_path(spec: &TvArchSpec, u0: f64, n: usize, seed: u64, order: u8) -> Result<DerivativePath> {
    if !(order == 1 || order == 2) {
        return Err(Error::InvalidInput(format!("derivative order {order} not in {{1, 2}}")));
    }
    let (base, d1, d2) = derivative_processes(spec, u0, n, seed, order == 2)?;
    let values = if order == 1 { d1 } else { d2.unwrap() };
    Ok(DerivativePath {
        n,
        u0,
        order,
        values,
        base,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSummary {
    pub t: usize,
    /// `t / N - u0`.
    pub distance: f64,
    pub reps: usize,
    /// Mean of `|X_{t,N}^2 - X~_t(u0)^2 - d D_t - d^2 D2_t / 2|`.
    pub mean_abs_residual: f64,
    pub residual_stderr: f64,
    /// Mean of `|X_{t,N}^2 - X~_t(u0)^2|`.
    pub mean_abs_zeroth: f64,
}

/// Residual of the second-order expansion of the tvARCH path around the
/// stationary approximation at `u0`, at `t = round(t_over_n * N)`, averaged
/// over `reps` replications seeded by `derive_seed(seed, r)`. The tvARCH
/// path uses the stationary start so it shares innovations with `X~`.
pub fn taylor_residual(
    spec: &TvArchSpec,
    u0: f64,
    t_over_n: f64,
    n: usize,
    seed: u64,
    reps: usize,
) -> Result<TaylorSummary> {
    check_u0(u0)?;
    let t = (t_over_n * n as f64).round() as usize;
    if t < 1 || t > n {
        return Err(Error::InvalidInput(format!("t/N = {t_over_n} maps outside 1..={n}")));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be >= 1".into()));
    }
    let d = t as f64 / n as f64 - u0;
    let mut res = Vec::with_capacity(reps);
    let mut zeroth = 0.0;
    for r in 0..reps {
        let s = derive_seed(seed, r as u64);
        let x2_t = tvarch_prefix(spec, n, t, s, StartMode::StationaryStart)?.x2[t - 1];
        let (base, d1, d2) = derivative_processes(spec, u0, t, s, true)?;
        let d2 = d2.unwrap();
        let i = t - 1;
        let stat = base.x2[i];
        let approx = stat + d * d1[i] + 0.5 * d * d * d2[i];
        res.push((x2_t - approx).abs());
        zeroth += (x2_t - stat).abs();
    }
    let (mean, se) = mean_and_stderr(&res);
    Ok(TaylorSummary {
        t,
        distance: d,
        reps,
        mean_abs_residual: mean,
        residual_stderr: se,
        mean_abs_zeroth: zeroth / reps as f64,
    })
}

pub(crate) fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
