//! Gaussian quasi-likelihood of the local ARCH(p) fit with analytic
//! derivatives, plain and kernel weighted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{BoundaryPolicy, KernelSpec, LocalWeights};
use crate::model::TvArchSpec;
use crate::simulate::{simulate_stationary, simulate_tvarch, StartMode};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Value, gradient and Hessian in `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `w(alpha) = alpha_0 + sum_j alpha_j lag_j`, `lags[j - 1] = X_{k-j}^2`.
#[inline]
pub fn cond_variance(alpha: &[f64], lags: &[f64]) -> f64 {
    debug_assert_eq!(alpha.len(), lags.len() + 1);
    let mut w = alpha[0];
    for (a, l) in alpha[1..].iter().zip(lags) {
        w += a * l;
    }
    w
}

/// `l_k = (log w + x2_k / w) / 2` with its gradient and Hessian.
pub fn loglik_point(alpha: &[f64], x2_k: f64, lags: &[f64]) -> LikelihoodEval {
    let d = alpha.len();
    let mut acc = Accumulator::new(d);
    acc.add_point(alpha, x2_k, lags, 1.0);
    acc.finish()
}

struct Accumulator {
    d: usize,
    value: CompensatedSum,
    grad: Vec<CompensatedSum>,
    // upper triangle, row-major
    hess: Vec<CompensatedSum>,
    dw: Vec<f64>,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Self {
            d,
            value: CompensatedSum::default(),
            grad: vec![CompensatedSum::default(); d],
            hess: vec![CompensatedSum::default(); d * (d + 1) / 2],
            dw: vec![0.0; d],
        }
    }

    #[inline]
    fn add_point(&mut self, alpha: &[f64], x2: f64, lags: &[f64], weight: f64) {
        let w = cond_variance(alpha, lags);
        self.dw[0] = 1.0;
        self.dw[1..].copy_from_slice(lags);
        let r = x2 / w;
        self.value.add(weight * 0.5 * (w.ln() + r));
        // gradient: (1 - x2/w) dw / (2w)
        let gscale = weight * 0.5 * (1.0 - r) / w;
        // Hessian: (2 x2/w - 1) dw dw' / (2 w^2)
        let hscale = weight * 0.5 * (2.0 * r - 1.0) / (w * w);
        let mut idx = 0;
        for i in 0..self.d {
            self.grad[i].add(gscale * self.dw[i]);
            for j in i..self.d {
                self.hess[idx].add(hscale * self.dw[i] * self.dw[j]);
                idx += 1;
            }
        }
    }

    fn finish(&self) -> LikelihoodEval {
        let d = self.d;
        let gradient = DVector::from_iterator(d, self.grad.iter().map(|g| g.value()));
        let mut hessian = DMatrix::zeros(d, d);
        let mut idx = 0;
        for i in 0..d {
            for j in i..d {
                let v = self.hess[idx].value();
                hessian[(i, j)] = v;
                hessian[(j, i)] = v;
                idx += 1;
            }
        }
        LikelihoodEval {
            value: self.value.value(),
            gradient,
            hessian,
        }
    }
}

/// Observations around one anchor: the kernel weights and every `X_k^2`
/// they touch, including `p` lags before the first weighted index.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalData {
    p: usize,
    weights: LocalWeights,
    /// time index of `window[0]`
    start: usize,
    window: Vec<f64>,
}

impl LocalData {
    /// `x2[i]` holds `X_{i+1}^2`.
    pub fn new(x2: &[f64], p: usize, kernel: &KernelSpec, t0: usize, policy: BoundaryPolicy) -> Result<Self> {
        let weights = kernel.weights(t0, x2.len(), p, policy)?;
        Self::from_weights(x2, p, weights)
    }

    pub fn from_weights(x2: &[f64], p: usize, weights: LocalWeights) -> Result<Self> {
        if weights.first() < p + 1 || weights.last() > x2.len() {
            return Err(Error::InvalidInput(format!(
                "weights over {}..={} need {} lags inside a sample of {}",
                weights.first(),
                weights.last(),
                p,
                x2.len()
            )));
        }
        let start = weights.first() - p;
        let window = x2[start - 1..weights.last()].to_vec();
        if window.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("squared observations must be finite and >= 0".into()));
        }
        Ok(Self {
            p,
            weights,
            start,
            window,
        })
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &LocalWeights {
        &self.weights
    }

    pub fn t0(&self) -> usize {
        self.weights.t0
    }

    pub fn n(&self) -> usize {
        self.weights.n
    }

    /// `X_k^2`.
    pub fn x2(&self, k: usize) -> f64 {
        self.window[k - self.start]
    }

    /// `(X_{k-1}^2, ..., X_{k-p}^2)`.
    pub fn lags(&self, k: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.window[k - self.start - 1 - j];
        }
    }

    /// Visits `(weight, X_k^2, lags)` for each weighted `k`.
    pub fn for_each(&self, mut f: impl FnMut(f64, f64, &[f64])) {
        let mut lags = vec![0.0; self.p];
        for &(k, w) in &self.weights.entries {
            self.lags(k, &mut lags);
            f(w, self.x2(k), &lags);
        }
    }

    /// `sum_k w_k X_k^2 / sum_k w_k`.
    pub fn weighted_mean(&self) -> f64 {
        let mut num = CompensatedSum::default();
        let mut den = CompensatedSum::default();
        for &(k, w) in &self.weights.entries {
            num.add(w * self.x2(k));
            den.add(w);
        }
        num.value() / den.value()
    }
}

/// Kernel-weighted quasi-likelihood `sum_k w_k l_k(alpha)`.
pub fn weighted_likelihood(data: &LocalData, alpha: &[f64]) -> LikelihoodEval {
    assert_eq!(alpha.len(), data.p + 1, "alpha has wrong length");
    let mut acc = Accumulator::new(data.p + 1);
    data.for_each(|w, x2, lags| acc.add_point(alpha, x2, lags, w));
    acc.finish()
}

/// Weighted quasi-likelihood value only.
pub fn weighted_value(data: &LocalData, alpha: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    data.for_each(|w, x2, lags| {
        let v = cond_variance(alpha, lags);
        s.add(w * 0.5 * (v.ln() + x2 / v));
    });
    s.value()
}

/// The weighted likelihood evaluated on the stationary approximation at `u0`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_likelihood(
    spec: &TvArchSpec,
    u0: f64,
    alpha: &[f64],
    n: usize,
    seed: u64,
    kernel: &KernelSpec,
    t0: usize,
) -> Result<LikelihoodEval> {
    let path = simulate_stationary(spec, u0, n, seed)?;
    let data = LocalData::new(&path.x2, spec.order(), kernel, t0, BoundaryPolicy::Strict)?;
    Ok(weighted_likelihood(&data, alpha))
}

/// `grad L_{t0,N}(alpha) - grad L~_N(u0, alpha)` on one pair of paths
/// sharing innovations (`seed`); the tvARCH path starts stationary.
#[allow(clippy::too_many_arguments)]
pub fn bias_statistic(
    spec: &TvArchSpec,
    u0: f64,
    t0: usize,
    n: usize,
    seed: u64,
    kernel: &KernelSpec,
    alpha: &[f64],
) -> Result<DVector<f64>> {
    let p = spec.order();
    let tv = simulate_tvarch(spec, n, seed, StartMode::StationaryStart)?;
    let st = simulate_stationary(spec, u0, n, seed)?;
    let tv_data = LocalData::new(&tv.x2, p, kernel, t0, BoundaryPolicy::Strict)?;
    let st_data = LocalData::new(&st.x2, p, kernel, t0, BoundaryPolicy::Strict)?;
    let mut acc = vec![CompensatedSum::default(); p + 1];
    let mut lt = vec![0.0; p];
    let mut ls = vec![0.0; p];
    for &(k, w) in &tv_data.weights.entries {
        tv_data.lags(k, &mut lt);
        st_data.lags(k, &mut ls);
        let (wt, ws) = (cond_variance(alpha, &lt), cond_variance(alpha, &ls));
        let (gt, gs) = (0.5 * (1.0 - tv_data.x2(k) / wt) / wt, 0.5 * (1.0 - st_data.x2(k) / ws) / ws);
        acc[0].add(w * (gt - gs));
        for j in 0..p {
            acc[j + 1].add(w * (gt * lt[j] - gs * ls[j]));
        }
    }
    Ok(DVector::from_iterator(p + 1, acc.iter().map(|a| a.value())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use crate::omega::OmegaSpace;
    use crate::rng::splitmix64;

    struct Lcg(u64);
    impl Lcg {
        fn unit(&mut self) -> f64 {
            self.0 = splitmix64(self.0);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    #[test]
    fn cond_variance_examples() {
        assert_eq!(cond_variance(&[0.7], &[]), 0.7);
        assert!((cond_variance(&[0.5, 0.4], &[2.0]) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn unit_residual_has_zero_gradient() {
        let alpha = [0.5, 0.4];
        let lags = [2.0];
        let w = cond_variance(&alpha, &lags);
        let e = loglik_point(&alpha, w, &lags);
        assert!(e.gradient.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn hand_evaluated_point() {
        let e = loglik_point(&[1.0], 2.0, &[]);
        assert!((e.value - 1.0).abs() < 1e-15);
        assert!((e.gradient[0] + 0.5).abs() < 1e-15);
        assert!((e.hessian[(0, 0)] - 1.5).abs() < 1e-15);
    }

    // central-difference oracle, relative error against max(|exact|, 1)
    fn check_derivatives(alpha: &[f64], x2: f64, lags: &[f64]) {
        let e = loglik_point(alpha, x2, lags);
        let d = alpha.len();
        for i in 0..d {
            let h = 1e-6 * alpha[i].max(1e-3);
            let mut ap = alpha.to_vec();
            let mut am = alpha.to_vec();
            ap[i] += h;
            am[i] -= h;
            let fd = (loglik_point(&ap, x2, lags).value - loglik_point(&am, x2, lags).value) / (2.0 * h);
            let g = e.gradient[i];
            assert!((fd - g).abs() / g.abs().max(1.0) <= 1e-6, "grad {i}: {fd} vs {g}");
            let gp = loglik_point(&ap, x2, lags).gradient;
            let gm = loglik_point(&am, x2, lags).gradient;
            for j in 0..d {
                let fdh = (gp[j] - gm[j]) / (2.0 * h);
                let hv = e.hessian[(i, j)];
                assert!((fdh - hv).abs() / hv.abs().max(1.0) <= 1e-5, "hess {i},{j}: {fdh} vs {hv}");
            }
        }
        assert_eq!(e.hessian, e.hessian.transpose());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = Lcg(42);
        let om = OmegaSpace::new(2, 0.05, 3.0).unwrap();
        for _ in 0..100 {
            let raw = [0.05 + 2.9 * rng.unit(), rng.unit(), rng.unit()];
            let alpha = om.project(&raw).unwrap();
            let lags = [3.0 * rng.unit(), 3.0 * rng.unit()];
            let x2 = 4.0 * rng.unit();
            check_derivatives(&alpha, x2, &lags);
        }
    }

    #[test]
    fn single_weight_reduces_to_point() {
        let x2 = [0.3, 1.2, 0.7, 2.0];
        let data = LocalData::from_weights(&x2, 1, LocalWeights::point_mass(3, 4)).unwrap();
        let a = [0.4, 0.3];
        let e = weighted_likelihood(&data, &a);
        let pt = loglik_point(&a, 0.7, &[1.2]);
        assert_eq!(e, pt);
    }

    #[test]
    fn value_invariant_to_summation_order() {
        let mut rng = Lcg(7);
        let x2: Vec<f64> = (0..2001).map(|_| 5.0 * rng.unit().powi(3)).collect();
        let kernel = KernelSpec::new(KernelFamily::EpanechnikovRescaled, 0.5).unwrap();
        let data = LocalData::new(&x2, 1, &kernel, 1000, BoundaryPolicy::Strict).unwrap();
        let alpha = [0.3, 0.4];
        let v = weighted_value(&data, &alpha);
        let mut terms = Vec::new();
        data.for_each(|w, x, l| {
            let c = cond_variance(&alpha, l);
            terms.push(w * 0.5 * (c.ln() + x / c));
        });
        // reversed and interleaved orders
        for order in 0..3 {
            let mut t = terms.clone();
            match order {
                0 => t.reverse(),
                1 => t.sort_by(|a, b| a.partial_cmp(b).unwrap()),
                _ => t.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap()),
            }
            let mut s = CompensatedSum::default();
            t.iter().for_each(|&x| s.add(x));
            assert!((s.value() - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn data_window_checks() {
        let x2 = [1.0, 2.0, 3.0];
        assert!(LocalData::from_weights(&x2, 1, LocalWeights::point_mass(1, 3)).is_err());
        assert!(LocalData::from_weights(&[1.0, -1.0, 2.0], 1, LocalWeights::point_mass(3, 3)).is_err());
    }
}
