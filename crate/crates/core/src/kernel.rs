//! Kernels on `[-1/2, 1/2]` and the discrete local weights they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `W(x) = 1`.
    Rectangular,
    /// `W(x) = 3/2 (1 - 4 x^2)`.
    EpanechnikovRescaled,
    /// `W(x) = 2 (1 - 2 |x|)`.
    Triangular,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Rectangular => "rectangular",
            KernelFamily::EpanechnikovRescaled => "epanechnikov-rescaled",
            KernelFamily::Triangular => "triangular",
        }
    }

    /// `W(x)`, zero outside `[-1/2, 1/2]`.
    pub fn eval(&self, x: f64) -> f64 {
        if x.abs() > 0.5 {
            return 0.0;
        }
        match self {
            KernelFamily::Rectangular => 1.0,
            KernelFamily::EpanechnikovRescaled => 1.5 * (1.0 - 4.0 * x * x),
            KernelFamily::Triangular => 2.0 * (1.0 - 2.0 * x.abs()),
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" => Ok(KernelFamily::Rectangular),
            "epanechnikov-rescaled" | "epanechnikov" => Ok(KernelFamily::EpanechnikovRescaled),
            "triangular" => Ok(KernelFamily::Triangular),
            _ => Err(Error::InvalidInput(format!("unknown kernel {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    /// `int W`
    pub w1: f64,
    /// `int x W`
    pub xw: f64,
    /// `w_2 = int W^2`
    pub w2: f64,
    /// `w(2) = int x^2 W`
    pub w2nd: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `int_{-1/2}^{1/2} f` with 32 Gauss-Legendre points on each half, split at
/// the kink of the triangular kernel.
fn integrate(f: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(32);
    let mut total = 0.0;
    for (lo, hi) in [(-0.5, 0.0), (0.0, 0.5)] {
        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        total += rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
    }
    total
}

pub fn kernel_moments(family: KernelFamily) -> KernelMoments {
    KernelMoments {
        w1: integrate(|x| family.eval(x)),
        xw: integrate(|x| x * family.eval(x)),
        w2: integrate(|x| family.eval(x).powi(2)),
        w2nd: integrate(|x| x * x * family.eval(x)),
    }
}

/// How anchors whose support leaves the sample are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    Strict,
    /// Clip to the sample and renormalize the weights to sum to one.
    Renormalize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    b: f64,
    moments: KernelMoments,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, b: f64) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidInput(format!("bandwidth b = {b} outside (0, 1)")));
        }
        Ok(Self {
            family,
            b,
            moments: kernel_moments(family),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.b
    }

    pub fn moments(&self) -> &KernelMoments {
        &self.moments
    }

    pub fn with_bandwidth(&self, b: f64) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidInput(format!("bandwidth b = {b} outside (0, 1)")));
        }
        Ok(Self { b, ..*self })
    }

    /// Weights `W((t0 - k) / (bN)) / (bN)` over `k = p+1..=N`.
    pub fn weights(&self, t0: usize, n: usize, p: usize, policy: BoundaryPolicy) -> Result<LocalWeights> {
        let bn = self.b * n as f64;
        let half = bn / 2.0;
        let eps = 1e-9;
        let lo = (t0 as f64 - half - eps).ceil() as i64;
        let hi = (t0 as f64 + half + eps).floor() as i64;
        let first = p + 1;
        let clipped = lo < first as i64 || hi > n as i64;
        if clipped && policy == BoundaryPolicy::Strict {
            return Err(Error::BoundaryViolation {
                t0,
                lo,
                hi,
                first,
                n,
            });
        }
        let lo = lo.max(first as i64) as usize;
        let hi = (hi.min(n as i64)) as usize;
        let mut entries = Vec::with_capacity(hi.saturating_sub(lo) + 1);
        for k in lo..=hi {
            let x = ((t0 as f64 - k as f64) / bn).clamp(-0.5, 0.5);
            let w = self.family.eval(x) / bn;
            if w > 0.0 {
                entries.push((k, w));
            }
        }
        if entries.is_empty() {
            return Err(Error::BoundaryViolation {
                t0,
                lo: lo as i64,
                hi: hi as i64,
                first,
                n,
            });
        }
        if clipped {
            let s: f64 = entries.iter().map(|e| e.1).sum();
            entries.iter_mut().for_each(|e| e.1 /= s);
        }
        Ok(LocalWeights {
            t0,
            n,
            bn,
            entries,
            renormalized: clipped,
        })
    }
}

/// Sparse kernel weights around one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub t0: usize,
    pub n: usize,
    pub bn: f64,
    /// `(k, weight)` with `k` in time units `1..=N`, increasing.
    pub entries: Vec<(usize, f64)>,
    /// Set when the support was clipped and the weights rescaled.
    pub renormalized: bool,
}

impl LocalWeights {
    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn first(&self) -> usize {
        self.entries[0].0
    }

    pub fn last(&self) -> usize {
        self.entries[self.entries.len() - 1].0
    }

    /// A single unit weight at `k`.
    pub fn point_mass(k: usize, n: usize) -> Self {
        Self {
            t0: k,
            n,
            bn: 1.0,
            entries: vec![(k, 1.0)],
            renormalized: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [KernelFamily; 3] = [
        KernelFamily::Rectangular,
        KernelFamily::EpanechnikovRescaled,
        KernelFamily::Triangular,
    ];

    #[test]
    fn quadrature_matches_closed_forms() {
        let closed = [
            (KernelFamily::Rectangular, 1.0, 1.0 / 12.0),
            (KernelFamily::EpanechnikovRescaled, 1.2, 0.05),
            (KernelFamily::Triangular, 4.0 / 3.0, 1.0 / 24.0),
        ];
        for (fam, w2, w2nd) in closed {
            let m = kernel_moments(fam);
            assert!((m.w1 - 1.0).abs() < 1e-10, "{fam:?}");
            assert!(m.xw.abs() < 1e-10, "{fam:?}");
            assert!((m.w2 - w2).abs() < 1e-10, "{fam:?} {}", m.w2);
            assert!((m.w2nd - w2nd).abs() < 1e-10, "{fam:?} {}", m.w2nd);
        }
    }

    #[test]
    fn rectangular_interior_weights() {
        let k = KernelSpec::new(KernelFamily::Rectangular, 0.01).unwrap();
        let w = k.weights(5000, 10_000, 1, BoundaryPolicy::Strict).unwrap();
        assert_eq!(w.entries.len(), 101);
        assert!(w.entries.iter().all(|e| (e.1 - 0.01).abs() < 1e-12));
        assert!((w.sum() - 1.0).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn weights_are_centred() {
        for fam in ALL {
            let k = KernelSpec::new(fam, 0.05).unwrap();
            let n = 4000;
            let w = k.weights(2000, n, 2, BoundaryPolicy::Strict).unwrap();
            let m: f64 = w.entries.iter().map(|&(k, wk)| wk * (k as f64 - 2000.0) / n as f64).sum();
            assert!(m.abs() <= 2.0 / n as f64, "{fam:?} {m}");
        }
    }

    #[test]
    fn strict_boundary_violation() {
        let k = KernelSpec::new(KernelFamily::Rectangular, 0.1).unwrap();
        let e = k.weights(10, 10_000, 1, BoundaryPolicy::Strict).unwrap_err();
        assert!(matches!(e, Error::BoundaryViolation { t0: 10, .. }));
    }

    #[test]
    fn renormalized_boundary_sums_to_one() {
        let k = KernelSpec::new(KernelFamily::EpanechnikovRescaled, 0.1).unwrap();
        let w = k.weights(10, 10_000, 1, BoundaryPolicy::Renormalize).unwrap();
        assert!(w.renormalized);
        assert_eq!(w.first(), 2);
        assert!((w.sum() - 1.0).abs() < 1e-12);
        let interior = k.weights(5000, 10_000, 1, BoundaryPolicy::Renormalize).unwrap();
        assert!(!interior.renormalized);
    }

    #[test]
    fn rectangular_sum_error_halves_with_bn() {
        let k = KernelSpec::new(KernelFamily::Rectangular, 0.01).unwrap();
        let mut prev: Option<f64> = None;
        for n in [5_000, 10_000, 20_000, 40_000] {
            let w = k.weights(n / 2, n, 1, BoundaryPolicy::Strict).unwrap();
            let err = (w.sum() - 1.0).abs();
            if let Some(p) = prev {
                let ratio = p / err;
                assert!((1.5..=2.5).contains(&ratio), "n={n} ratio={ratio}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn weights_translate_with_anchor() {
        for fam in ALL {
            let k = KernelSpec::new(fam, 0.03).unwrap();
            let a = k.weights(1000, 5000, 1, BoundaryPolicy::Strict).unwrap();
            let b = k.weights(1037, 5000, 1, BoundaryPolicy::Strict).unwrap();
            assert_eq!(a.entries.len(), b.entries.len());
            for (x, y) in a.entries.iter().zip(&b.entries) {
                assert_eq!(x.0 + 37, y.0);
                assert_eq!(x.1, y.1);
            }
        }
    }

    #[test]
    fn bad_bandwidth() {
        assert!(KernelSpec::new(KernelFamily::Rectangular, 0.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Rectangular, 1.0).is_err());
    }
}
