//! The compact parameter polytope of the local estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `{alpha : sum_{j>=1} alpha_j <= 1, rho1 <= alpha_0 <= rho2, alpha_j >= rho1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaSpace {
    p: usize,
    rho1: f64,
    rho2: f64,
}

impl OmegaSpace {
    pub fn new(p: usize, rho1: f64, rho2: f64) -> Result<Self> {
        if !(rho1 > 0.0 && rho1 <= rho2 && rho2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need 0 < rho1 <= rho2 < inf, got rho1={rho1}, rho2={rho2}"
            )));
        }
        if p as f64 * rho1 > 1.0 {
            return Err(Error::InfeasibleOmega(p as f64 * rho1));
        }
        Ok(Self { p, rho1, rho2 })
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    /// `(rho2 + 1) / rho1`, bounding `X^2 / w(alpha)` by `kappa Z^2`.
    pub fn kappa(&self) -> f64 {
        (self.rho2 + 1.0) / self.rho1
    }

    pub fn contains(&self, alpha: &[f64]) -> bool {
        alpha.len() == self.p + 1
            && alpha[0] >= self.rho1
            && alpha[0] <= self.rho2
            && alpha[1..].iter().all(|&a| a >= self.rho1)
            && alpha[1..].iter().sum::<f64>() <= 1.0
    }

    /// Euclidean projection onto the polytope. Feasible points are returned
    /// unchanged, and every output passes [`OmegaSpace::contains`].
    pub fn project(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.p + 1 {
            return Err(Error::InvalidInput(format!(
                "alpha has length {}, expected {}",
                alpha.len(),
                self.p + 1
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("alpha has non-finite entries".into()));
        }
        if self.contains(alpha) {
            return Ok(alpha.to_vec());
        }
        let mut out = Vec::with_capacity(alpha.len());
        out.push(alpha[0].clamp(self.rho1, self.rho2));
        if self.p > 0 {
            // shift to {y >= 0, sum y <= cap}
            let cap = 1.0 - self.p as f64 * self.rho1;
            let y: Vec<f64> = alpha[1..].iter().map(|a| a - self.rho1).collect();
            let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
            let y = if clipped.iter().sum::<f64>() <= cap {
                clipped
            } else {
                project_simplex(&y, cap)
            };
            out.extend(y.iter().map(|v| v + self.rho1));
            self.repair_sum(&mut out);
        }
        debug_assert!(self.contains(&out), "{out:?}");
        Ok(out)
    }

    // rounding in the shift can push the sum a few ulps above 1
    fn repair_sum(&self, out: &mut [f64]) {
        for _ in 0..8 {
            let s: f64 = out[1..].iter().sum();
            if s <= 1.0 {
                return;
            }
            let (imax, _) = out[1..]
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            let v = &mut out[1 + imax];
            *v = (*v - (s - 1.0)).max(self.rho1);
            if s - 1.0 < f64::EPSILON {
                *v = f64::from_bits(v.to_bits() - 1).max(self.rho1);
            }
        }
    }
}

/// Projection onto `{y >= 0, sum y = cap}` by sorting.
fn project_simplex(y: &[f64], cap: f64) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - cap) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}
