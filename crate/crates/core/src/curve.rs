//! Coefficient curves `a_j(u)` on rescaled time.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MAX_POLY_DEGREE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFamily {
    /// `[c]`
    Constant,
    /// `[c0, c1, ..., cd]`, `d <= 6`, value `sum c_i u^i`.
    Polynomial,
    /// `[a, b, c]` or `[a, b, c, k]`, value `a + b cos(2 pi k u) + c sin(2 pi k u)`, `k = 1` by default.
    Sinusoid,
    /// `[v_0, ..., v_m]`: values at the equally spaced knots `i / m` of `[0, 1]`,
    /// linear in between and constant outside `[0, 1]`.
    PiecewiseLinear,
}

impl CurveFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CurveFamily::Constant => "constant",
            CurveFamily::Polynomial => "polynomial",
            CurveFamily::Sinusoid => "sinusoid",
            CurveFamily::PiecewiseLinear => "piecewise-linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct ParameterCurve {
    family: CurveFamily,
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    family: CurveFamily,
    coefficients: Vec<f64>,
}

impl TryFrom<CurveRepr> for ParameterCurve {
    type Error = Error;

    fn try_from(r: CurveRepr) -> Result<Self> {
        ParameterCurve::new(r.family, r.coefficients)
    }
}

impl From<ParameterCurve> for CurveRepr {
    fn from(c: ParameterCurve) -> Self {
        CurveRepr {
            family: c.family,
            coefficients: c.coefficients,
        }
    }
}

impl ParameterCurve {
    pub fn new(family: CurveFamily, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{} curve has non-finite coefficients",
                family.name()
            )));
        }
        let n = coefficients.len();
        let ok = match family {
            CurveFamily::Constant => n == 1,
            CurveFamily::Polynomial => (1..=MAX_POLY_DEGREE + 1).contains(&n),
            CurveFamily::Sinusoid => {
                (n == 3 || n == 4) && (n == 3 || coefficients[3] > 0.0)
            }
            CurveFamily::PiecewiseLinear => n >= 2,
        };
        if !ok {
            return Err(Error::InvalidInput(format!(
                "{} curve cannot take coefficients {:?}",
                family.name(),
                coefficients
            )));
        }
        Ok(Self {
            family,
            coefficients,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(CurveFamily::Constant, vec![c]).expect("finite constant")
    }

    pub fn polynomial(coefficients: &[f64]) -> Result<Self> {
        Self::new(CurveFamily::Polynomial, coefficients.to_vec())
    }

    /// `a + b cos(2 pi k u) + c sin(2 pi k u)`.
    pub fn sinusoid(a: f64, b: f64, c: f64, k: f64) -> Result<Self> {
        Self::new(CurveFamily::Sinusoid, vec![a, b, c, k])
    }

    pub fn piecewise_linear(knot_values: &[f64]) -> Result<Self> {
        Self::new(CurveFamily::PiecewiseLinear, knot_values.to_vec())
    }

    pub fn family(&self) -> CurveFamily {
        self.family
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Highest derivative order available everywhere.
    pub fn smoothness(&self) -> u8 {
        match self.family {
            CurveFamily::PiecewiseLinear => 1,
            _ => 3,
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.eval(u, 0).expect("order 0 always defined")
    }

    /// `d^order a / du^order` at `u`, for `order <= 3`.
    ///
    /// Piecewise-linear curves use the right-hand slope at interior knots and
    /// the left-hand slope at `u = 1`.
    pub fn eval(&self, u: f64, order: u8) -> Result<f64> {
        if order > 3 {
            return Err(Error::InvalidInput(format!("derivative order {order} > 3")));
        }
        let c = &self.coefficients;
        Ok(match self.family {
            CurveFamily::Constant => {
                if order == 0 {
                    c[0]
                } else {
                    0.0
                }
            }
            CurveFamily::Polynomial => poly_derivative(c, u, order),
            CurveFamily::Sinusoid => {
                let k = c.get(3).copied().unwrap_or(1.0);
                let w = 2.0 * PI * k;
                let (s, co) = (w * u).sin_cos();
                let (b, cc) = (c[1], c[2]);
                match order {
                    0 => c[0] + b * co + cc * s,
                    1 => w * (-b * s + cc * co),
                    2 => -w * w * (b * co + cc * s),
                    _ => w * w * w * (b * s - cc * co),
                }
            }
            CurveFamily::PiecewiseLinear => {
                if order >= 2 {
                    return Err(Error::NotDifferentiable {
                        family: self.family.name(),
                        order,
                    });
                }
                let m = (c.len() - 1) as f64;
                if u <= 0.0 || u >= 1.0 {
                    let edge = if u <= 0.0 { 0 } else { c.len() - 1 };
                    if order == 0 {
                        c[edge]
                    } else if u < 0.0 || u > 1.0 {
                        0.0
                    } else if edge == 0 {
                        (c[1] - c[0]) * m
                    } else {
                        (c[edge] - c[edge - 1]) * m
                    }
                } else {
                    let pos = u * m;
                    let i = (pos.floor() as usize).min(c.len() - 2);
                    let frac = pos - i as f64;
                    if order == 0 {
                        c[i] + (c[i + 1] - c[i]) * frac
                    } else {
                        (c[i + 1] - c[i]) * m
                    }
                }
            }
        })
    }

    /// Exact `(min, max)` on `[0, 1]` where the family allows it.
    pub fn exact_range(&self) -> Option<(f64, f64)> {
        let c = &self.coefficients;
        match self.family {
            CurveFamily::Constant => Some((c[0], c[0])),
            CurveFamily::PiecewiseLinear => {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
            CurveFamily::Sinusoid => {
                let k = c.get(3).copied().unwrap_or(1.0);
                // a full period is covered only for integer k >= 1
                if k >= 1.0 && k.fract() == 0.0 {
                    let amp = c[1].hypot(c[2]);
                    Some((c[0] - amp, c[0] + amp))
                } else {
                    None
                }
            }
            CurveFamily::Polynomial => None,
        }
    }
}

fn poly_derivative(c: &[f64], u: f64, order: u8) -> f64 {
    let order = order as usize;
    if order >= c.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in (order..c.len()).rev() {
        let falling: f64 = ((i + 1 - order)..=i).map(|v| v as f64).product();
        acc = acc * u + c[i] * falling;
    }
    acc
}
