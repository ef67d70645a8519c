//! tvARCH(p) specifications and their regularity conditions.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::curve::ParameterCurve;
use crate::error::{Error, Result};
use crate::rng::InnovationLaw;

/// Points of the grid on `[0, 1]` used for sup/inf conditions.
pub const ASSUMPTION_GRID: usize = 1001;

/// Exponent excess used by the asymptotic normality moment check, `E|Z|^{4(1 + delta)}`.
pub const CLT_DELTA: f64 = 0.1;

/// The weight sequence `l(j)` bounding the lag coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightSequence {
    /// `l(j) = 1`; enough for finite order.
    Unit,
    /// `l(1) = 1`, `l(j) = j^2 log^{1 + kappa}(j)` for `j > 1`.
    LogSquared { kappa: f64 },
    /// `l(j) = eta^j`, `eta > 1`.
    Geometric { eta: f64 },
}

impl WeightSequence {
    pub fn ell(&self, j: usize) -> f64 {
        match *self {
            WeightSequence::Unit => 1.0,
            WeightSequence::LogSquared { kappa } => {
                if j <= 1 {
                    1.0
                } else {
                    let jf = j as f64;
                    jf * jf * jf.ln().powf(1.0 + kappa)
                }
            }
            WeightSequence::Geometric { eta } => eta.powi(j as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            WeightSequence::LogSquared { kappa } if !(kappa > 0.0) => Err(Error::InvalidInput(
                format!("log-squared weight sequence needs kappa > 0, got {kappa}"),
            )),
            WeightSequence::Geometric { eta } if !(eta > 1.0) => Err(Error::InvalidInput(
                format!("geometric weight sequence needs eta > 1, got {eta}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Constants of the regularity conditions on the coefficient curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// Lower bound on `a_0`.
    pub rho: f64,
    /// Coefficient bound, `sup a_j <= q / l(j)`.
    pub q: f64,
    /// Contraction margin, `q sum 1/l(j) <= 1 - nu`.
    pub nu: f64,
    /// Lipschitz constant, `|a_j(u) - a_j(v)| <= m |u - v| / l(j)`.
    pub m: f64,
    pub ell: WeightSequence,
}

/// What the coefficient curves return below `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extension {
    /// All coefficients vanish for `u < 0`.
    Zero,
    /// Curves are evaluated at `clamp(u, 0, 1)`.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvArchSpec {
    curves: Vec<ParameterCurve>,
    innovation: InnovationLaw,
    regularity: Regularity,
}

/// One inequality of an assumption check with its two sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    pub location: Option<f64>,
    pub passed: bool,
}

impl Check {
    fn le(name: &str, inequality: String, lhs: f64, rhs: f64, location: Option<f64>) -> Self {
        Check {
            name: name.to_string(),
            inequality,
            lhs,
            rhs,
            location,
            passed: lhs <= rhs,
        }
    }

    fn to_error(&self) -> Error {
        Error::AssumptionViolation {
            inequality: self.inequality.clone(),
            location: self.location,
            lhs: self.lhs,
            rhs: self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let loc = c.location.map(|u| format!(" at u={u}")).unwrap_or_default();
            out.push_str(&format!(
                "{} {}: {} (lhs={}, rhs={}{})\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.inequality,
                c.lhs,
                c.rhs,
                loc
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentLevel {
    /// Moments needed for asymptotic normality.
    Clt,
    /// Moments needed for the explicit bias expansion.
    Bias,
}

/// Validated tvARCH(p) spec.
///
/// Checks every condition on a grid of [`ASSUMPTION_GRID`] points and fails
/// on the first violated inequality.
pub fn build_spec(
    curves: Vec<ParameterCurve>,
    innovation: InnovationLaw,
    regularity: Regularity,
) -> Result<TvArchSpec> {
    let spec = TvArchSpec::unchecked(curves, innovation, regularity)?;
    let report = spec.assumption_report();
    match report.first_failure() {
        Some(c) => Err(c.to_error()),
        None => Ok(spec),
    }
}

impl TvArchSpec {
    /// Structural validation only (curve count, positive constants, law
    /// parameters); the assumption inequalities are not checked.
    pub fn unchecked(
        curves: Vec<ParameterCurve>,
        innovation: InnovationLaw,
        regularity: Regularity,
    ) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidInput("at least the a_0 curve is required".into()));
        }
        let r = &regularity;
        if !(r.rho > 0.0 && r.q > 0.0 && r.m > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rho, q and m must be positive (rho={}, q={}, m={})",
                r.rho, r.q, r.m
            )));
        }
        if !(r.nu > 0.0 && r.nu < 1.0) {
            return Err(Error::InvalidInput(format!("nu must lie in (0, 1), got {}", r.nu)));
        }
        r.ell.validate()?;
        if let InnovationLaw::StudentT { df } = innovation {
            if !(df > 8.0) {
                return Err(Error::InvalidInput(format!(
                    "standardized Student-t needs df > 8, got {df}"
                )));
            }
        }
        Ok(Self {
            curves,
            innovation,
            regularity,
        })
    }

    pub fn order(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn curves(&self) -> &[ParameterCurve] {
        &self.curves
    }

    pub fn innovation(&self) -> InnovationLaw {
        self.innovation
    }

    pub fn regularity(&self) -> &Regularity {
        &self.regularity
    }

    /// `sum_{j=1}^p 1 / l(j)`.
    pub fn ell_sum(&self) -> f64 {
        (1..=self.order()).map(|j| 1.0 / self.regularity.ell.ell(j)).sum()
    }

    /// Highest derivative order all curves support.
    pub fn smoothness(&self) -> u8 {
        self.curves.iter().map(|c| c.smoothness()).min().unwrap_or(3)
    }

    /// `(d^s a_0/du^s, ..., d^s a_p/du^s)` at `u`.
    pub fn eval_coefficients(&self, u: f64, order: u8, ext: Extension) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.curves.len()];
        self.eval_coefficients_into(u, order, ext, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_coefficients_into(
        &self,
        u: f64,
        order: u8,
        ext: Extension,
        out: &mut [f64],
    ) -> Result<()> {
        let u = match ext {
            Extension::Zero if u < 0.0 => {
                out.iter_mut().for_each(|v| *v = 0.0);
                return Ok(());
            }
            Extension::Zero => u,
            Extension::Clamped => u.clamp(0.0, 1.0),
        };
        for (o, c) in out.iter_mut().zip(&self.curves) {
            *o = c.eval(u, order)?;
        }
        Ok(())
    }

    /// `sup_{[0,1]} a_0` (grid maximum, or exact where available).
    pub fn sup_a0(&self) -> f64 {
        curve_range(&self.curves[0], ASSUMPTION_GRID).1
    }

    pub fn assumption_report(&self) -> CheckReport {
        self.assumption_report_on_grid(ASSUMPTION_GRID)
    }

    /// All regularity inequalities evaluated on `n_grid` equally spaced points.
    pub fn assumption_report_on_grid(&self, n_grid: usize) -> CheckReport {
        let r = &self.regularity;
        let grid = unit_grid(n_grid);
        let mut checks = Vec::new();

        let (u_min, a0_min) = grid_argmin(&self.curves[0], &grid);
        let (a0_min, u_min) = match self.curves[0].exact_range() {
            Some((lo, _)) if lo < a0_min => (lo, None),
            _ => (a0_min, Some(u_min)),
        };
        checks.push(Check::le(
            "lower-bound-a0",
            format!("rho <= inf a_0(u) ({} <= {})", r.rho, a0_min),
            r.rho,
            a0_min,
            u_min,
        ));

        for j in 1..=self.order() {
            let bound = r.q / r.ell.ell(j);
            let (u_max, a_max) = grid_argmax(&self.curves[j], &grid);
            let (a_max, u_max) = match self.curves[j].exact_range() {
                Some((_, hi)) if hi > a_max => (hi, None),
                _ => (a_max, Some(u_max)),
            };
            checks.push(Check::le(
                &format!("coefficient-bound-a{j}"),
                format!("sup a_{j}(u) <= Q/l({j})"),
                a_max,
                bound,
                u_max,
            ));
            let (u_lo, a_lo) = grid_argmin(&self.curves[j], &grid);
            checks.push(Check::le(
                &format!("nonnegative-a{j}"),
                format!("a_{j}(u) >= 0"),
                -a_lo,
                0.0,
                Some(u_lo),
            ));
        }

        checks.push(Check::le(
            "contraction",
            "Q sum_j 1/l(j) <= 1 - nu".into(),
            r.q * self.ell_sum(),
            1.0 - r.nu,
            None,
        ));

        for j in 0..=self.order() {
            // a_0 is held to M |u - v|, i.e. l(0) = 1
            let ell = if j == 0 { 1.0 } else { r.ell.ell(j) };
            let mut worst = (0.0f64, 0.0f64);
            for w in grid.windows(2) {
                let (u, v) = (w[0], w[1]);
                let ratio = (self.curves[j].value(v) - self.curves[j].value(u)).abs() * ell / (v - u);
                if ratio > worst.0 {
                    worst = (ratio, u);
                }
            }
            checks.push(Check::le(
                &format!("lipschitz-a{j}"),
                format!("|a_{j}(u) - a_{j}(v)| <= M |u - v| / l({j})"),
                worst.0,
                r.m,
                Some(worst.1),
            ));
        }

        CheckReport { checks }
    }

    /// Grid check that `a_u` lies in the interior of `omega`.
    pub fn interior_report(&self, omega: &crate::omega::OmegaSpace) -> CheckReport {
        let grid = unit_grid(ASSUMPTION_GRID);
        let mut worst_a0_lo = (f64::INFINITY, 0.0);
        let mut worst_a0_hi = (f64::NEG_INFINITY, 0.0);
        let mut worst_aj = (f64::INFINITY, 0.0);
        let mut worst_sum = (f64::NEG_INFINITY, 0.0);
        let mut a = vec![0.0; self.curves.len()];
        for &u in grid.iter().skip(1) {
            self.eval_coefficients_into(u, 0, Extension::Clamped, &mut a).unwrap();
            if a[0] < worst_a0_lo.0 {
                worst_a0_lo = (a[0], u);
            }
            if a[0] > worst_a0_hi.0 {
                worst_a0_hi = (a[0], u);
            }
            for &aj in &a[1..] {
                if aj < worst_aj.0 {
                    worst_aj = (aj, u);
                }
            }
            let s: f64 = a[1..].iter().sum();
            if s > worst_sum.0 {
                worst_sum = (s, u);
            }
        }
        let strict = |name: &str, ineq: &str, lhs: f64, rhs: f64, u: f64| Check {
            name: name.into(),
            inequality: ineq.into(),
            lhs,
            rhs,
            location: Some(u),
            passed: lhs < rhs,
        };
        let mut checks = vec![
            strict("interior-a0-lower", "rho1 < a_0(u)", omega.rho1(), worst_a0_lo.0, worst_a0_lo.1),
            strict("interior-a0-upper", "a_0(u) < rho2", worst_a0_hi.0, omega.rho2(), worst_a0_hi.1),
        ];
        if self.order() > 0 {
            checks.push(strict("interior-aj-lower", "rho1 < a_j(u)", omega.rho1(), worst_aj.0, worst_aj.1));
            checks.push(strict("interior-sum", "sum_j a_j(u) < 1", worst_sum.0, 1.0, worst_sum.1));
        }
        CheckReport { checks }
    }

    /// Moment conditions on the innovation law.
    pub fn validate_moment_conditions(&self, level: MomentLevel) -> Result<CheckReport> {
        let law = self.innovation;
        let check = match level {
            MomentLevel::Clt => {
                let r = 4.0 * (1.0 + CLT_DELTA);
                let m = abs_moment(law, r)?;
                Check {
                    name: "clt-moment".into(),
                    inequality: format!("E|Z|^{r} < inf"),
                    lhs: m,
                    rhs: f64::INFINITY,
                    location: None,
                    passed: m.is_finite(),
                }
            }
            MomentLevel::Bias => {
                let m12 = abs_moment(law, 12.0)?;
                let lhs = m12.powf(1.0 / 6.0) * self.regularity.q * self.ell_sum();
                Check::le(
                    "bias-moment",
                    "(E Z^12)^{1/6} Q sum_j 1/l(j) <= 1 - nu".into(),
                    lhs,
                    1.0 - self.regularity.nu,
                    None,
                )
            }
        };
        Ok(CheckReport {
            checks: vec![check],
        })
    }
}

/// `E|Z|^r` in closed form; infinite when the moment does not exist.
pub fn abs_moment(law: InnovationLaw, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::UnsupportedLaw(format!("moment order {r} of {}", law.name())));
    }
    let sqrt_pi_ln = 0.5 * std::f64::consts::PI.ln();
    Ok(match law {
        InnovationLaw::TwoPoint => 1.0,
        InnovationLaw::Gaussian => {
            (0.5 * r * 2f64.ln() + ln_gamma((r + 1.0) / 2.0) - sqrt_pi_ln).exp()
        }
        InnovationLaw::StudentT { df } => {
            if r >= df {
                f64::INFINITY
            } else {
                let ln_t = 0.5 * r * df.ln() + ln_gamma((r + 1.0) / 2.0)
                    + ln_gamma((df - r) / 2.0)
                    - sqrt_pi_ln
                    - ln_gamma(df / 2.0);
                (ln_t + 0.5 * r * ((df - 2.0) / df).ln()).exp()
            }
        }
    })
}

/// `var(Z^2) = E Z^4 - 1`.
pub fn var_z2(law: InnovationLaw) -> f64 {
    match law {
        InnovationLaw::Gaussian => 2.0,
        InnovationLaw::TwoPoint => 0.0,
        InnovationLaw::StudentT { df } => 3.0 * (df - 2.0) / (df - 4.0) - 1.0,
    }
}

pub(crate) fn unit_grid(n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n).map(|i| i as f64 / m).collect()
}

fn grid_argmin(c: &ParameterCurve, grid: &[f64]) -> (f64, f64) {
    grid.iter()
        .map(|&u| (u, c.value(u)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

fn grid_argmax(c: &ParameterCurve, grid: &[f64]) -> (f64, f64) {
    grid.iter()
        .map(|&u| (u, c.value(u)))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

fn curve_range(c: &ParameterCurve, n: usize) -> (f64, f64) {
    let grid = unit_grid(n);
    let lo = grid_argmin(c, &grid).1;
    let hi = grid_argmax(c, &grid).1;
    match c.exact_range() {
        Some((a, b)) => (a.min(lo), b.max(hi)),
        None => (lo, hi),
    }
}
