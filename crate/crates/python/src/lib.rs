//! Python bindings: model specs, simulation, local fits, asymptotics and
//! Monte Carlo experiments.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tvarch::config::{config_digest as digest, parse_config};
use tvarch::likelihood::loglik_point as point;
use tvarch::model::Extension;
use tvarch::{
    asymptotics_report, fit_local as fit_one, fit_path as fit_many, run_experiment as run, simulate_stationary as
    stationary, simulate_tvarch, standard_errors, BoundaryPolicy, Error, FitOptions, FitResult, KernelFamily,
    KernelSpec, LocalData, McSettings, OmegaSpace, StartMode, TvArchSpec,
};

create_exception!(tvarch_py, TvArchError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(m) => PyIOError::new_err(m),
        Error::Config(m) => PyValueError::new_err(m),
        other => TvArchError::new_err(other.to_string()),
    }
}

fn kernel_family(name: &str) -> PyResult<KernelFamily> {
    name.parse().map_err(err)
}

fn policy(strict: bool) -> BoundaryPolicy {
    if strict {
        BoundaryPolicy::Strict
    } else {
        BoundaryPolicy::Renormalize
    }
}

/// A tvARCH(p) model: coefficient curves, innovation law and regularity constants.
#[pyclass(name = "Spec", frozen, module = "tvarch_py")]
struct PySpec {
    inner: TvArchSpec,
}

#[pymethods]
impl PySpec {
    /// Builds the model from the `[model]` table of a TOML config.
    /// With `check=False` only structural checks run.
    #[staticmethod]
    #[pyo3(signature = (text, check = true))]
    fn from_toml(text: &str, check: bool) -> PyResult<Self> {
        let cfg = parse_config(text).map_err(err)?;
        let inner = if check { cfg.model.build() } else { cfg.model.build_unchecked() }.map_err(err)?;
        Ok(PySpec { inner })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn sup_a0(&self) -> f64 {
        self.inner.sup_a0()
    }

    /// `a_0(u) .. a_p(u)` or their derivatives of the given order.
    #[pyo3(signature = (u, order = 0))]
    fn coefficients(&self, u: f64, order: u8) -> PyResult<Vec<f64>> {
        self.inner.eval_coefficients(u, order, Extension::Clamped).map_err(err)
    }

    fn assumption_report(&self) -> String {
        self.inner.assumption_report().render()
    }

    fn assumptions_hold(&self) -> bool {
        self.inner.assumption_report().passed()
    }

    fn __repr__(&self) -> String {
        format!("Spec(order={}, sup_a0={})", self.inner.order(), self.inner.sup_a0())
    }
}

/// The compact parameter set with bounds `rho1`, `rho2`.
#[pyclass(name = "Omega", frozen, module = "tvarch_py")]
struct PyOmega {
    inner: OmegaSpace,
}

#[pymethods]
impl PyOmega {
    #[new]
    fn new(p: usize, rho1: f64, rho2: f64) -> PyResult<Self> {
        Ok(PyOmega {
            inner: OmegaSpace::new(p, rho1, rho2).map_err(err)?,
        })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    fn project(&self, alpha: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project(&alpha).map_err(err)
    }

    fn contains(&self, alpha: Vec<f64>) -> bool {
        self.inner.contains(&alpha)
    }

    fn __repr__(&self) -> String {
        format!("Omega(p={}, rho1={}, rho2={})", self.inner.order(), self.inner.rho1(), self.inner.rho2())
    }
}

/// One local fit. `stderr` is `None` when the fit sits on the boundary or
/// did not converge.
#[pyclass(name = "FitResult", frozen, get_all, module = "tvarch_py")]
struct PyFit {
    t0: usize,
    u0: f64,
    b: f64,
    estimate: Vec<f64>,
    value: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
    active_constraints: Vec<String>,
    stderr: Option<Vec<f64>>,
}

#[pymethods]
impl PyFit {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(t0={}, estimate={:?}, stderr={:?}, converged={})",
            self.t0, self.estimate, self.stderr, self.converged
        )
    }
}

impl From<FitResult> for PyFit {
    fn from(f: FitResult) -> Self {
        PyFit {
            t0: f.t0,
            u0: f.u0,
            b: f.b,
            estimate: f.estimate,
            value: f.value,
            gradient_norm: f.gradient_norm,
            iterations: f.iterations,
            converged: f.converged,
            active_constraints: f.active_constraints,
            stderr: f.stderr,
        }
    }
}

/// Simulates `X_{t,N}^2`; returns a dict with `x2`, `sigma2` and `z`.
#[pyfunction]
#[pyo3(signature = (spec, n, seed = 0, mode = "stationary-start"))]
fn simulate<'py>(py: Python<'py>, spec: PyRef<'py, PySpec>, n: usize, seed: u64, mode: &str) -> PyResult<Bound<'py, PyDict>> {
    let mode: StartMode = mode.parse().map_err(err)?;
    let path = simulate_tvarch(&spec.inner, n, seed, mode).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("x2", path.x2)?;
    d.set_item("sigma2", path.sigma2)?;
    d.set_item("z", path.z)?;
    Ok(d)
}

/// Squared values of the stationary process frozen at `u0`.
#[pyfunction]
#[pyo3(signature = (spec, u0, n, seed = 0))]
fn simulate_stationary(spec: PyRef<'_, PySpec>, u0: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    Ok(stationary(&spec.inner, u0, n, seed).map_err(err)?.x2)
}

/// Value, gradient and Hessian of the one-observation quasi-likelihood.
#[pyfunction]
fn loglik_point(alpha: Vec<f64>, x2: f64, lags: Vec<f64>) -> PyResult<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    if lags.len() + 1 != alpha.len() {
        return Err(PyValueError::new_err("need one lag per alpha_j, j >= 1"));
    }
    let e = point(&alpha, x2, &lags);
    let d = alpha.len();
    let hess = (0..d).map(|i| (0..d).map(|j| e.hessian[(i, j)]).collect()).collect();
    Ok((e.value, e.gradient.iter().copied().collect(), hess))
}

/// Kernel-weighted local fit at anchor `t0` (1-based).
#[pyfunction]
#[pyo3(signature = (x2, order, t0, b, rho1, rho2, kernel = "rectangular", strict = true, stderr = true))]
#[allow(clippy::too_many_arguments)]
fn fit_local(
    py: Python<'_>,
    x2: Vec<f64>,
    order: usize,
    t0: usize,
    b: f64,
    rho1: f64,
    rho2: f64,
    kernel: &str,
    strict: bool,
    stderr: bool,
) -> PyResult<PyFit> {
    let k = KernelSpec::new(kernel_family(kernel)?, b).map_err(err)?;
    let omega = OmegaSpace::new(order, rho1, rho2).map_err(err)?;
    py.detach(|| {
        let data = LocalData::new(&x2, order, &k, t0, policy(strict))?;
        let fit = fit_one(&data, &omega, &FitOptions::default())?;
        if stderr && fit.converged && fit.active_constraints.is_empty() {
            standard_errors(&fit, &data, &k)
        } else {
            Ok(fit)
        }
    })
    .map(PyFit::from)
    .map_err(err)
}

/// Fits at every anchor of `grid`; anchors that fail come back as `None`.
#[pyfunction]
#[pyo3(signature = (x2, order, grid, b, rho1, rho2, kernel = "rectangular", strict = true, warm_start = false, stderr = true))]
#[allow(clippy::too_many_arguments)]
fn fit_path(
    py: Python<'_>,
    x2: Vec<f64>,
    order: usize,
    grid: Vec<usize>,
    b: f64,
    rho1: f64,
    rho2: f64,
    kernel: &str,
    strict: bool,
    warm_start: bool,
    stderr: bool,
) -> PyResult<Vec<Option<PyFit>>> {
    let k = KernelSpec::new(kernel_family(kernel)?, b).map_err(err)?;
    let omega = OmegaSpace::new(order, rho1, rho2).map_err(err)?;
    let fits = py.detach(|| {
        fit_many(&x2, &grid, &k, &omega, &FitOptions::default(), policy(strict), warm_start, stderr)
    });
    Ok(fits.into_iter().map(|r| r.ok().map(PyFit::from)).collect())
}

/// Kernel weights `(k, w_k)` for anchor `t0`.
#[pyfunction]
#[pyo3(signature = (kernel, b, t0, n, order = 0, strict = true))]
fn kernel_weights(kernel: &str, b: f64, t0: usize, n: usize, order: usize, strict: bool) -> PyResult<Vec<(usize, f64)>> {
    let k = KernelSpec::new(kernel_family(kernel)?, b).map_err(err)?;
    Ok(k.weights(t0, n, order, policy(strict)).map_err(err)?.entries)
}

/// Asymptotic covariance `Sigma(u0)`, bias vector `mu` and the plug-in
/// bandwidth for sample size `n`.
#[pyfunction]
#[pyo3(signature = (spec, u0, n, kernel = "rectangular", mc_n = 10_000, mc_reps = 100, seed = 0, du = 0.02))]
#[allow(clippy::too_many_arguments)]
fn asymptotics<'py>(
    py: Python<'py>,
    spec: PyRef<'py, PySpec>,
    u0: f64,
    n: usize,
    kernel: &str,
    mc_n: usize,
    mc_reps: usize,
    seed: u64,
    du: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let k = KernelSpec::new(kernel_family(kernel)?, 0.5).map_err(err)?;
    let mc = McSettings {
        n: mc_n,
        reps: mc_reps,
        seed,
    };
    let s = spec.inner.clone();
    let r = py.detach(|| asymptotics_report(&s, u0, n, &k, &mc, du)).map_err(err)?;
    let d = PyDict::new(py);
    let m = &r.sigma.matrix;
    let sigma: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    d.set_item("sigma", sigma)?;
    d.set_item("sigma_method", r.sigma.method.name())?;
    d.set_item("mu", r.bias.mu.clone())?;
    d.set_item("mu_stderr", r.bias.stderr.clone())?;
    d.set_item("stencil_error", r.bias.stencil_error.clone())?;
    d.set_item("b_opt", r.bandwidth.as_ref().map(|b| b.b))?;
    d.set_item("zero_bias", r.bandwidth.as_ref().map(|b| b.zero_bias))?;
    d.set_item("report", r.render())?;
    Ok(d)
}

/// Runs the `[experiment]` of a TOML config; returns `(header, rows)` of the
/// summary table as strings.
#[pyfunction]
#[pyo3(signature = (config, threads = 0, seed = None))]
fn run_experiment(py: Python<'_>, config: &str, threads: usize, seed: Option<u64>) -> PyResult<(Vec<String>, Vec<Vec<String>>)> {
    let cfg = parse_config(config).map_err(err)?;
    let spec = cfg.model.build().map_err(err)?;
    let section = cfg
        .experiment
        .ok_or_else(|| PyValueError::new_err("config has no [experiment] table"))?;
    let mut exp = section.build(spec).map_err(err)?;
    if let Some(s) = seed {
        exp.base_seed = s;
    }
    let summary = py.detach(|| run(&exp, threads)).map_err(err)?;
    Ok(summary.table())
}

/// SHA-256 of a config, stable under key reordering.
#[pyfunction]
fn config_digest(text: &str) -> PyResult<String> {
    digest(text).map_err(err)
}

#[pymodule]
fn tvarch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TvArchError", m.py().get_type::<TvArchError>())?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyOmega>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(loglik_point, m)?)?;
    m.add_function(wrap_pyfunction!(fit_local, m)?)?;
    m.add_function(wrap_pyfunction!(fit_path, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_weights, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotics, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(config_digest, m)?)?;
    Ok(())
}
