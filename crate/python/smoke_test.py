"""Smoke test for the tvarch_py extension module.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/tvarch_py-*.whl
"""

import math

import tvarch_py as tv

CONFIG = """
[model]
innovation = { law = "gaussian" }
regularity = { rho = 0.5, q = 0.1, nu = 0.5, m = 7.0, ell = { kind = "unit" } }

[[model.curves]]
family = "sinusoid"
coefficients = [2.0, 1.0, 0.0]

[experiment]
kind = "bias-law"
u0 = [0.5]
n = [2000]
b = { rule = "fixed", values = [0.2] }
reps = 20
base_seed = 1
omega = { rho1 = 0.01, rho2 = 10.0 }
"""


def main():
    spec = tv.Spec.from_toml(CONFIG)
    assert spec.order == 0 and spec.assumptions_hold()
    assert abs(spec.coefficients(0.5)[0] - 1.0) < 1e-12

    path = tv.simulate(spec, 4000, seed=3)
    again = tv.simulate(spec, 4000, seed=3)
    assert path["x2"] == again["x2"]
    assert all(s >= 1.0 for s in path["sigma2"])

    # tvARCH(0): the local fit is the normalized kernel-weighted mean of x2
    fit = tv.fit_local(path["x2"], 0, 2000, 0.2, 0.01, 10.0, kernel="triangular")
    w = tv.kernel_weights("triangular", 0.2, 2000, 4000)
    mean = sum(wk * path["x2"][k - 1] for k, wk in w) / sum(wk for _, wk in w)
    assert fit.converged and abs(fit.estimate[0] - mean) < 1e-8 * mean, (fit, mean)
    assert fit.stderr is not None and fit.stderr[0] > 0

    fits = tv.fit_path(path["x2"], 0, [10, 1000, 2000, 3000], 0.2, 0.01, 10.0)
    assert fits[0] is None and all(f is not None for f in fits[1:])

    om = tv.Omega(1, 0.1, 5.0)
    assert om.project([-0.1, 0.5]) == [0.1, 0.5]
    assert om.kappa == 60.0

    value, grad, hess = tv.loglik_point([1.0, 0.2], 2.0, [1.0])
    w = 1.2
    assert abs(value - 0.5 * (math.log(w) + 2.0 / w)) < 1e-14
    assert len(grad) == 2 and len(hess) == 2

    a = tv.asymptotics(spec, 0.5, 4000)
    assert a["sigma_method"] == "closed-form"
    assert abs(a["sigma"][0][0] - 0.5) < 1e-12
    assert abs(a["b_opt"] - 0.1358) < 5e-4, a["b_opt"]

    header, rows = tv.run_experiment(CONFIG, threads=2)
    _, rows4 = tv.run_experiment(CONFIG, threads=4)
    assert rows == rows4 and "bias_0" in header

    try:
        tv.fit_local(path["x2"], 0, 10, 0.2, 0.01, 10.0)
    except tv.TvArchError as e:
        assert "boundary" in str(e).lower() or "support" in str(e).lower(), e
    else:
        raise AssertionError("boundary anchor should fail in strict mode")

    assert len(tv.config_digest(CONFIG)) == 64
    print("smoke test ok")


if __name__ == "__main__":
    main()
