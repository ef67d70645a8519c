//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! value and the pinned tolerance.

use std::time::Instant;

use tvarch::asymptotics::{bias_mu, optimal_bandwidth, sigma_of_u, McSettings};
use tvarch::io::write_table;
use tvarch::likelihood::{cond_variance, loglik_point};
use tvarch::montecarlo::{log_log_slope, run_experiment, BandwidthRule, ExperimentConfig, ExperimentKind};
use tvarch::rng::splitmix64;
use tvarch::simulate::{derivative_path, simulate_stationary, simulate_tvarch, taylor_residual, volterra_truncated};
use tvarch::{
    build_spec, InnovationLaw, KernelFamily, KernelSpec, OmegaSpace, ParameterCurve, Regularity, StartMode,
    TvArchSpec, WeightSequence,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn unit(state: &mut u64) -> f64 {
    *state = splitmix64(*state);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

fn reg(rho: f64, q: f64, nu: f64, m: f64) -> Regularity {
    Regularity {
        rho,
        q,
        nu,
        m,
        ell: WeightSequence::Unit,
    }
}

/// `a_0(u) = 2 + cos(2 pi u)`.
fn cosine_arch0() -> TvArchSpec {
    build_spec(
        vec![ParameterCurve::sinusoid(2.0, 1.0, 0.0, 1.0).unwrap()],
        InnovationLaw::Gaussian,
        reg(0.5, 0.1, 0.5, 7.0),
    )
    .unwrap()
}

/// `a_0(u) = 0.6 + 0.2 sin(2 pi u)`, `a_1(u) = 0.15 + 0.05 u`.
fn sinusoid_arch1() -> TvArchSpec {
    build_spec(
        vec![
            ParameterCurve::sinusoid(0.6, 0.0, 0.2, 1.0).unwrap(),
            ParameterCurve::polynomial(&[0.15, 0.05]).unwrap(),
        ],
        InnovationLaw::Gaussian,
        reg(0.35, 0.2, 0.75, 1.5),
    )
    .unwrap()
}

fn ac1() -> Outcome {
    let mut s = 1u64;
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let p = i % 4;
        let om = OmegaSpace::new(p, 0.05, 3.0).unwrap();
        let raw: Vec<f64> = (0..=p).map(|j| if j == 0 { 3.0 * unit(&mut s) } else { unit(&mut s) }).collect();
        let alpha = om.project(&raw).unwrap();
        let lags: Vec<f64> = (0..p).map(|_| 3.0 * unit(&mut s)).collect();
        let x2 = 4.0 * unit(&mut s);
        let e = loglik_point(&alpha, x2, &lags);
        for k in 0..=p {
            let h = 1e-6 * alpha[k];
            let mut ap = alpha.clone();
            let mut am = alpha.clone();
            ap[k] += h;
            am[k] -= h;
            let (fp, fm) = (loglik_point(&ap, x2, &lags), loglik_point(&am, x2, &lags));
            let g = e.gradient[k];
            worst_g = worst_g.max(((fp.value - fm.value) / (2.0 * h) - g).abs() / g.abs().max(1.0));
            for j in 0..=p {
                let hv = e.hessian[(k, j)];
                let fd = (fp.gradient[j] - fm.gradient[j]) / (2.0 * h);
                worst_h = worst_h.max((fd - hv).abs() / hv.abs().max(1.0));
            }
        }
    }
    Outcome {
        pass: worst_g <= 1e-6 && worst_h <= 1e-5,
        detail: format!("max rel err grad={worst_g:.2e} (<=1e-6) hess={worst_h:.2e} (<=1e-5)"),
    }
}

fn ac2() -> Outcome {
    let spec = build_spec(
        vec![
            ParameterCurve::sinusoid(1.0, 0.0, 0.5, 1.0).unwrap(),
            ParameterCurve::polynomial(&[0.25, 0.1]).unwrap(),
            ParameterCurve::sinusoid(0.1, 0.05, 0.0, 1.0).unwrap(),
        ],
        InnovationLaw::Gaussian,
        reg(0.5, 0.35, 0.3, 4.0),
    )
    .unwrap();
    let (n, nu, sup_a0) = (2000, 0.3, spec.sup_a0());
    let exact = simulate_tvarch(&spec, n, 2024, StartMode::PaperExact).unwrap();
    let mad: Vec<f64> = [5, 10, 20]
        .iter()
        .map(|&r| {
            let v = volterra_truncated(&spec, n, r, 2024).unwrap();
            exact.x2.iter().zip(&v.x2).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64
        })
        .collect();
    let bound = 2.0 * sup_a0 * (1.0f64 - nu).powi(21) / nu;
    // geometric decay: the 10 -> 20 log-drop is about twice the 5 -> 10 one
    let shape = (mad[1] / mad[2]).ln() / (mad[0] / mad[1]).ln();
    let pass = mad[2] <= bound && mad[0] > mad[1] && mad[1] > mad[2] && (1.0..=3.0).contains(&shape);
    Outcome {
        pass,
        detail: format!(
            "MAD r=5,10,20: {:.3e} {:.3e} {:.3e}; r=20 bound {bound:.3e}; log-drop ratio {shape:.2} in [1,3]",
            mad[0], mad[1], mad[2]
        ),
    }
}

fn fixed_experiment(spec: TvArchSpec, kind: ExperimentKind, u0: f64, n: usize, b: Vec<f64>, reps: usize, seed: u64) -> ExperimentConfig {
    let p = spec.order();
    ExperimentConfig {
        spec,
        kind,
        u0: vec![u0],
        n: vec![n],
        b: BandwidthRule::Fixed { values: b },
        kernel: KernelFamily::Rectangular,
        reps,
        base_seed: seed,
        omega: Some(OmegaSpace::new(p, 0.01, 10.0).unwrap()),
        distances: vec![],
        start_mode: StartMode::StationaryStart,
    }
}

fn ac3() -> Outcome {
    let spec = cosine_arch0();
    let mu = bias_mu(&spec, 0.5, &KernelSpec::new(KernelFamily::Rectangular, 0.2).unwrap(), &McSettings::default(), 0.02, false)
        .unwrap()
        .mu[0];
    let predicted = -0.04 * mu;
    let cfg = fixed_experiment(spec, ExperimentKind::BiasLaw, 0.5, 4000, vec![0.2, 0.1], 2000, 3);
    let s = run_experiment(&cfg, 0).unwrap();
    let b2 = s.cells[0].stat("bias_0").unwrap();
    let b1 = s.cells[1].stat("bias_0").unwrap();
    let rel = (b2.value - predicted).abs() / predicted;
    let ratio = b2.value / b1.value;
    Outcome {
        pass: rel <= 0.2 && (3.2..=4.8).contains(&ratio),
        detail: format!(
            "bias(b=.2)={:.4} (se {:.4}) vs -b^2 mu={predicted:.4}, rel err {rel:.3} (<=0.2); bias(b=.1)={:.4}, ratio {ratio:.2} in [3.2,4.8]",
            b2.value, b2.stderr, b1.value
        ),
    }
}

fn ac4() -> Outcome {
    let spec = sinusoid_arch1();
    let n = 16_000;
    let b = 0.8 * (n as f64).powf(-0.4);
    let cfg = fixed_experiment(spec, ExperimentKind::CltCoverage, 0.5, n, vec![b], 1000, 4);
    match run_experiment(&cfg, 0) {
        Ok(s) => {
            let c = &s.cells[0];
            let c0 = c.stat("coverage95_0").unwrap().value;
            let c1 = c.stat("coverage95_1").unwrap().value;
            let bf = c.stat("boundary_fraction").unwrap().value;
            let ok = |v: f64| (0.92..=0.97).contains(&v);
            Outcome {
                pass: ok(c0) && ok(c1),
                detail: format!(
                    "bN={:.0}, coverage95 a0={c0:.3} a1={c1:.3} in [0.92,0.97] (boundary fits {bf:.3} counted as misses; \
                     interior-only a0={:.3} a1={:.3}); failed fits {}/{}",
                    b * n as f64,
                    c0 / (1.0 - bf),
                    c1 / (1.0 - bf),
                    c.failed,
                    s.reps
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("experiment aborted: {e}"),
        },
    }
}

fn ac5() -> Outcome {
    let spec = build_spec(vec![ParameterCurve::constant(1.0)], InnovationLaw::Gaussian, reg(0.5, 0.1, 0.5, 1.0)).unwrap();
    let cfg = fixed_experiment(spec, ExperimentKind::CltCoverage, 0.5, 16_000, vec![0.2], 2000, 5);
    let s = run_experiment(&cfg, 0).unwrap();
    let v = s.cells[0].stat("cov_00").unwrap().value;
    let rel = (v - 2.0).abs() / 2.0;
    Outcome {
        pass: rel <= 0.12,
        detail: format!("var of sqrt(bN)(a0_hat - a0) = {v:.4} vs 2, rel err {rel:.3} (<=0.12)"),
    }
}

/// `a_0(u) = 0.5 + 0.5 u`, `a_1(u) = 0.2 + 0.1 u`.
fn linear_arch1() -> TvArchSpec {
    build_spec(
        vec![
            ParameterCurve::polynomial(&[0.5, 0.5]).unwrap(),
            ParameterCurve::polynomial(&[0.2, 0.1]).unwrap(),
        ],
        InnovationLaw::Gaussian,
        reg(0.4, 0.35, 0.6, 1.0),
    )
    .unwrap()
}

fn ac6() -> Outcome {
    let mut cfg = fixed_experiment(linear_arch1(), ExperimentKind::ApproximationRate, 0.5, 4000, vec![], 500, 6);
    cfg.distances = vec![0.05, 0.1, 0.2];
    cfg.omega = None;
    let s = run_experiment(&cfg, 0).unwrap();
    let y: Vec<f64> = s.cells.iter().map(|c| c.stat("mean_abs_gap").unwrap().value).collect();
    let slope = log_log_slope(&cfg.distances, &y);
    Outcome {
        pass: (0.8..=1.2).contains(&slope),
        detail: format!("mean gaps {:.4} {:.4} {:.4}; log-log slope {slope:.3} in [0.8,1.2]", y[0], y[1], y[2]),
    }
}

fn ac7() -> Outcome {
    let spec = sinusoid_arch1();
    let (u0, n, seed) = (0.3, 4000, 7);
    let d = derivative_path(&spec, u0, n, seed, 1).unwrap();
    let base = simulate_stationary(&spec, u0, n, seed).unwrap();
    let err = |h: f64| {
        let shifted = simulate_stationary(&spec, u0 + h, n, seed).unwrap();
        base.x2
            .iter()
            .zip(&shifted.x2)
            .zip(&d.values)
            .map(|((a, b), dv)| ((b - a) / h - dv).abs())
            .sum::<f64>()
            / n as f64
    };
    let ratio = err(1e-3) / err(5e-4);
    let constant = build_spec(
        vec![ParameterCurve::constant(0.6), ParameterCurve::constant(0.2)],
        InnovationLaw::Gaussian,
        reg(0.4, 0.2, 0.75, 1.0),
    )
    .unwrap();
    let zero = derivative_path(&constant, u0, n, seed, 1).unwrap().values.iter().all(|&v| v == 0.0)
        && derivative_path(&constant, u0, n, seed, 2).unwrap().values.iter().all(|&v| v == 0.0);
    Outcome {
        pass: (1.6..=2.4).contains(&ratio) && zero,
        detail: format!("FD error ratio h=1e-3/5e-4: {ratio:.3} in [1.6,2.4]; constant curves exactly zero: {zero}"),
    }
}

fn ac8() -> Outcome {
    let spec = sinusoid_arch1();
    let dist = [0.05, 0.1, 0.2];
    let res: Vec<f64> = dist
        .iter()
        .map(|&d| taylor_residual(&spec, 0.5, 0.5 + d, 8000, 8, 500).unwrap().mean_abs_residual)
        .collect();
    let slope = log_log_slope(&dist, &res);
    Outcome {
        pass: slope >= 2.5,
        detail: format!("mean |residual| {:.3e} {:.3e} {:.3e}; log-log slope {slope:.3} (>=2.5)", res[0], res[1], res[2]),
    }
}

fn ac9() -> Outcome {
    let spec = cosine_arch0();
    let n = 4000;
    let k = KernelSpec::new(KernelFamily::Rectangular, 0.2).unwrap();
    let sigma = sigma_of_u(&spec, 0.5, &McSettings::default(), false).unwrap().matrix;
    let mu = bias_mu(&spec, 0.5, &k, &McSettings::default(), 0.02, false).unwrap().mu;
    let b_opt = optimal_bandwidth(&spec, n, &k, &sigma, &mu).unwrap().b;
    let grid = vec![0.05, 0.07, 0.10, 0.136, 0.19, 0.27];
    let cfg = fixed_experiment(spec, ExperimentKind::BandwidthSweep, 0.5, n, grid.clone(), 2000, 9);
    let s = run_experiment(&cfg, 0).unwrap();
    let mse: Vec<f64> = s.cells.iter().map(|c| c.stat("mse_0").unwrap().value).collect();
    let (imin, _) = mse.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
    let best = grid[imin];
    let factor = (best / b_opt).max(b_opt / best);
    Outcome {
        pass: factor <= 1.5,
        detail: format!(
            "MSE {}; argmin b={best} vs b_opt={b_opt:.4}, factor {factor:.3} (<=1.5)",
            mse.iter().map(|m| format!("{m:.5}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn ac10() -> Outcome {
    let spec = sinusoid_arch1();
    let om = OmegaSpace::new(1, 0.05, 1.0).unwrap();
    assert!(spec.sup_a0() <= om.rho2());
    let kappa = om.kappa();
    let mut s = 10u64;
    let mut checked = 0usize;
    let mut violations = 0usize;
    for path_id in 0..100u64 {
        let path = simulate_tvarch(&spec, 1000, 1000 + path_id, StartMode::PaperExact).unwrap();
        for _ in 0..100 {
            let alpha = om.project(&[0.05 + 0.95 * unit(&mut s), 0.05 + 0.95 * unit(&mut s)]).unwrap();
            for t in 1..path.n {
                let w = cond_variance(&alpha, &[path.x2[t - 1]]);
                checked += 1;
                if path.x2[t] / w > kappa * path.z[t] * path.z[t] {
                    violations += 1;
                }
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations of X^2/w <= kappa z^2 over {checked} checks (kappa={kappa})"),
    }
}

fn ac11() -> Outcome {
    let spec = build_spec(
        vec![ParameterCurve::constant(1.0), ParameterCurve::constant(0.2)],
        InnovationLaw::Gaussian,
        reg(0.5, 0.2, 0.75, 1.0),
    )
    .unwrap();
    let mut cfg = fixed_experiment(spec, ExperimentKind::ErgodicSum, 0.5, 20_000, vec![0.025, 0.05, 0.1, 0.2], 500, 11);
    cfg.omega = None;
    let s = run_experiment(&cfg, 0).unwrap();
    let rmse: Vec<f64> = s.cells.iter().map(|c| c.stat("rmse").unwrap().value).collect();
    let ratios: Vec<f64> = rmse.windows(2).map(|w| w[0] / w[1]).collect();
    Outcome {
        pass: ratios.iter().all(|r| (1.2..=1.7).contains(r)),
        detail: format!(
            "RMSE at bN=500..4000: {}; doubling ratios {} in [1.2,1.7]",
            rmse.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "),
            ratios.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn csv_bytes(cfg: &ExperimentConfig, threads: usize) -> Vec<u8> {
    let s = run_experiment(cfg, threads).unwrap();
    let (h, rows) = s.table();
    let mut buf = Vec::new();
    write_table(&mut buf, &h, &rows).unwrap();
    buf
}

fn ac12() -> Outcome {
    let mut cfgs = vec![
        fixed_experiment(cosine_arch0(), ExperimentKind::BiasLaw, 0.5, 4000, vec![0.2], 200, 12),
        fixed_experiment(sinusoid_arch1(), ExperimentKind::CltCoverage, 0.5, 4000, vec![0.2], 200, 12),
        fixed_experiment(cosine_arch0(), ExperimentKind::BandwidthSweep, 0.5, 4000, vec![0.1, 0.2], 200, 12),
    ];
    let mut approx = fixed_experiment(linear_arch1(), ExperimentKind::ApproximationRate, 0.5, 4000, vec![], 200, 12);
    approx.distances = vec![0.05, 0.1];
    approx.omega = None;
    let mut ergodic = fixed_experiment(linear_arch1(), ExperimentKind::ErgodicSum, 0.5, 4000, vec![0.1, 0.2], 200, 12);
    ergodic.omega = None;
    cfgs.push(approx);
    cfgs.push(ergodic);
    let mut identical = 0;
    for cfg in &cfgs {
        let one = csv_bytes(cfg, 1);
        if csv_bytes(cfg, 4) == one && csv_bytes(cfg, 16) == one && csv_bytes(cfg, 1) == one {
            identical += 1;
        }
    }
    Outcome {
        pass: identical == cfgs.len(),
        detail: format!("{identical}/{} experiment kinds byte-identical at 1, 4, 16 threads", cfgs.len()),
    }
}

fn main() {
    // keep the harness quiet under `cargo test -- --list` and similar probes
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let suite: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("AC-1", "likelihood derivatives vs finite differences", ac1),
        ("AC-2", "recursion vs truncated Volterra series", ac2),
        ("AC-3", "bias law of the tvARCH(0) fit", ac3),
        ("AC-4", "CLT coverage of uncorrected 95% intervals", ac4),
        ("AC-5", "asymptotic variance constant", ac5),
        ("AC-6", "stationary approximation rate", ac6),
        ("AC-7", "derivative process vs forward differences", ac7),
        ("AC-8", "second-order Taylor residual", ac8),
        ("AC-9", "MSE-optimal bandwidth", ac9),
        ("AC-10", "kappa z^2 bound", ac10),
        ("AC-11", "kernel-weighted ergodic sums", ac11),
        ("AC-12", "reproducibility across thread counts", ac12),
    ];
    let mut failed = 0;
    for (id, name, f) in suite {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        if !o.pass {
            failed += 1;
        }
        println!("{id} {} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of 12 passed", 12 - failed);
    // red criteria are reported, not hidden; set ACCEPTANCE_STRICT=1 to turn them into a non-zero exit
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
