//! `tvarch` command-line tool.
//!
//! Exit codes: 0 ok, 1 domain failure, 2 config or argument error, 3 I/O.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use tvarch::config::{config_digest, load_config, RunConfig};
use tvarch::io::{read_x2_csv, unix_now, write_fits_csv, write_path_csv, write_table, RunManifest};
use tvarch::model::MomentLevel;
use tvarch::{
    asymptotics_report, fit_path, run_experiment, simulate_tvarch, BoundaryPolicy, Error, FitOptions, KernelFamily,
    KernelSpec, LocalData, McSettings, OmegaSpace, StartMode,
};

#[derive(Parser)]
#[command(name = "tvarch", version, about = "Simulate, fit and study time-varying ARCH processes")]
struct Cli {
    /// Overrides every seed in the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reject anchors whose kernel support leaves the sample
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    strict_boundary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions
    Validate {
        config: PathBuf,
        /// Also write the report and a manifest here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a sample path
    Simulate {
        config: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        mode: Option<StartMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Local quasi-likelihood fits at one anchor or a grid of anchors
    Fit {
        /// Model and fit settings; data is simulated from it unless --data is given
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV with an x2 or x column
        #[arg(long)]
        data: Option<PathBuf>,
        /// ARCH order, needed when there is no config
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, conflicts_with = "grid")]
        t0: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        kernel: Option<KernelFamily>,
        /// `rho1,rho2`
        #[arg(long, value_delimiter = ',')]
        omega: Option<Vec<f64>>,
        /// Start each anchor from the previous estimate
        #[arg(long)]
        warm_start: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment
    Experiment {
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Asymptotic covariance, bias and bandwidth at one point
    Asymptotics {
        config: PathBuf,
        #[arg(long)]
        u0: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Domain(String),
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            Error::Io(m) => Failure::Io(m),
            other => Failure::Domain(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Run {
    started: f64,
    argv: Vec<String>,
    threads: usize,
    seed: Option<u64>,
    strict: bool,
}

struct Loaded {
    config: RunConfig,
    text: String,
    digest: String,
}

fn load(path: &Path) -> std::result::Result<Loaded, Failure> {
    let (config, text) = load_config(path)?;
    let digest = config_digest(&text)?;
    Ok(Loaded { config, text, digest })
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

impl Run {
    fn manifest(&self, command: &str, loaded: Option<&Loaded>, seeds: Vec<u64>, outputs: &[&Path], at: &Path) -> Outcome {
        let finished = unix_now();
        let m = RunManifest {
            command: command.into(),
            argv: self.argv.clone(),
            config_digest: loaded.map(|l| l.digest.clone()),
            config: loaded.map(|l| l.text.clone()),
            seeds,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: self.started,
            finished_unix: finished,
            runtime_seconds: finished - self.started,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let mut w = create(at)?;
        m.write(&mut w)?;
        w.flush().map_err(|e| Failure::Io(e.to_string()))
    }

    fn policy(&self, from_config: Option<BoundaryPolicy>) -> BoundaryPolicy {
        if self.strict {
            from_config.unwrap_or(BoundaryPolicy::Strict)
        } else {
            BoundaryPolicy::Renormalize
        }
    }
}

fn validate(run: &Run, config: &Path, out: Option<&Path>) -> Outcome {
    let loaded = load(config)?;
    let spec = loaded.config.model.build_unchecked()?;
    let report = spec.assumption_report();
    let mut text = report.render();
    for (label, level) in [("clt", MomentLevel::Clt), ("bias", MomentLevel::Bias)] {
        let r = spec.validate_moment_conditions(level)?;
        text.push_str(&format!("# {label}-level moments (informational)\n{}", r.render()));
    }
    if let Some(exp) = &loaded.config.experiment {
        if report.passed() {
            exp.build(spec.clone())?;
        }
    }
    print!("{text}");
    if let Some(out) = out {
        let mut w = create(out)?;
        w.write_all(text.as_bytes()).map_err(|e| Failure::Io(e.to_string()))?;
        w.flush().map_err(|e| Failure::Io(e.to_string()))?;
        run.manifest("validate", Some(&loaded), vec![], &[out], &sibling_manifest(out))?;
    }
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(Failure::Domain(format!("assumption violated: {}", c.inequality))),
    }
}

fn simulate(run: &Run, config: &Path, n: Option<usize>, mode: Option<StartMode>, out: &Path) -> Outcome {
    let loaded = load(config)?;
    let spec = loaded.config.model.build()?;
    let section = loaded.config.simulate.as_ref();
    let n = n
        .or(section.map(|s| s.n))
        .ok_or_else(|| Failure::Config("sample size needed: --n or [simulate] n".into()))?;
    let seed = run.seed.or(section.map(|s| s.seed)).unwrap_or(0);
    let mode = mode.or(section.map(|s| s.mode)).unwrap_or(StartMode::StationaryStart);
    let path = simulate_tvarch(&spec, n, seed, mode)?;
    let mut w = create(out)?;
    write_path_csv(&mut w, &path)?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    run.manifest("simulate", Some(&loaded), vec![seed], &[out], &sibling_manifest(out))
}

struct FitArgs {
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    order: Option<usize>,
    t0: Option<usize>,
    grid: Option<Vec<usize>>,
    b: Option<f64>,
    kernel: Option<KernelFamily>,
    omega: Option<Vec<f64>>,
    warm_start: bool,
    out: PathBuf,
}

fn fit(run: &Run, a: FitArgs) -> Outcome {
    let loaded = a.config.as_deref().map(load).transpose()?;
    let section = loaded.as_ref().and_then(|l| l.config.fit.clone());
    let mut seeds = Vec::new();
    let (x2, p) = match (&a.data, &loaded) {
        (Some(data), l) => {
            let file = File::open(data).map_err(|e| Failure::Io(format!("{}: {e}", data.display())))?;
            let p = match (a.order, l) {
                (Some(p), _) => p,
                (None, Some(l)) => l.config.model.curves.len().saturating_sub(1),
                (None, None) => return Err(Failure::Config("--order is required without --config".into())),
            };
            (read_x2_csv(file)?, p)
        }
        (None, Some(l)) => {
            let spec = l.config.model.build()?;
            let sim = l
                .config
                .simulate
                .as_ref()
                .ok_or_else(|| Failure::Config("no --data and no [simulate] section".into()))?;
            let seed = run.seed.unwrap_or(sim.seed);
            seeds.push(seed);
            (simulate_tvarch(&spec, sim.n, seed, sim.mode)?.x2, spec.order())
        }
        (None, None) => return Err(Failure::Config("give --data or --config".into())),
    };
    let b = a
        .b
        .or(section.as_ref().and_then(|s| s.b))
        .ok_or_else(|| Failure::Config("bandwidth needed: --b or [fit] b".into()))?;
    let family = a
        .kernel
        .or(section.as_ref().map(|s| s.kernel))
        .unwrap_or(KernelFamily::Rectangular);
    let omega = match (&a.omega, section.as_ref().and_then(|s| s.omega)) {
        (Some(o), _) if o.len() == 2 => OmegaSpace::new(p, o[0], o[1])?,
        (Some(_), _) => return Err(Failure::Config("--omega takes exactly rho1,rho2".into())),
        (None, Some(o)) => o.build(p)?,
        (None, None) => return Err(Failure::Config("parameter space needed: --omega rho1,rho2 or [fit] omega".into())),
    };
    let grid = match (a.t0, a.grid) {
        (Some(t), _) => vec![t],
        (None, Some(g)) => g,
        (None, None) => match section.as_ref().and_then(|s| s.t0.map(|t| vec![t]).or(s.grid.clone())) {
            Some(g) => g,
            None => return Err(Failure::Config("anchors needed: --t0, --grid or [fit] t0/grid".into())),
        },
    };
    let policy = run.policy(section.as_ref().and_then(|s| s.boundary));
    let kernel = KernelSpec::new(family, b)?;
    let results = fit_path(&x2, &grid, &kernel, &omega, &FitOptions::default(), policy, a.warm_start, true);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (t0, r) in grid.iter().zip(results) {
        match r {
            Ok(f) => {
                let mean = LocalData::new(&x2, p, &kernel, *t0, policy)?.weighted_mean();
                rows.push((f, mean));
            }
            Err(e) => failures.push(format!("t0={t0}: {e}")),
        }
    }
    let mut w = create(&a.out)?;
    write_fits_csv(&mut w, p, &rows)?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    run.manifest("fit", loaded.as_ref(), seeds, &[&a.out], &sibling_manifest(&a.out))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Domain(failures.join("\n")))
    }
}

fn experiment(run: &Run, config: &Path, out_dir: &Path) -> Outcome {
    let loaded = load(config)?;
    let spec = loaded.config.model.build()?;
    let section = loaded
        .config
        .experiment
        .as_ref()
        .ok_or_else(|| Failure::Config("config has no [experiment] section".into()))?;
    let mut cfg = section.build(spec)?;
    if let Some(s) = run.seed {
        cfg.base_seed = s;
    }
    let summary = run_experiment(&cfg, run.threads)?;
    let (header, rows) = summary.table();
    let csv = out_dir.join("summary.csv");
    let mut w = create(&csv)?;
    write_table(&mut w, &header, &rows)?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))?;
    for c in &summary.cells {
        if c.failed > 0 {
            eprintln!("u0={} n={} b={:?}: {} of {} replications failed", c.u0, c.n, c.b, c.failed, summary.reps);
        }
    }
    run.manifest("experiment", Some(&loaded), vec![cfg.base_seed], &[&csv], &out_dir.join("manifest.json"))
}

fn asymptotics(run: &Run, config: &Path, u0: Option<f64>, n: Option<usize>, out: Option<&Path>) -> Outcome {
    let loaded = load(config)?;
    let spec = loaded.config.model.build()?;
    let section = loaded.config.asymptotics.clone();
    let u0 = u0
        .or(section.as_ref().and_then(|s| s.u0))
        .ok_or_else(|| Failure::Config("point needed: --u0 or [asymptotics] u0".into()))?;
    let n = n
        .or(section.as_ref().and_then(|s| s.n))
        .ok_or_else(|| Failure::Config("sample size needed: --n or [asymptotics] n".into()))?;
    let family = section.as_ref().map(|s| s.kernel).unwrap_or(KernelFamily::Rectangular);
    let mut mc = McSettings::default();
    let mut du = 0.02;
    if let Some(s) = &section {
        mc = McSettings {
            n: s.mc_n,
            reps: s.mc_reps,
            seed: s.mc_seed,
        };
        du = s.du;
    }
    if let Some(seed) = run.seed {
        mc.seed = seed;
    }
    // the bandwidth only enters through the kernel moments
    let kernel = KernelSpec::new(family, 0.5)?;
    let report = asymptotics_report(&spec, u0, n, &kernel, &mc, du)?;
    print!("{}", report.render());
    if let Some(out) = out {
        let mut w = create(out)?;
        write_table(&mut w, &report.csv_header(), &[report.csv_row()])?;
        w.flush().map_err(|e| Failure::Io(e.to_string()))?;
        run.manifest("asymptotics", Some(&loaded), vec![mc.seed], &[out], &sibling_manifest(out))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    let run = Run {
        started: unix_now(),
        argv: std::env::args().collect(),
        threads: cli.threads.unwrap_or(0),
        seed: cli.seed,
        strict: cli.strict_boundary,
    };
    if let Some(t) = cli.threads {
        // a second call only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match cli.command {
        Command::Validate { config, out } => validate(&run, &config, out.as_deref()),
        Command::Simulate { config, n, mode, out } => simulate(&run, &config, n, mode, &out),
        Command::Fit {
            config,
            data,
            order,
            t0,
            grid,
            b,
            kernel,
            omega,
            warm_start,
            out,
        } => fit(
            &run,
            FitArgs {
                config,
                data,
                order,
                t0,
                grid,
                b,
                kernel,
                omega,
                warm_start,
                out,
            },
        ),
        Command::Experiment { config, out_dir } => experiment(&run, &config, &out_dir),
        Command::Asymptotics { config, u0, n, out } => asymptotics(&run, &config, u0, n, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(3)
        }
    }
}
