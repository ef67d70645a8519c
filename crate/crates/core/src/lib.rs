//! Time-varying ARCH processes: simulation, local quasi-maximum-likelihood
//! estimation and its asymptotic theory.

pub mod asymptotics;
pub mod config;
pub mod curve;
pub mod error;
pub mod estimate;
pub mod io;
pub mod kernel;
pub mod likelihood;
pub mod model;
pub mod montecarlo;
pub mod omega;
pub mod rng;
pub mod simulate;

pub use asymptotics::{
    asymptotics_report, bias_mu, confidence_intervals, optimal_bandwidth, sigma_of_u, AsymptoticsReport, McSettings,
};
pub use curve::{CurveFamily, ParameterCurve};
pub use error::{Error, Result};
pub use estimate::{fit_local, fit_path, standard_errors, FitOptions, FitResult};
pub use kernel::{BoundaryPolicy, KernelFamily, KernelSpec, LocalWeights};
pub use likelihood::{LikelihoodEval, LocalData};
pub use model::{build_spec, Regularity, TvArchSpec, WeightSequence};
pub use montecarlo::{run_experiment, BandwidthRule, ExperimentConfig, ExperimentKind, ExperimentSummary};
pub use omega::OmegaSpace;
pub use rng::{derive_seed, InnovationLaw, InnovationStream};
pub use simulate::{simulate_stationary, simulate_tvarch, SamplePath, StartMode};
