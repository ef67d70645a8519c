//! TOML run configuration.
//!
//! ```toml
//! [model]
//! innovation = { law = "gaussian" }        # or "student-t" with df, or "two-point"
//! regularity = { rho = 0.5, q = 0.35, nu = 0.3, m = 2.0, ell = { kind = "unit" } }
//!
//! [[model.curves]]                          # a_0, then a_1 .. a_p
//! family = "sinusoid"
//! coefficients = [2.0, 1.0, 0.0]
//!
//! [simulate]                                # optional sections below
//! n = 4000
//! seed = 1
//! mode = "stationary-start"
//!
//! [fit]
//! kernel = "rectangular"
//! b = 0.2
//! omega = { rho1 = 0.01, rho2 = 10.0 }
//! grid = [1000, 2000]                       # or t0 = 2000
//!
//! [experiment]
//! kind = "bias-law"
//! u0 = [0.5]
//! n = [4000]
//! b = { rule = "fixed", values = [0.2] }    # or { rule = "power", c = 0.8, gamma = 0.4 }
//! reps = 2000
//! base_seed = 7
//! omega = { rho1 = 0.01, rho2 = 10.0 }
//!
//! [asymptotics]
//! u0 = 0.5
//! n = 4000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::ParameterCurve;
use crate::error::{Error, Result};
use crate::kernel::{BoundaryPolicy, KernelFamily};
use crate::model::{build_spec, Regularity, TvArchSpec};
use crate::montecarlo::{BandwidthRule, ExperimentConfig, ExperimentKind};
use crate::omega::OmegaSpace;
use crate::rng::InnovationLaw;
use crate::simulate::StartMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub curves: Vec<ParameterCurve>,
    pub innovation: InnovationLaw,
    pub regularity: Regularity,
}

impl ModelConfig {
    /// Builds the spec and checks every assumption.
    pub fn build(&self) -> Result<TvArchSpec> {
        build_spec(self.curves.clone(), self.innovation, self.regularity)
    }

    /// Builds the spec with structural checks only.
    pub fn build_unchecked(&self) -> Result<TvArchSpec> {
        TvArchSpec::unchecked(self.curves.clone(), self.innovation, self.regularity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub rho1: f64,
    pub rho2: f64,
}

impl OmegaConfig {
    pub fn build(&self, p: usize) -> Result<OmegaSpace> {
        OmegaSpace::new(p, self.rho1, self.rho2)
    }
}

fn default_mode() -> StartMode {
    StartMode::StationaryStart
}

fn default_kernel() -> KernelFamily {
    KernelFamily::Rectangular
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: StartMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    pub b: Option<f64>,
    pub omega: Option<OmegaConfig>,
    pub t0: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub boundary: Option<BoundaryPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub u0: Vec<f64>,
    pub n: Vec<usize>,
    pub b: Option<BandwidthRule>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub omega: Option<OmegaConfig>,
    #[serde(default)]
    pub distances: Vec<f64>,
    #[serde(default = "default_mode")]
    pub start_mode: StartMode,
}

impl ExperimentSection {
    /// Without an explicit rule, `b = 0.8 N^-0.4` for coverage runs and
    /// `b = 0.8 N^-0.2` otherwise.
    pub fn build(&self, spec: TvArchSpec) -> Result<ExperimentConfig> {
        let b = self.b.clone().unwrap_or(match self.kind {
            ExperimentKind::CltCoverage => BandwidthRule::Power { c: 0.8, gamma: 0.4 },
            _ => BandwidthRule::Power { c: 0.8, gamma: 0.2 },
        });
        let omega = match &self.omega {
            Some(o) => Some(o.build(spec.order())?),
            None => None,
        };
        let cfg = ExperimentConfig {
            spec,
            kind: self.kind,
            u0: self.u0.clone(),
            n: self.n.clone(),
            b,
            kernel: self.kernel,
            reps: self.reps,
            base_seed: self.base_seed,
            omega,
            distances: self.distances.clone(),
            start_mode: self.start_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_du() -> f64 {
    0.02
}

fn default_mc_n() -> usize {
    10_000
}

fn default_mc_reps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsSection {
    pub u0: Option<f64>,
    pub n: Option<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelFamily,
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    #[serde(default)]
    pub mc_seed: u64,
    #[serde(default = "default_du")]
    pub du: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub simulate: Option<SimulateSection>,
    pub fit: Option<FitSection>,
    pub experiment: Option<ExperimentSection>,
    pub asymptotics: Option<AsymptoticsSection>,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<(RunConfig, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok((parse_config(&text)?, text))
}

/// SHA-256 of the config rendered as key-sorted JSON, so reordering keys or
/// reformatting the file leaves it unchanged.
pub fn config_digest(text: &str) -> Result<String> {
    let value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let json = serde_json::to_value(&value).map_err(|e| Error::Config(e.to_string()))?;
    let canonical = serde_json::to_string(&json).map_err(|e| Error::Config(e.to_string()))?;
    let hash = Sha256::digest(canonical.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
[model]
innovation = { law = "gaussian" }
regularity = { rho = 0.5, q = 0.35, nu = 0.3, m = 10.0, ell = { kind = "unit" } }

[[model.curves]]
family = "sinusoid"
coefficients = [2.0, 1.0, 0.0]

[[model.curves]]
family = "constant"
coefficients = [0.3]

[experiment]
kind = "clt-coverage"
u0 = [0.5]
n = [4000]
reps = 10
omega = { rho1 = 0.01, rho2 = 10.0 }
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = parse_config(TEXT).unwrap();
        let spec = cfg.model.build().unwrap();
        assert_eq!(spec.order(), 1);
        let exp = cfg.experiment.unwrap().build(spec).unwrap();
        assert_eq!(exp.b, BandwidthRule::Power { c: 0.8, gamma: 0.4 });
        assert_eq!(exp.start_mode, StartMode::StationaryStart);
    }

    #[test]
    fn digest_ignores_key_order_and_layout() {
        let reordered = r#"
[experiment]
reps = 10
omega = { rho2 = 10.0, rho1 = 0.01 }
n = [4000]
u0 = [0.5]
kind = "clt-coverage"

[model]
regularity = { ell = { kind = "unit" }, m = 10.0, nu = 0.3, q = 0.35, rho = 0.5 }
innovation = { law = "gaussian" }

[[model.curves]]
coefficients = [2.0, 1.0, 0.0]
family = "sinusoid"

[[model.curves]]
coefficients = [0.3]
family = "constant"
"#;
        assert_eq!(config_digest(TEXT).unwrap(), config_digest(reordered).unwrap());
        let changed = TEXT.replace("reps = 10", "reps = 11");
        assert_ne!(config_digest(TEXT).unwrap(), config_digest(&changed).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TEXT.replace("reps = 10", "repz = 10");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        assert!(matches!(parse_config("not = [toml"), Err(Error::Config(_))));
    }
}
