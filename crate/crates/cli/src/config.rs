//! Experiment configuration, read from TOML.
//!
//! ```toml
//! kind = "chain-mc"
//! seed = 42
//!
//! [chain]
//! fixture = "c1"          # or: file = "chains/c1.chain"
//! trace = [1, 2]
//!
//! [samples]
//! feller_paths = 1000
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Every section and key is optional except `seed`; the defaults below are
//! the documented ones.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trace_forms::tolerances;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ChainVerify,
    ChainMc,
    SphereVerify,
    SphereMc,
    Prototype,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::ChainVerify => "chain-verify",
            Kind::ChainMc => "chain-mc",
            Kind::SphereVerify => "sphere-verify",
            Kind::SphereMc => "sphere-mc",
            Kind::Prototype => "prototype",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    C1,
    C2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    /// Chain file in the plain-text chain format. Takes precedence over
    /// `fixture`.
    pub file: Option<PathBuf>,
    pub fixture: Fixture,
    /// Trace set; defaults to the `F:` line of the file, or `[1, 2]` for
    /// the fixtures.
    pub trace: Option<Vec<usize>>,
    /// Boundary function on the trace set; defaults to `1, 2, ..., k`.
    pub u: Option<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// Random positive reweightings of `E0` for the time-change check.
    pub reweightings: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            file: None,
            fixture: Fixture::C1,
            trace: None,
            u: None,
            alphas: vec![1.0, 10.0, 100.0],
            reweightings: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarFieldMode {
    Absorb,
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSection {
    pub dim: usize,
    pub radius: f64,
    /// Highest harmonic degree checked by `sphere-verify`.
    pub max_degree: usize,
    /// Quadrature order of the product rule for the Douglas integral.
    pub order: usize,
    /// Start point for escape and hitting-law runs.
    pub point: Vec<f64>,
    /// Radius of the absorbing far sphere, in units of `radius`.
    pub far_radius: f64,
    /// Decreasing shell widths, at least three.
    pub eps: Vec<f64>,
    /// Far-field treatment for the shell estimator and hitting law.
    pub far_field: FarFieldMode,
    /// Polar bins for the hitting-law χ² test.
    pub hit_bins: usize,
}

impl Default for SphereSection {
    fn default() -> Self {
        Self {
            dim: 3,
            radius: 1.0,
            max_degree: 3,
            order: 40,
            point: vec![2.0, 0.0, 0.0],
            far_radius: 100.0,
            eps: vec![0.1, 0.05, 0.025],
            far_field: FarFieldMode::Restart,
            hit_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub identity: f64,
    pub routes: f64,
    pub feller_symmetry: f64,
    pub time_change: f64,
    pub sphere_identity: f64,
    pub z_bound: f64,
    /// Relative tolerance of the extrapolated shell bins, which carry a
    /// bias of a few percent that more trials do not remove.
    pub shell_rel: f64,
    /// Significance level of the χ² hitting-law test.
    pub chi2_level: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: tolerances::IDENTITY,
            routes: tolerances::TRACE_ROUTES,
            feller_symmetry: tolerances::FELLER_SYMMETRY,
            time_change: tolerances::IDENTITY,
            sphere_identity: tolerances::SPHERE_IDENTITY,
            z_bound: tolerances::Z_BOUND,
            shell_rel: tolerances::SHELL_REL,
            chi2_level: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    pub feller_paths: u64,
    /// Path length for the ergodic reading on conservative chains.
    pub feller_horizon: f64,
    /// Time `t` and path count of the finite-time reading on chains with
    /// killing.
    pub feller_t: f64,
    pub feller_finite_paths: u64,
    pub supplementary_paths: u64,
    pub t_grid: Vec<f64>,
    pub levy_paths: u64,
    pub levy_t: f64,
    pub curve_paths: u64,
    pub curve_t: Vec<f64>,
    pub walks: u64,
    pub hits: u64,
    pub shell_trials: u64,
}

impl Default for Samples {
    fn default() -> Self {
        Self {
            feller_paths: 1000,
            feller_horizon: 1000.0,
            feller_t: 0.4,
            feller_finite_paths: 200_000,
            supplementary_paths: 200_000,
            t_grid: vec![0.4, 0.2, 0.1],
            levy_paths: 100_000,
            levy_t: 0.5,
            curve_paths: 200_000,
            curve_t: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            walks: 100_000,
            hits: 100_000,
            shell_trials: 1_000_000,
        }
    }
}

/// Smallest accepted sample sizes.
pub const MIN_PATHS: u64 = 100;
pub const MIN_SHELL_TRIALS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    pub out: Option<PathBuf>,
    /// Worker threads; 0 lets the pool choose. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub sphere: SphereSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub samples: Samples,
}

fn config_error(path: &Path, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{}: {msg}", path.display()))
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(path, format!("cannot read config file ({e})")))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| config_error(path, e.message()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(f) = &cfg.chain.file {
            if f.is_relative() {
                cfg.chain.file = Some(base.join(f));
            }
        }
        if let Some(o) = &cfg.out {
            if o.is_relative() {
                cfg.out = Some(base.join(o));
            }
        }
        cfg.validate().map_err(|e| match e {
            CliError::Config(m) => config_error(path, m),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(f) = &self.chain.file {
            if !f.is_file() {
                return bad(format!("chain file {} does not exist", f.display()));
            }
        }
        let s = &self.samples;
        for (name, v) in [
            ("feller_paths", s.feller_paths),
            ("feller_finite_paths", s.feller_finite_paths),
            ("supplementary_paths", s.supplementary_paths),
            ("levy_paths", s.levy_paths),
            ("curve_paths", s.curve_paths),
            ("walks", s.walks),
            ("hits", s.hits),
        ] {
            if v < MIN_PATHS {
                return bad(format!("samples.{name} = {v} is below the minimum {MIN_PATHS}"));
            }
        }
        if s.shell_trials < MIN_SHELL_TRIALS {
            return bad(format!(
                "samples.shell_trials = {} is below the minimum {MIN_SHELL_TRIALS}",
                s.shell_trials
            ));
        }
        if s.t_grid.len() < 2 {
            return bad("samples.t_grid needs at least two points".into());
        }
        for (name, v) in [
            ("feller_horizon", s.feller_horizon),
            ("feller_t", s.feller_t),
            ("levy_t", s.levy_t),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("samples.{name} must be positive"));
            }
        }
        if s.t_grid.iter().chain(&s.curve_t).any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("time grids must be positive".into());
        }
        let sp = &self.sphere;
        if sp.dim < 2 || !(sp.radius > 0.0) {
            return bad("sphere needs dim >= 2 and a positive radius".into());
        }
        if sp.point.len() != sp.dim {
            return bad(format!("sphere.point has {} coordinates, dim is {}", sp.point.len(), sp.dim));
        }
        if sp.eps.len() < 3 || sp.eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("sphere.eps needs at least three decreasing widths".into());
        }
        if !(sp.far_radius > 2.0 && sp.far_radius.is_finite()) {
            return bad("sphere.far_radius must exceed 2".into());
        }
        if sp.hit_bins < 2 {
            return bad("sphere.hit_bins must be at least 2".into());
        }
        let t = &self.tolerances;
        if [t.identity, t.routes, t.feller_symmetry, t.time_change, t.sphere_identity, t.z_bound, t.shell_rel]
            .iter()
            .any(|&v| !(v > 0.0))
            || !(t.chi2_level > 0.0 && t.chi2_level < 1.0)
        {
            return bad("tolerances must be positive and chi2_level in (0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_seed() {
        let c = ExperimentConfig::parse("seed = 7\nkind = \"chain-verify\"\n").unwrap();
        assert_eq!(c.kind, Some(Kind::ChainVerify));
        assert_eq!(c.tolerances.identity, 1e-10);
        assert_eq!(c.tolerances.routes, 1e-12);
        assert_eq!(c.tolerances.z_bound, 4.0);
        assert_eq!(c.tolerances.sphere_identity, 1e-3);
        assert_eq!(c.samples.t_grid, vec![0.4, 0.2, 0.1]);
        assert!(matches!(ExperimentConfig::parse("kind = \"prototype\"\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_small_samples_and_unknown_keys() {
        let e = ExperimentConfig::parse("seed = 1\n[samples]\nwalks = 5\n").unwrap_err();
        assert!(e.to_string().contains("samples.walks"));
        assert!(ExperimentConfig::parse("seed = 1\nsed = 2\n").is_err());
        assert!(ExperimentConfig::parse("seed = 1\n[sphere]\neps = [0.1, 0.2, 0.05]\n").is_err());
    }
}
