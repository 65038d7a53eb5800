//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use hartree_core::{
    validate_assumptions, Error as CoreError, SolverOptions, SystemParams, ValidationReport,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] CoreError),
    #[error("{0}")]
    OutOfScope(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    Validate,
    Minimize,
    Evolve,
    ScanSubadditivity,
    Stability,
    LemmaChecks,
}

/// Sign of the interaction. Only the attractive system is supported; the key
/// exists so that a repulsive request fails loudly instead of being ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    #[default]
    Attractive,
    Repulsive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Seeds for the random starting points; empty means "the run seed and the
    /// one after it".
    pub seeds: Vec<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iters: d.max_iters,
            seeds: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }

    pub fn seeds_or(&self, seed: u64) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![seed, seed.wrapping_add(1)]
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    #[serde(rename = "T", alias = "t_final")]
    pub t_final: f64,
    pub dt: f64,
    pub sample_every: usize,
    /// Size of the random `H1`-normalized perturbation added to the ground state.
    pub perturbation: f64,
    /// Start from this snapshot instead of the computed ground state.
    pub initial: Option<PathBuf>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            t_final: 5.0,
            dt: 1e-3,
            sample_every: 10,
            perturbation: 0.0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub epsilons: Vec<f64>,
    #[serde(rename = "T", alias = "t_final")]
    pub t_final: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![1e-2, 1e-3],
            t_final: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Explicit `(M, T)` pairs; the built-in list for the component count is
    /// used when absent.
    pub pairs: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: SystemParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub experiment: Experiment,
    /// Not serialized, so manifests do not depend on where a run was written.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub coupling: Coupling,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Parse without checking the analytic assumptions.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_config(path: &Path) -> Result<(RunConfig, Vec<u8>), ConfigError> {
    let bytes = fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| ConfigError::Parse {
        line: 0,
        column: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    Ok((parse_config(text)?, bytes))
}

/// Structural, numerical and scope checks; returns the clause report.
pub fn check_config(cfg: &RunConfig) -> Result<ValidationReport, ConfigError> {
    if cfg.coupling == Coupling::Repulsive {
        return Err(ConfigError::OutOfScope(
            "repulsive coupling is not supported; only the attractive system is modelled".into(),
        ));
    }
    let p = &cfg.params;
    p.check_structure()?;
    if p.kernel_exponent >= p.space_dim as f64 {
        return Err(CoreError::SingularKernel {
            alpha: p.kernel_exponent,
            dim: p.space_dim,
        }
        .into());
    }
    let numbers_ok = cfg.solver.tol > 0.0
        && cfg.evolution.t_final > 0.0
        && cfg.evolution.dt > 0.0
        && cfg.evolution.perturbation >= 0.0
        && cfg.stability.t_final > 0.0
        && cfg.stability.epsilons.iter().all(|e| *e > 0.0);
    if !numbers_ok {
        return Err(CoreError::InvalidParameter(
            "tol, T, dt and stability epsilons must be positive".into(),
        )
        .into());
    }
    Ok(validate_assumptions(p)?.into_result()?)
}

/// Read, parse and fully validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let (cfg, _) = read_config(path)?;
    check_config(&cfg)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "params": {
            "space_dim": 1, "components": 2, "power": 2.0, "kernel_exponent": 0.5,
            "masses": [1.0, 1.0], "box_length": 40.0, "points_per_dim": 256
        }
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.experiment, Experiment::Validate);
        assert_eq!(cfg.solver.tol, 1e-6);
        assert_eq!(cfg.evolution.dt, 1e-3);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.solver.seeds_or(4), vec![4, 5]);
        assert!(check_config(&cfg).unwrap().passed);
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = MINIMAL.replacen("\"params\"", "\"colour\": 1, \"params\"", 1);
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Parse { .. })
        ));
        let nested = MINIMAL.replace("\"power\"", "\"powr\": 1, \"power\"");
        let err = parse_config(&nested).unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn evolution_accepts_capital_t() {
        let text = MINIMAL.replacen("{", r#"{ "evolution": { "T": 2.5, "dt": 0.01 },"#, 1);
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.evolution.t_final, 2.5);
        assert_eq!(cfg.evolution.sample_every, 10);
    }

    #[test]
    fn repulsive_coupling_rejected() {
        let text = MINIMAL.replacen("{", r#"{ "coupling": "repulsive","#, 1);
        let cfg = parse_config(&text).unwrap();
        assert!(matches!(
            check_config(&cfg),
            Err(ConfigError::OutOfScope(_))
        ));
    }

    #[test]
    fn failing_clause_is_named() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.params.space_dim = 3;
        cfg.params.power = 3.0;
        cfg.params.kernel_exponent = 1.0;
        let msg = check_config(&cfg).unwrap_err().to_string();
        assert!(msg.contains("(h0)"), "{msg}");
    }
}
