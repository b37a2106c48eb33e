use std::path::{Path, PathBuf};

use ctl_core::functional::{critical_exponent, Params};
use ctl_core::optimizer::SolverConfig;
use ctl_core::symmetry::{minimal_orbital_set, GroupSpec, OrbitalSet};
use ctl_core::trace_constant::{Method, DEFAULT_RESOLUTION, DEFAULT_TRUNCATION_RADIUS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Neighbourhood radius: a number, or `"auto"` for the certified radius of the orbital set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum Kappa {
    #[default]
    #[serde(with = "auto")]
    Auto,
    Value(f64),
}

mod auto {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("kappa must be a number or \"auto\", got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Bubble width; `None` means `kappa / 3`.
    pub bubble_width: Option<f64>,
    pub perturbation: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iters: 500, grad_tol: 1e-6, bubble_width: None, perturbation: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    pub method: Method,
    pub truncation_radius: f64,
    pub resolution: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { method: Method::Oracle, truncation_radius: DEFAULT_TRUNCATION_RADIUS, resolution: DEFAULT_RESOLUTION }
    }
}

/// Everything an experiment needs. `q` is derived from `(n, p)` and never read from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: f64,
    pub ks: Vec<usize>,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_lambdas")]
    pub lambda_schedule: Vec<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub kappa: Kappa,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub oracle: OracleSettings,
}

fn default_refinement() -> usize {
    2
}
fn default_lambdas() -> Vec<f64> {
    vec![10.0, 30.0, 100.0, 300.0, 1000.0]
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-2, 1e-4, 1e-6, 1e-8]
}
fn default_beta() -> f64 {
    0.1
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// What `validate` prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub ks: Vec<usize>,
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn q(&self) -> f64 {
        critical_exponent(self.n, self.p)
    }

    /// Schema-level checks plus the invariants of every solver configuration the file implies.
    pub fn validate(&self) -> CliResult<ValidationReport> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.ks.is_empty() {
            return bad("ks must list at least one rotation order".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if let Kappa::Value(k) = self.kappa {
            if !(k > 0.0 && k < std::f64::consts::PI) {
                return bad(format!("kappa must lie in (0, pi), got {k}"));
            }
        }
        if !(self.oracle.truncation_radius > 1.0 && self.oracle.resolution >= 4) {
            return bad("oracle needs truncation_radius > 1 and resolution >= 4".into());
        }
        let mut warnings = Vec::new();
        for &k in &self.ks {
            let spec = GroupSpec::for_dim(self.n, k).map_err(|e| CliError::Config(e.to_string()))?;
            let set = self.orbital_set(spec)?;
            let solver = self.solver_config(&set, self.lambda_schedule.first().copied().unwrap_or(1.0))?;
            solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(w) = solver.params.regime_warning() {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
        }
        Ok(ValidationReport { valid: true, n: self.n, p: self.p, q: self.q(), ks: self.ks.clone(), warnings })
    }

    pub fn orbital_set(&self, spec: GroupSpec) -> CliResult<OrbitalSet> {
        let kappa = match self.kappa {
            Kappa::Auto => None,
            Kappa::Value(k) => Some(k),
        };
        minimal_orbital_set(spec, kappa).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_config(&self, set: &OrbitalSet, lambda: f64) -> CliResult<SolverConfig> {
        let params = Params::new(self.n, self.p, lambda)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_beta(self.beta)
            .with_kappa(set.kappa);
        let mut cfg = SolverConfig::new(params);
        cfg.lambda_schedule = self.lambda_schedule.clone();
        cfg.epsilon_schedule = self.epsilon_schedule.clone();
        cfg.max_iters = self.solver.max_iters;
        cfg.grad_tol = self.solver.grad_tol;
        cfg.bubble_width = self.solver.bubble_width;
        cfg.perturbation = self.solver.perturbation;
        Ok(cfg)
    }

    /// SHA-256 of everything that influences results; the output directory is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
