//! JSON run configuration with strict key checking.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bgk_sl_core::{build_grid, Error, GridSpec, Result, StudyOptions};
use serde::{Deserialize, Serialize};

use crate::ic::{self, InitialCondition};

/// Artifacts the CLI can write.
pub const ARTIFACTS: [&str; 6] = [
    "fields_final.csv",
    "moments_final.csv",
    "diagnostics.csv",
    "convergence.json",
    "convergence.csv",
    "cfl_sweep.csv",
];

pub const DEFAULT_CFL: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];

fn default_q() -> f64 {
    4.0
}

fn default_outputs() -> PathBuf {
    PathBuf::from("./out")
}

fn default_artifacts() -> Vec<String> {
    ARTIFACTS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_refine")]
    pub refine: usize,
}

fn default_m() -> f64 {
    1.0
}
fn default_levels() -> usize {
    4
}
fn default_refine() -> usize {
    2
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            m: default_m(),
            levels: default_levels(),
            refine: default_refine(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub cfl: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { cfl: DEFAULT_CFL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub nx: usize,
    pub nv: usize,
    pub nt: usize,
    pub vmax: f64,
    pub t_final: f64,
    pub kappa: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    pub ic_name: String,
    #[serde(default)]
    pub ic_params: BTreeMap<String, f64>,
    /// Field CSV for `custom_table`, relative to the config file.
    #[serde(default)]
    pub ic_table: Option<PathBuf>,
    /// Output directory.
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Artifact file names to write; all by default.
    #[serde(default = "default_artifacts")]
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub study: Option<StudyConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Grid with the time-step bound enforced.
    pub fn grid(&self) -> Result<GridSpec> {
        build_grid(self.nx, self.nv, self.nt, self.vmax, self.t_final, self.kappa, self.q)
    }

    /// Grid without the time-step check, for advisory validation.
    pub fn grid_unchecked(&self) -> Result<GridSpec> {
        GridSpec::from_counts(self.nx, self.nv, self.nt, self.vmax, self.t_final, self.kappa, self.q)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        ic::resolve(&self.ic_name, &self.ic_params, self.ic_table.as_deref(), &self.base_dir)
    }

    pub fn study_options(&self) -> StudyOptions {
        let s = self.study.clone().unwrap_or_default();
        StudyOptions {
            m: s.m,
            levels: s.levels,
            refine: s.refine,
        }
    }

    pub fn cfl_values(&self) -> Vec<f64> {
        self.sweep.clone().unwrap_or_default().cfl
    }

    pub fn wants(&self, artifact: &str) -> bool {
        self.artifacts.iter().any(|a| a == artifact)
    }

    /// Parses and validates a config from JSON text.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                Error::Config(e.inner().to_string())
            } else {
                Error::Config(format!("{path}: {}", e.inner()))
            }
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !ic::IC_NAMES.contains(&self.ic_name.as_str()) {
            return Err(Error::Config(format!(
                "ic_name: unknown initial condition `{}` (valid: {})",
                self.ic_name,
                ic::IC_NAMES.join(", ")
            )));
        }
        if let Some(bad) = self.artifacts.iter().find(|a| !ARTIFACTS.contains(&a.as_str())) {
            return Err(Error::Config(format!(
                "artifacts: unknown artifact `{bad}` (valid: {})",
                ARTIFACTS.join(", ")
            )));
        }
        self.grid_unchecked()?;
        Ok(())
    }
}

/// Reads and validates the config at `path`.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::from_json(&text, &base)
}
