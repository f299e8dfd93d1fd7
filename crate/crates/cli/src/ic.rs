//! Built-in initial conditions.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use bgk_sl_core::{build_grid, maxwellian_value, DistributionField, Error, FieldTable, InitialData, Result};

pub const IC_NAMES: [&str; 4] = ["uniform_maxwellian", "sine_density", "two_stream", "custom_table"];

/// A resolved initial condition, ready to sample.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// `rho0 * M(1, u0, t0)(v)`.
    UniformMaxwellian { rho0: f64, u0: f64, t0: f64 },
    /// `rho0 (1 + a sin 2 pi x) * M(1, u0, t0)(v)`.
    SineDensity { rho0: f64, amplitude: f64, u0: f64, t0: f64 },
    /// `rho0 (1 + a cos 2 pi k x) * (M(1, u0, t0) + M(1, -u0, t0)) / 2`.
    TwoStream {
        rho0: f64,
        amplitude: f64,
        mode: f64,
        u0: f64,
        t0: f64,
    },
    /// Extension of a field read from a CSV table.
    Table(DistributionField),
}

fn gauss(u: f64, t: f64, v: f64) -> f64 {
    maxwellian_value(1.0, u, t, v).unwrap_or(0.0)
}

impl InitialData for InitialCondition {
    fn value(&self, x: f64, v: f64) -> f64 {
        match self {
            Self::UniformMaxwellian { rho0, u0, t0 } => rho0 * gauss(*u0, *t0, v),
            Self::SineDensity { rho0, amplitude, u0, t0 } => {
                rho0 * (1.0 + amplitude * (2.0 * PI * x).sin()) * gauss(*u0, *t0, v)
            }
            Self::TwoStream { rho0, amplitude, mode, u0, t0 } => {
                rho0 * (1.0 + amplitude * (2.0 * PI * mode * x).cos()) * 0.5 * (gauss(*u0, *t0, v) + gauss(-*u0, *t0, v))
            }
            Self::Table(field) => field.eval_extended(x, v),
        }
    }
}

struct Params<'a> {
    ic: &'a str,
    map: &'a BTreeMap<String, f64>,
}

impl Params<'_> {
    fn required(&self, key: &str) -> Result<f64> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| Error::Config(format!("ic_params.{key}: required by `{}`", self.ic)))
    }

    fn optional(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!(
                "ic_params.{k}: unknown parameter for `{}` (accepted: {})",
                self.ic,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("ic_params.{key}: must be positive and finite, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("ic_params.{key}: must be finite, got {v}")))
    }
}

fn amplitude(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v.abs() < 1.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("ic_params.{key}: need |a| < 1 for a positive density, got {v}")))
    }
}

/// Resolves `name` with its parameters; `table` is the CSV path used by
/// `custom_table`, relative paths taken from `base_dir`.
pub fn resolve(
    name: &str,
    params: &BTreeMap<String, f64>,
    table: Option<&Path>,
    base_dir: &Path,
) -> Result<InitialCondition> {
    let p = Params { ic: name, map: params };
    match name {
        "uniform_maxwellian" => {
            p.only(&["rho0", "t0", "u0"])?;
            Ok(InitialCondition::UniformMaxwellian {
                rho0: finite("rho0", p.required("rho0")?)?,
                t0: positive("t0", p.required("t0")?)?,
                u0: finite("u0", p.optional("u0", 0.0))?,
            })
        }
        "sine_density" => {
            p.only(&["amplitude", "t0", "rho0", "u0"])?;
            Ok(InitialCondition::SineDensity {
                amplitude: amplitude("amplitude", p.required("amplitude")?)?,
                t0: positive("t0", p.required("t0")?)?,
                rho0: positive("rho0", p.optional("rho0", 1.0))?,
                u0: finite("u0", p.optional("u0", 0.0))?,
            })
        }
        "two_stream" => {
            p.only(&["u0", "t0", "rho0", "amplitude", "mode"])?;
            let mode = p.optional("mode", 1.0);
            if mode.fract() != 0.0 || !mode.is_finite() {
                return Err(Error::Config(format!(
                    "ic_params.mode: must be an integer for periodic data, got {mode}"
                )));
            }
            Ok(InitialCondition::TwoStream {
                u0: finite("u0", p.required("u0")?)?,
                t0: positive("t0", p.required("t0")?)?,
                rho0: positive("rho0", p.optional("rho0", 1.0))?,
                amplitude: amplitude("amplitude", p.optional("amplitude", 0.0))?,
                mode,
            })
        }
        "custom_table" => {
            p.only(&[])?;
            let path = table.ok_or_else(|| Error::Config("ic_table: required by `custom_table`".into()))?;
            let path = base_dir.join(path);
            let file = std::fs::File::open(&path)?;
            let t = FieldTable::read_csv(std::io::BufReader::new(file))?;
            // only the lattice matters for evaluation
            let grid = build_grid(t.nx, t.nv, 1, t.vmax, 1e-3, 1.0, 4.0)?;
            Ok(InitialCondition::Table(DistributionField::from_values(&grid, t.values)?))
        }
        other => Err(Error::Config(format!(
            "ic_name: unknown initial condition `{other}` (valid: {})",
            IC_NAMES.join(", ")
        ))),
    }
}
