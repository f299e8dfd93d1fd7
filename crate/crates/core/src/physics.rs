//! Discrete macroscopic moments and local Maxwellians.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::grid::GridSpec;

/// Densities at or below this are treated as vacuum.
pub const VACUUM_DENSITY: f64 = 1e-14;
/// Temperatures at or below this are treated as degenerate.
pub const DEGENERATE_TEMPERATURE: f64 = 1e-14;

/// Spatial cells per parallel work item in moment reductions.
const CELL_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    Regular,
    /// Density at round-off level; velocity and temperature set to zero.
    Vacuum,
    /// Positive density but (numerically) zero temperature.
    Cold,
}

impl CellFlag {
    pub fn is_degenerate(self) -> bool {
        self != CellFlag::Regular
    }

    fn as_str(self) -> &'static str {
        match self {
            CellFlag::Regular => "regular",
            CellFlag::Vacuum => "vacuum",
            CellFlag::Cold => "cold",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "regular" => Some(CellFlag::Regular),
            "vacuum" => Some(CellFlag::Vacuum),
            "cold" => Some(CellFlag::Cold),
            _ => None,
        }
    }
}

/// Per-cell density, bulk velocity and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField {
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub temp: Vec<f64>,
    pub flags: Vec<CellFlag>,
}

/// Moments of a single velocity profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments {
    pub rho: f64,
    pub u: f64,
    pub temp: f64,
    pub flag: CellFlag,
}

impl CellMoments {
    /// From the raw sums `sum f`, `sum f v`, `sum f (v - u)^2` (without `dv`).
    fn from_sums(mass: f64, momentum: f64, dv: f64, second: impl FnOnce(f64) -> f64) -> Self {
        let rho = mass * dv;
        if !(rho > VACUUM_DENSITY) {
            return Self {
                rho: rho.max(0.0),
                u: 0.0,
                temp: 0.0,
                flag: CellFlag::Vacuum,
            };
        }
        let u = momentum / mass;
        let temp = second(u) / mass;
        if temp > DEGENERATE_TEMPERATURE {
            Self {
                rho,
                u,
                temp,
                flag: CellFlag::Regular,
            }
        } else {
            Self {
                rho,
                u,
                temp: 0.0,
                flag: CellFlag::Cold,
            }
        }
    }
}

impl MomentField {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn cell(&self, i: usize) -> CellMoments {
        CellMoments {
            rho: self.rho[i],
            u: self.u[i],
            temp: self.temp[i],
            flag: self.flags[i],
        }
    }

    pub fn uniform(n: usize, rho: f64, u: f64, temp: f64) -> Self {
        let flag = if rho <= VACUUM_DENSITY {
            CellFlag::Vacuum
        } else if temp <= DEGENERATE_TEMPERATURE {
            CellFlag::Cold
        } else {
            CellFlag::Regular
        };
        Self {
            rho: vec![rho; n],
            u: vec![u; n],
            temp: vec![temp; n],
            flags: vec![flag; n],
        }
    }

    pub fn degenerate_cells(&self) -> usize {
        self.flags.iter().filter(|f| f.is_degenerate()).count()
    }

    /// Writes `i,x,rho,u,temp,flag` rows.
    pub fn write_csv<W: Write>(&self, grid: &GridSpec, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "x", "rho", "u", "temp", "flag"])?;
        for i in 0..self.len() {
            w.write_record([
                i.to_string(),
                grid.x(i).to_string(),
                self.rho[i].to_string(),
                self.u[i].to_string(),
                self.temp[i].to_string(),
                self.flags[i].as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = MomentField {
            rho: vec![],
            u: vec![],
            temp: vec![],
            flags: vec![],
        };
        let bad = |reason: String| Error::Parse {
            what: "moments CSV",
            reason,
        };
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(bad(format!("row {k}: expected 6 columns")));
            }
            let num = |c: usize| -> Result<f64> {
                rec[c]
                    .parse()
                    .map_err(|e| bad(format!("row {k}, column {c}: {e}")))
            };
            let i: usize = rec[0].parse().map_err(|e| bad(format!("row {k}: {e}")))?;
            if i != k {
                return Err(bad(format!("row {k}: out-of-order cell index {i}")));
            }
            out.rho.push(num(2)?);
            out.u.push(num(3)?);
            out.temp.push(num(4)?);
            out.flags
                .push(CellFlag::parse(&rec[5]).ok_or_else(|| bad(format!("row {k}: unknown flag {}", &rec[5])))?);
        }
        Ok(out)
    }
}

/// `rho_i = sum_j f_ij dv`, `rho_i u_i = sum_j f_ij v_j dv`,
/// `rho_i T_i = sum_j f_ij (v_j - u_i)^2 dv`, summed left to right in `j`.
pub fn compute_moments(field: &DistributionField) -> MomentField {
    let grid = field.grid();
    let nx = grid.nx;
    let velocities = grid.velocities();
    let chunks: Vec<Vec<CellMoments>> = (0..nx)
        .step_by(CELL_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + CELL_CHUNK).min(nx);
            let width = end - start;
            let mut mass = vec![0.0; width];
            let mut mom = vec![0.0; width];
            for (col, &v) in velocities.iter().enumerate() {
                let c = &field.column(col)[start..end];
                for k in 0..width {
                    mass[k] += c[k];
                    mom[k] += c[k] * v;
                }
            }
            let u: Vec<f64> = (0..width)
                .map(|k| if mass[k] * grid.dv > VACUUM_DENSITY { mom[k] / mass[k] } else { 0.0 })
                .collect();
            let mut second = vec![0.0; width];
            for (col, &v) in velocities.iter().enumerate() {
                let c = &field.column(col)[start..end];
                for k in 0..width {
                    let d = v - u[k];
                    second[k] += c[k] * d * d;
                }
            }
            (0..width)
                .map(|k| CellMoments::from_sums(mass[k], mom[k], grid.dv, |_| second[k]))
                .collect()
        })
        .collect();

    let mut out = MomentField {
        rho: Vec::with_capacity(nx),
        u: Vec::with_capacity(nx),
        temp: Vec::with_capacity(nx),
        flags: Vec::with_capacity(nx),
    };
    for c in chunks.into_iter().flatten() {
        out.rho.push(c.rho);
        out.u.push(c.u);
        out.temp.push(c.temp);
        out.flags.push(c.flag);
    }
    out
}

/// Moments of the extended field `E(f)(x, .)` at an arbitrary position, with
/// the velocity integrals taken at cell centres as for lattice moments.
pub fn extended_moments(field: &DistributionField, x: f64) -> CellMoments {
    let grid = field.grid();
    let velocities = grid.velocities();
    let profile: Vec<f64> = velocities.iter().map(|&v| field.eval_extended(x, v)).collect();
    let mass: f64 = profile.iter().sum();
    let mom: f64 = profile.iter().zip(&velocities).map(|(f, v)| f * v).sum();
    CellMoments::from_sums(mass, mom, grid.dv, |u| {
        profile
            .iter()
            .zip(&velocities)
            .map(|(f, v)| f * (v - u) * (v - u))
            .sum()
    })
}

/// One-dimensional Gaussian `rho/sqrt(2 pi T) exp(-(v-u)^2/(2T))`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Maxwellian {
    prefactor: f64,
    u: f64,
    two_t: f64,
}

impl Maxwellian {
    pub(crate) fn new(rho: f64, u: f64, temp: f64) -> Self {
        Self {
            prefactor: rho / (2.0 * PI * temp).sqrt(),
            u,
            two_t: 2.0 * temp,
        }
    }

    /// Zero for degenerate cells.
    pub(crate) fn for_cell(c: &CellMoments) -> Option<Self> {
        (c.flag == CellFlag::Regular).then(|| Self::new(c.rho, c.u, c.temp))
    }

    #[inline]
    pub(crate) fn at(&self, v: f64) -> f64 {
        let d = v - self.u;
        let m = self.prefactor * (-(d * d) / self.two_t).exp();
        if m < f64::MIN_POSITIVE {
            0.0
        } else {
            m
        }
    }
}

/// Local Maxwellian density at velocity `v`. Far tails underflow to exact zero.
pub fn maxwellian_value(rho: f64, u: f64, temp: f64, v: f64) -> Result<f64> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    if !(temp > 0.0) {
        return Err(Error::DegenerateTemperature { rho, temp });
    }
    Ok(Maxwellian::new(rho, u, temp).at(v))
}

/// Maxwellian sampled on the velocity nodes of each cell; degenerate cells
/// give zero rows.
pub fn discrete_maxwellian(moments: &MomentField, grid: &GridSpec) -> DistributionField {
    assert_eq!(moments.len(), grid.nx, "moment field does not match grid");
    let cells: Vec<Option<Maxwellian>> = (0..grid.nx)
        .map(|i| Maxwellian::for_cell(&moments.cell(i)))
        .collect();
    let mut values = vec![0.0; grid.node_count()];
    values
        .par_chunks_exact_mut(grid.nx)
        .enumerate()
        .for_each(|(col, out)| {
            let v = grid.v_col(col);
            for (o, m) in out.iter_mut().zip(&cells) {
                *o = m.map_or(0.0, |m| m.at(v));
            }
        });
    DistributionField::from_parts(*grid, values)
}
