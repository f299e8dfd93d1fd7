//! Convergence verification: mesh validity checks, a fine-grid reference
//! solution, weighted `L^1_2` errors, refinement studies and CFL sweeps.
//!
//! There is no closed-form solution to compare against, so errors are
//! measured against the scheme itself run on a grid refined beyond the
//! finest study level.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::DistributionField;
use crate::grid::{build_grid, GridSpec};
use crate::scheme::{init_field, run, InitialData};

/// Weight exponent of the error norm.
pub const ERROR_WEIGHT: f64 = 2.0;

/// Dense sampling for mesh validation: this many samples per study node,
/// capped per axis.
const DENSE_FACTOR: usize = 16;
const DENSE_MAX_X: usize = 2048;
const DENSE_MAX_V: usize = 4097;

/// Outcome of checking a mesh against the hypotheses of the error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshValidity {
    /// `dt < max(1/2, kappa)`.
    pub time_step_ok: bool,
    pub dt: f64,
    pub time_step_bound: f64,
    /// `dx + dv` below the smallness threshold.
    pub smallness_ok: bool,
    pub mesh_size: f64,
    pub smallness_threshold: f64,
    /// `inf_x int_{|v|<R} f0(x - v T_f, v) dv`.
    pub min_transported_density: f64,
    /// Finite-difference estimate of the weighted Sobolev norm of `f0`.
    pub nbar_q: f64,
}

impl MeshValidity {
    pub fn passed(&self) -> bool {
        self.time_step_ok && self.smallness_ok
    }
}

impl std::fmt::Display for MeshValidity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "{} (a) time step: dt = {} < max(1/2, kappa) = {}",
            verdict(self.time_step_ok),
            self.dt,
            self.time_step_bound
        )?;
        write!(
            f,
            "{} (b) mesh smallness: dx + dv = {} < {} (inf transported density {}, Nbar_q(f0) ~ {})",
            verdict(self.smallness_ok),
            self.mesh_size,
            self.smallness_threshold,
            self.min_transported_density,
            self.nbar_q
        )
    }
}

/// Checks the time-step bound and the mesh smallness condition
/// `dx + dv < inf_x int f0R(x - v T_f, v) dv / (2 Nbar_q(f0) (2 + T_f))`.
///
/// The integral, infimum and `Nbar_q(f0)` (weighted sup of `f0` and of its
/// `x` and `v` derivatives) are estimated on a dense lattice with central
/// differences.
pub fn validate_mesh(grid: &GridSpec, f0: &dyn InitialData) -> MeshValidity {
    let nxs = (DENSE_FACTOR * grid.nx).clamp(64, DENSE_MAX_X);
    let nvs = (DENSE_FACTOR * grid.velocity_count()).clamp(129, DENSE_MAX_V);
    let r = grid.vmax;
    let hx = 1.0 / nxs as f64;
    let hv = 2.0 * r / nvs as f64;
    let q = grid.q;
    let t_final = grid.t_final;

    // per x sample: (transported density, weighted sup of f0, of d/dx, of d/dv)
    let rows: Vec<[f64; 4]> = (0..nxs)
        .into_par_iter()
        .map(|ix| {
            let x = ix as f64 * hx;
            let mut density = 0.0;
            let (mut s0, mut sx, mut sv) = (0.0_f64, 0.0_f64, 0.0_f64);
            for iv in 0..nvs {
                let v = -r + (iv as f64 + 0.5) * hv;
                density += f0.value(x - v * t_final, v);
                let w = (1.0 + v.abs()).powf(q);
                s0 = s0.max(w * f0.value(x, v).abs());
                let dfdx = (f0.value(x + hx, v) - f0.value(x - hx, v)) / (2.0 * hx);
                let dfdv = (f0.value(x, v + hv) - f0.value(x, v - hv)) / (2.0 * hv);
                sx = sx.max(w * dfdx.abs());
                sv = sv.max(w * dfdv.abs());
            }
            [density * hv, s0, sx, sv]
        })
        .collect();

    let min_density = rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
    let sup = |k: usize| rows.iter().map(|r| r[k]).fold(0.0, f64::max);
    let nbar_q = sup(1) + sup(2) + sup(3);
    let threshold = if nbar_q > 0.0 && min_density > 0.0 {
        min_density / (2.0 * nbar_q * (2.0 + t_final))
    } else {
        0.0
    };
    let mesh_size = grid.dx + grid.dv;
    MeshValidity {
        time_step_ok: grid.dt < grid.time_step_bound(),
        dt: grid.dt,
        time_step_bound: grid.time_step_bound(),
        smallness_ok: mesh_size < threshold,
        mesh_size,
        smallness_threshold: threshold,
        min_transported_density: min_density,
        nbar_q,
    }
}

/// Final field of a run on `base` refined by `refine` in `nx`, `nv` and `nt`.
pub fn reference_solution(f0: &dyn InitialData, base: &GridSpec, refine: usize) -> Result<DistributionField> {
    if refine < 2 {
        return Err(Error::Config(format!("reference refinement must be at least 2, got {refine}")));
    }
    let grid = base.refined(refine)?;
    Ok(run(f0, &grid)?.0)
}

fn check_nested(coarse: &GridSpec, fine: &GridSpec) -> Result<(usize, usize)> {
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if fine.nx % coarse.nx != 0 || fine.nv % coarse.nv != 0 {
        return Err(Error::GridsNotNested(format!(
            "reference lattice {} x {} is not an integer refinement of {} x {}",
            fine.nx, fine.nv, coarse.nx, coarse.nv
        )));
    }
    if !same(coarse.vmax, fine.vmax) || !same(coarse.t_final, fine.t_final) {
        return Err(Error::GridsNotNested(format!(
            "velocity cutoff / final time differ: ({}, {}) vs ({}, {})",
            coarse.vmax, coarse.t_final, fine.vmax, fine.t_final
        )));
    }
    Ok((fine.nx / coarse.nx, fine.nv / coarse.nv))
}

/// Weighted `L^1_2` distance between the extension of `coarse` and the
/// reference, summed over the reference lattice with reference cell measures.
pub fn error_vs_reference(coarse: &DistributionField, reference: &DistributionField) -> Result<f64> {
    let cg = coarse.grid();
    let rg = reference.grid();
    check_nested(cg, rg)?;
    let cells: Vec<(usize, f64)> = (0..rg.nx).map(|i| cg.locate_x(rg.x(i))).collect();
    let per_col: Vec<f64> = (0..rg.velocity_count())
        .into_par_iter()
        .map(|col| {
            let v = rg.v_col(col);
            let w = (1.0 + v.abs()).powf(ERROR_WEIGHT);
            let fine = reference.column(col);
            let sum: f64 = match cg.velocity_index(v) {
                Some(j) => {
                    let src = coarse.column((j + cg.nv as i64) as usize);
                    fine.iter()
                        .zip(&cells)
                        .map(|(r, &(s, a))| (crate::field::lerp(src, s, a) - r).abs())
                        .sum()
                }
                None => fine.iter().map(|r| r.abs()).sum(),
            };
            sum * w
        })
        .collect();
    Ok(per_col.iter().sum::<f64>() * rg.dx * rg.dv)
}

/// Least-squares slope of `ln(error)` against `ln(dt)`. `NaN` with fewer
/// than two points or any non-positive entry.
pub fn fit_rate(dts: &[f64], errors: &[f64]) -> f64 {
    if dts.len() != errors.len() || dts.len() < 2 || dts.iter().chain(errors).any(|&v| !(v > 0.0)) {
        return f64::NAN;
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Exponent in `dx = dv ~ dt^(1+m)`.
    pub m: f64,
    pub levels: usize,
    /// Reference refinement beyond the finest level.
    pub refine: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            m: 1.0,
            levels: 4,
            refine: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub dt: f64,
    pub dx: f64,
    pub dv: f64,
    pub vmax: f64,
    pub error_l1_2: f64,
}

/// Stability and positivity record of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub nx: usize,
    pub nv: usize,
    pub nt: usize,
    /// `sup_n N_q(f^n) / N_q(f^0)`.
    pub max_nq_ratio: f64,
    pub initial_min_rho: f64,
    pub initial_min_temp: f64,
    /// Minima over all steps after the initial one.
    pub min_rho: f64,
    pub min_temp: f64,
    pub final_min_rho: f64,
    pub final_min_temp: f64,
    pub mesh: MeshValidity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub levels: Vec<LevelResult>,
    pub fitted_rate: f64,
    pub scaling_exponent: f64,
    /// Per-level runs (same order as `levels`); not serialized.
    #[serde(skip)]
    pub runs: Vec<RunSummary>,
    #[serde(skip)]
    pub reference: Option<RunSummary>,
    /// Levels dropped as inadmissible, with the reason.
    #[serde(skip)]
    pub skipped: Vec<String>,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `level,dt,dx,dv,vmax,error`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "dt", "dx", "dv", "vmax", "error"])?;
        for (k, l) in self.levels.iter().enumerate() {
            w.write_record([
                k.to_string(),
                l.dt.to_string(),
                l.dx.to_string(),
                l.dv.to_string(),
                l.vmax.to_string(),
                l.error_l1_2.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<LevelResult>> {
        #[derive(Deserialize)]
        struct Row {
            #[allow(dead_code)]
            level: usize,
            dt: f64,
            dx: f64,
            dv: f64,
            vmax: f64,
            error: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = vec![];
        for row in rdr.deserialize() {
            let r: Row = row?;
            out.push(LevelResult {
                dt: r.dt,
                dx: r.dx,
                dv: r.dv,
                vmax: r.vmax,
                error_l1_2: r.error,
            });
        }
        Ok(out)
    }
}

/// Runs `f0` to completion, recording stability and positivity figures.
pub fn summarized_run(f0: &dyn InitialData, grid: &GridSpec) -> Result<(DistributionField, RunSummary)> {
    let initial = crate::scheme::StepReport::snapshot(0, &init_field(f0, grid)?);
    let (field, reports) = run(f0, grid)?;
    let nq0 = initial.nq_norm;
    let last = reports.last().copied().unwrap_or(initial);
    let summary = RunSummary {
        nx: grid.nx,
        nv: grid.nv,
        nt: grid.nt,
        max_nq_ratio: reports.iter().map(|r| r.nq_norm / nq0).fold(1.0, f64::max),
        initial_min_rho: initial.min_rho,
        initial_min_temp: initial.min_temp,
        min_rho: reports.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min),
        min_temp: reports.iter().map(|r| r.min_temp).fold(f64::INFINITY, f64::min),
        final_min_rho: last.min_rho,
        final_min_temp: last.min_temp,
        mesh: validate_mesh(grid, f0),
    };
    Ok((field, summary))
}

fn count_for(base: usize, scale: f64) -> usize {
    let target = base as f64 * scale;
    let r = target.round();
    if (target - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        target.ceil() as usize
    }
}

/// Smallest divisor of `n` that is at least `target`.
fn divisor_at_least(n: usize, target: usize) -> usize {
    (target.max(1)..=n).find(|d| n % d == 0).unwrap_or(n)
}

/// Refinement study along `dt_k = dt_0 / 2^k`, `dx_k = dx_0 (dt_k/dt_0)^(1+m)`
/// and likewise `dv_k`, the base grid supplying level 0.
///
/// Counts are rounded up to the nearest divisors of the common reference
/// lattice so every level nests in it; the actual spacings are recorded.
/// A level whose rounding more than doubles its count, or that fails to
/// build, is skipped.
pub fn scaling_study(f0: &dyn InitialData, base: &GridSpec, opts: &StudyOptions) -> Result<ConvergenceReport> {
    if opts.levels < 3 {
        return Err(Error::TooFewLevels { got: opts.levels });
    }
    if !(opts.m.is_finite() && opts.m >= 0.0) {
        return Err(Error::Config(format!("scaling exponent m must be finite and >= 0, got {}", opts.m)));
    }
    let last = opts.levels - 1;
    let space_scale = |k: usize| 2f64.powf(k as f64 * (1.0 + opts.m));
    let finest_nx = count_for(base.nx, space_scale(last));
    let finest_nv = count_for(base.nv, space_scale(last));
    let finest_nt = base.nt << last;
    let finest = build_grid(finest_nx, finest_nv, finest_nt, base.vmax, base.t_final, base.kappa, base.q)?;
    let ref_grid = finest.refined(opts.refine)?;

    let mut grids = vec![];
    let mut skipped = vec![];
    for k in 0..opts.levels {
        let tx = count_for(base.nx, space_scale(k));
        let tv = count_for(base.nv, space_scale(k));
        let nx = divisor_at_least(ref_grid.nx, tx);
        let nv = divisor_at_least(ref_grid.nv, tv);
        if nx > 2 * tx || nv > 2 * tv {
            skipped.push(format!(
                "level {k}: no admissible lattice near {tx} x {tv} (nearest nested is {nx} x {nv})"
            ));
            continue;
        }
        match build_grid(nx, nv, base.nt << k, base.vmax, base.t_final, base.kappa, base.q) {
            Ok(g) => grids.push(g),
            Err(e) => skipped.push(format!("level {k}: {e}")),
        }
    }
    if grids.len() < 3 {
        return Err(Error::TooFewLevels { got: grids.len() });
    }

    let (reference, ref_summary) = summarized_run(f0, &ref_grid)?;
    let mut levels = vec![];
    let mut runs = vec![];
    for g in &grids {
        let (field, summary) = summarized_run(f0, g)?;
        levels.push(LevelResult {
            dt: g.dt,
            dx: g.dx,
            dv: g.dv,
            vmax: g.vmax,
            error_l1_2: error_vs_reference(&field, &reference)?,
        });
        runs.push(summary);
    }
    let dts: Vec<f64> = levels.iter().map(|l| l.dt).collect();
    let errs: Vec<f64> = levels.iter().map(|l| l.error_l1_2).collect();
    Ok(ConvergenceReport {
        fitted_rate: fit_rate(&dts, &errs),
        scaling_exponent: opts.m,
        levels,
        runs,
        reference: Some(ref_summary),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cfl_target: f64,
    pub cfl_actual: f64,
    pub dt: f64,
    pub nt: usize,
    /// `N_q(f^{N_t}) / N_q(f^0)`.
    pub nq_ratio: f64,
    /// `sup_n N_q(f^n) / N_q(f^0)`.
    pub max_nq_ratio: f64,
    pub blow_up: bool,
    /// Why the run did not complete, if it did not.
    pub note: String,
}

/// Runs `f0` at each target Courant number `dt vmax / dx`, holding `dx`, `dv`
/// and `t_final`; `dt` is rounded so that `nt dt = t_final`.
pub fn cfl_sweep(f0: &dyn InitialData, grid: &GridSpec, cfl_values: &[f64]) -> Vec<SweepRow> {
    cfl_values
        .iter()
        .map(|&cfl| {
            let mut row = SweepRow {
                cfl_target: cfl,
                cfl_actual: f64::NAN,
                dt: f64::NAN,
                nt: 0,
                nq_ratio: f64::NAN,
                max_nq_ratio: f64::NAN,
                blow_up: false,
                note: String::new(),
            };
            if !(cfl.is_finite() && cfl > 0.0) {
                row.note = format!("invalid CFL value {cfl}");
                return row;
            }
            let dt = cfl * grid.dx / grid.vmax;
            let nt = ((grid.t_final / dt).round() as usize).max(1);
            let g = match grid.with_time_steps(nt) {
                Ok(g) => g,
                Err(e) => {
                    row.note = e.to_string();
                    return row;
                }
            };
            row.dt = g.dt;
            row.nt = nt;
            row.cfl_actual = g.cfl();
            let nq0 = match init_field(f0, &g) {
                Ok(f) => f.n_norms(g.q).nq(),
                Err(e) => {
                    row.note = e.to_string();
                    return row;
                }
            };
            match run(f0, &g) {
                Ok((_, reports)) => {
                    let last = reports.last().map_or(nq0, |r| r.nq_norm);
                    row.nq_ratio = last / nq0;
                    row.max_nq_ratio = reports.iter().map(|r| r.nq_norm / nq0).fold(1.0, f64::max);
                }
                Err(e) => {
                    row.blow_up = e.is_numerical_abort();
                    row.note = e.to_string();
                }
            }
            row
        })
        .collect()
}

/// Writes `cfl,cfl_actual,dt,nt,nq_ratio,max_nq_ratio,blow_up,note`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cfl", "cfl_actual", "dt", "nt", "nq_ratio", "max_nq_ratio", "blow_up", "note"])?;
    for r in rows {
        w.write_record([
            r.cfl_target.to_string(),
            r.cfl_actual.to_string(),
            r.dt.to_string(),
            r.nt.to_string(),
            r.nq_ratio.to_string(),
            r.max_nq_ratio.to_string(),
            r.blow_up.to_string(),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = vec![];
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |c: usize, e: String| Error::Parse {
            what: "CFL sweep CSV",
            reason: format!("column {c}: {e}"),
        };
        let num = |c: usize| -> Result<f64> { rec[c].parse().map_err(|e: std::num::ParseFloatError| bad(c, e.to_string())) };
        out.push(SweepRow {
            cfl_target: num(0)?,
            cfl_actual: num(1)?,
            dt: num(2)?,
            nt: rec[3].parse().map_err(|e: std::num::ParseIntError| bad(3, e.to_string()))?,
            nq_ratio: num(4)?,
            max_nq_ratio: num(5)?,
            blow_up: rec[6].parse().map_err(|e: std::str::ParseBoolError| bad(6, e.to_string()))?,
            note: rec[7].to_string(),
        });
    }
    Ok(out)
}
