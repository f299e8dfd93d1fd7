//! Runtime monitors: conservation, entropy, stability and macroscopic bounds.
//!
//! None of the analytic constants behind these quantities are known, so the
//! monitors report values and flags; callers decide what is acceptable.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_same_lattice, weighted_l1_distance, DistributionField};
use crate::grid::GridSpec;
use crate::physics::{compute_moments, discrete_maxwellian, CellFlag, MomentField};
use crate::scheme::{run_with, InitialData, StepReport};

/// Extremes of the macroscopic fields of one snapshot, plus the four
/// moment-bound ratios (see [`moment_ratios`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub min_rho: f64,
    pub min_temp: f64,
    pub max_rho: f64,
    pub max_abs_u: f64,
    pub max_temp: f64,
    pub ratios: [f64; 4],
    pub degenerate_cells: usize,
}

impl MomentSummary {
    pub fn of(field: &DistributionField) -> Self {
        let m = compute_moments(field);
        let fold = |xs: &[f64], init: f64, op: fn(f64, f64) -> f64| xs.iter().copied().fold(init, op);
        Self {
            min_rho: fold(&m.rho, f64::INFINITY, f64::min),
            min_temp: fold(&m.temp, f64::INFINITY, f64::min),
            max_rho: fold(&m.rho, 0.0, f64::max),
            max_abs_u: m.u.iter().fold(0.0_f64, |a, u| a.max(u.abs())),
            max_temp: fold(&m.temp, 0.0, f64::max),
            ratios: moment_ratios(field, &m),
            degenerate_cells: m.degenerate_cells(),
        }
    }
}

/// Largest cell values of the moment-bound ratios, specialised to one
/// velocity dimension with `q = grid.q`:
///
/// 0. `rho / T^(1/2) / N_0(f)`
/// 1. `rho (T + U^2)^((q-1)/2) / N_q(f)`
/// 2. `rho (T + U^2)^(-1/2) / N_0(f)` (the sub-dimensional weight form, at weight 0)
/// 3. `rho |U|^(1+q) / ((T + U^2) T)^(1/2) / N_q(f)`
///
/// Each is bounded by a constant times the norm for smooth fields; here
/// they are just measured. Degenerate cells are skipped.
pub fn moment_ratios(field: &DistributionField, m: &MomentField) -> [f64; 4] {
    let q = field.grid().q;
    let n0 = field.n_norms(0.0).nq();
    let nq = field.n_norms(q).nq();
    let mut out = [0.0_f64; 4];
    if !(n0 > 0.0 && nq > 0.0) {
        return out;
    }
    for i in 0..m.len() {
        if m.flags[i] != CellFlag::Regular {
            continue;
        }
        let (rho, u, t) = (m.rho[i], m.u[i], m.temp[i]);
        let e = t + u * u;
        let r = [
            rho / t.sqrt() / n0,
            rho * e.powf((q - 1.0) / 2.0) / nq,
            rho / e.sqrt() / n0,
            rho * u.abs().powf(1.0 + q) / (e * t).sqrt() / nq,
        ];
        for k in 0..4 {
            out[k] = out[k].max(r[k]);
        }
    }
    out
}

/// Everything recorded along a run, indexed by time level `n = 0..=nt`
/// (except `per_step`, which starts at `n = 1`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsTrace {
    pub dt: f64,
    pub initial: Option<StepReport>,
    pub per_step: Vec<StepReport>,
    pub entropy: Vec<f64>,
    pub moments: Vec<MomentSummary>,
    pub lipschitz_samples: Vec<(f64, f64)>,
}

impl DiagnosticsTrace {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    /// Records entropy and moment extremes of `f^n`; `n` must be the next level.
    pub fn record(&mut self, n: usize, field: &DistributionField) {
        assert_eq!(n, self.entropy.len(), "trace levels must be recorded in order");
        if n == 0 {
            self.initial = Some(StepReport::snapshot(0, field));
        }
        self.entropy.push(entropy_functional(field));
        self.moments.push(MomentSummary::of(field));
    }

    /// Step reports for every recorded level, the initial snapshot first.
    pub fn levels(&self) -> impl Iterator<Item = &StepReport> {
        self.initial.iter().chain(self.per_step.iter())
    }

    /// Writes `n,t,mass,momentum,energy,entropy,min_rho,min_temp,nq_norm`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "n", "t", "mass", "momentum", "energy", "entropy", "min_rho", "min_temp", "nq_norm",
        ])?;
        for (k, r) in self.levels().enumerate() {
            let entropy = self.entropy.get(k).copied().unwrap_or(f64::NAN);
            w.write_record([
                r.step_index.to_string(),
                (r.step_index as f64 * self.dt).to_string(),
                r.totals[0].to_string(),
                r.totals[1].to_string(),
                r.totals[2].to_string(),
                entropy.to_string(),
                r.min_rho.to_string(),
                r.min_temp.to_string(),
                r.nq_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row of `diagnostics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    pub entropy: f64,
    pub min_rho: f64,
    pub min_temp: f64,
    pub nq_norm: f64,
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Runs the scheme and records a full trace.
pub fn trace_run(f0: &dyn InitialData, grid: &GridSpec) -> Result<(DistributionField, DiagnosticsTrace)> {
    let mut trace = DiagnosticsTrace::new(grid.dt);
    let (field, reports) = run_with(f0, grid, |n, f| trace.record(n, f))?;
    trace.per_step = reports;
    Ok((field, trace))
}

/// Changes of total mass, momentum and energy from `before` to `after`.
pub fn conservation_defect(before: &DistributionField, after: &DistributionField) -> Result<(f64, f64, f64)> {
    check_same_lattice(before.grid(), after.grid())?;
    let a = before.totals();
    let b = after.totals();
    Ok((b[0] - a[0], b[1] - a[1], b[2] - a[2]))
}

/// `sum f log f dx dv` with `0 log 0 = 0`.
pub fn entropy_functional(field: &DistributionField) -> f64 {
    let g = field.grid();
    let per_col: Vec<f64> = field
        .columns()
        .map(|c| c.iter().filter(|&&f| f > 0.0).map(|&f| f * f.ln()).sum())
        .collect();
    per_col.iter().sum::<f64>() * g.dx * g.dv
}

/// `(|f - g|_{L^1_2}, |M(f) - M(g)|_{L^1_2})` with `M` the discrete local
/// Maxwellian of each field.
pub fn maxwellian_lipschitz_probe(f: &DistributionField, g: &DistributionField) -> Result<(f64, f64)> {
    check_same_lattice(f.grid(), g.grid())?;
    let mf = compute_moments(f);
    let mg = compute_moments(g);
    for m in [&mf, &mg] {
        if let Some(cell) = m.flags.iter().position(|fl| fl.is_degenerate()) {
            return Err(Error::VacuumProbe { cell });
        }
    }
    let input = weighted_l1_distance(f, g, 2.0)?;
    let output = weighted_l1_distance(
        &discrete_maxwellian(&mf, f.grid()),
        &discrete_maxwellian(&mg, g.grid()),
        2.0,
    )?;
    Ok((input, output))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub min_rho: f64,
    pub min_temp: f64,
    pub max_rho: f64,
    pub max_abs_u: f64,
    pub max_temp: f64,
    /// Moment-bound ratios per recorded level.
    pub ratios: Vec<[f64; 4]>,
    pub max_ratios: [f64; 4],
    /// Final-level minimum over initial minimum, for density and temperature.
    pub final_min_rho_ratio: f64,
    pub final_min_temp_ratio: f64,
    /// First level with a vacuum/cold cell or a non-positive minimum.
    pub zero_crossing: Option<usize>,
}

impl BoundsReport {
    pub fn zero_crossing_flagged(&self) -> bool {
        self.zero_crossing.is_some()
    }
}

/// Summarises the macroscopic bounds seen along a trace.
pub fn bounds_monitor(trace: &DiagnosticsTrace, grid: &GridSpec) -> BoundsReport {
    debug_assert!(trace.dt == 0.0 || trace.dt == grid.dt);
    let s = &trace.moments;
    let min = |f: fn(&MomentSummary) -> f64| s.iter().map(f).fold(f64::INFINITY, f64::min);
    let max = |f: fn(&MomentSummary) -> f64| s.iter().map(f).fold(0.0, f64::max);
    let mut max_ratios = [0.0_f64; 4];
    for m in s {
        for k in 0..4 {
            max_ratios[k] = max_ratios[k].max(m.ratios[k]);
        }
    }
    let zero_crossing = s
        .iter()
        .position(|m| m.degenerate_cells > 0 || !(m.min_rho > 0.0) || !(m.min_temp > 0.0));
    let (first, last) = (s.first(), s.last());
    let ratio = |f: fn(&MomentSummary) -> f64| match (first, last) {
        (Some(a), Some(b)) if f(a) > 0.0 => f(b) / f(a),
        _ => f64::NAN,
    };
    BoundsReport {
        min_rho: min(|m| m.min_rho),
        min_temp: min(|m| m.min_temp),
        max_rho: max(|m| m.max_rho),
        max_abs_u: max(|m| m.max_abs_u),
        max_temp: max(|m| m.max_temp),
        ratios: s.iter().map(|m| m.ratios).collect(),
        max_ratios,
        final_min_rho_ratio: ratio(|m| m.min_rho),
        final_min_temp_ratio: ratio(|m| m.min_temp),
        zero_crossing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::physics::maxwellian_value;
    use crate::scheme::{init_field, reconstruct};
    use std::f64::consts::{E, PI};

    fn maxwell(x: f64, v: f64) -> f64 {
        let _ = x;
        maxwellian_value(1.0, 0.0, 1.0, v).unwrap()
    }

    #[test]
    fn defect_of_identical_fields_is_zero() {
        let g = build_grid(8, 8, 1, 4.0, 0.1, 1.0, 4.0).unwrap();
        let f = init_field(&maxwell, &g).unwrap();
        assert_eq!(conservation_defect(&f, &f).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn node_aligned_transport_conserves_exactly() {
        let g = build_grid(16, 6, 4, 6.0, 0.25, 1.0, 4.0).unwrap();
        let f = init_field(&|x: f64, v: f64| (1.0 + 0.5 * (2.0 * PI * x).sin()) * maxwell(x, v), &g).unwrap();
        let r = reconstruct(&f);
        // each column is cyclically permuted, so only summation order differs
        let (m, p, e) = conservation_defect(&f, &r).unwrap();
        let tol = 8.0 * f64::EPSILON;
        assert!(m.abs() <= tol && p.abs() <= tol && e.abs() <= tol, "{m} {p} {e}");
    }

    #[test]
    fn entropy_examples() {
        let g = build_grid(4, 3, 1, 3.0, 0.1, 1.0, 4.0).unwrap();
        assert_eq!(entropy_functional(&DistributionField::zeros(&g)), 0.0);
        let ones = DistributionField::from_fn(&g, |_, _| 1.0).unwrap();
        assert_eq!(entropy_functional(&ones), 0.0);
        let e = DistributionField::from_fn(&g, |_, _| E).unwrap();
        let expect = E * 7.0 * g.dv;
        assert!((entropy_functional(&e) - expect).abs() < 1e-14 * expect);
    }

    #[test]
    fn probe_examples() {
        let g = build_grid(8, 24, 1, 6.0, 0.1, 1.0, 4.0).unwrap();
        let f = init_field(&maxwell, &g).unwrap();
        assert_eq!(maxwellian_lipschitz_probe(&f, &f).unwrap(), (0.0, 0.0));

        let f2 = DistributionField::from_values(&g, f.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        let (din, dout) = maxwellian_lipschitz_probe(&f, &f2).unwrap();
        let mf = discrete_maxwellian(&compute_moments(&f), &g);
        let zero = DistributionField::zeros(&g);
        let expect = weighted_l1_distance(&mf, &zero, 2.0).unwrap() / weighted_l1_distance(&f, &zero, 2.0).unwrap();
        assert!((dout / din - expect).abs() < 1e-12 * expect);

        let vac = DistributionField::from_fn(&g, |i, j| if i == 3 { 0.0 } else { f.get(i, j) }).unwrap();
        assert!(matches!(
            maxwellian_lipschitz_probe(&f, &vac),
            Err(Error::VacuumProbe { cell: 3 })
        ));
    }

    #[test]
    fn equilibrium_run_stays_positive() {
        let g = build_grid(16, 24, 10, 6.0, 1.0, 1.0, 4.0).unwrap();
        let (_, trace) = trace_run(&maxwell, &g).unwrap();
        let b = bounds_monitor(&trace, &g);
        assert!(b.min_rho > 0.0 && b.min_temp > 0.0);
        assert!(!b.zero_crossing_flagged());
        assert_eq!(trace.entropy.len(), 11);
        assert_eq!(b.ratios.len(), 11);
        assert!(b.max_ratios.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn vacuum_cell_raises_flag() {
        let g = build_grid(8, 8, 1, 4.0, 0.1, 1.0, 4.0).unwrap();
        let f = DistributionField::from_fn(&g, |i, j| if i == 5 { 0.0 } else { maxwell(0.0, g.v(j)) }).unwrap();
        let mut trace = DiagnosticsTrace::new(g.dt);
        trace.record(0, &f);
        let b = bounds_monitor(&trace, &g);
        assert_eq!(b.zero_crossing, Some(0));
        assert_eq!(b.min_rho, 0.0);
    }

    #[test]
    fn homogeneous_entropy_does_not_increase() {
        let g = build_grid(4, 48, 30, 8.0, 3.0, 0.5, 4.0).unwrap();
        let two_bumps = |_: f64, v: f64| {
            0.5 * maxwellian_value(1.0, 1.5, 0.5, v).unwrap() + 0.5 * maxwellian_value(1.0, -1.0, 0.8, v).unwrap()
        };
        let (_, trace) = trace_run(&two_bumps, &g).unwrap();
        let tol = 1e-10 * trace.entropy[0].abs();
        for w in trace.entropy.windows(2) {
            assert!(w[1] <= w[0] + tol, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let g = build_grid(8, 8, 3, 4.0, 0.3, 1.0, 4.0).unwrap();
        let (_, trace) = trace_run(&|x: f64, v: f64| (1.2 + (2.0 * PI * x).cos()) * maxwell(x, v), &g).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let rows = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, r) in rows.iter().zip(trace.levels()) {
            assert_eq!(row.n, r.step_index);
            assert_eq!(row.mass, r.totals[0]);
            assert_eq!(row.nq_norm, r.nq_norm);
        }
        assert_eq!(rows[3].entropy, trace.entropy[3]);
    }
}
