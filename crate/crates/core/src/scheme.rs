//! The semi-Lagrangian BGK time stepper.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{lerp, DistributionField};
use crate::grid::GridSpec;
use crate::physics::{compute_moments, Maxwellian, MomentField};

/// Runs abort once `N_q(f^n)` exceeds this multiple of `N_q(f^0)`.
pub const BLOW_UP_FACTOR: f64 = 1e12;

/// Initial datum `f0(x, v) >= 0` on the torus times the velocity line.
pub trait InitialData: Sync {
    fn value(&self, x: f64, v: f64) -> f64;
}

impl<F> InitialData for F
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    fn value(&self, x: f64, v: f64) -> f64 {
        self(x, v)
    }
}

/// Per-step record of conservation, positivity and stability quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step_index: usize,
    /// Change of total mass, momentum and energy over the step.
    pub conservation_defect: [f64; 3],
    /// Total mass, momentum and energy after the step.
    pub totals: [f64; 3],
    pub min_rho: f64,
    pub min_temp: f64,
    pub nq_norm: f64,
    /// Cells whose moments were vacuum or cold after the step.
    pub degenerate_cells: usize,
}

impl StepReport {
    /// Record for an arbitrary field, with zero defect.
    pub fn snapshot(step_index: usize, field: &DistributionField) -> Self {
        let moments = compute_moments(field);
        let (min_rho, min_temp) = minima(&moments);
        Self {
            step_index,
            conservation_defect: [0.0; 3],
            totals: field.totals(),
            min_rho,
            min_temp,
            nq_norm: field.n_norms(field.grid().q).nq(),
            degenerate_cells: moments.degenerate_cells(),
        }
    }
}

fn minima(m: &MomentField) -> (f64, f64) {
    let min_rho = m.rho.iter().copied().fold(f64::INFINITY, f64::min);
    let min_temp = m.temp.iter().copied().fold(f64::INFINITY, f64::min);
    (min_rho, min_temp)
}

/// Linear interpolation at the feet of the backward characteristics
/// `x_i - dt v_j` (periodic in `x`).
pub fn reconstruct(field: &DistributionField) -> DistributionField {
    let grid = *field.grid();
    let nx = grid.nx;
    let mut out = vec![0.0; grid.node_count()];
    out.par_chunks_exact_mut(nx)
        .enumerate()
        .for_each(|(col, dst)| {
            let src = field.column(col);
            let (shift, a) = grid.backtrack_column(col);
            let mut s = shift;
            for d in dst.iter_mut() {
                *d = lerp(src, s, a);
                s += 1;
                if s == nx {
                    s = 0;
                }
            }
        });
    DistributionField::from_parts(grid, out)
}

/// One step `f^{n+1} = kappa/(kappa+dt) f~ + dt/(kappa+dt) M(f~)`, with the
/// moments taken from the reconstructed field `f~`.
pub fn step(field: &DistributionField) -> (DistributionField, StepReport) {
    let before = field.totals();
    advance(field, 1, before)
}

fn advance(field: &DistributionField, step_index: usize, before: [f64; 3]) -> (DistributionField, StepReport) {
    let grid = *field.grid();
    let tilde = reconstruct(field);
    let moments = compute_moments(&tilde);
    let next = relax(tilde, &moments);

    let after_moments = compute_moments(&next);
    let (min_rho, min_temp) = minima(&after_moments);
    let totals = next.totals();
    let report = StepReport {
        step_index,
        conservation_defect: [0, 1, 2].map(|k| totals[k] - before[k]),
        totals,
        min_rho,
        min_temp,
        nq_norm: next.n_norms(grid.q).nq(),
        degenerate_cells: after_moments.degenerate_cells(),
    };
    (next, report)
}

/// Convex combination of `tilde` with its local Maxwellian, in place.
fn relax(tilde: DistributionField, moments: &MomentField) -> DistributionField {
    let grid = *tilde.grid();
    let (keep, relax) = grid.relaxation_weights();
    let cells: Vec<Option<Maxwellian>> = (0..grid.nx)
        .map(|i| Maxwellian::for_cell(&moments.cell(i)))
        .collect();
    let mut values = tilde.into_values();
    values
        .par_chunks_exact_mut(grid.nx)
        .enumerate()
        .for_each(|(col, c)| {
            let v = grid.v_col(col);
            for (f, m) in c.iter_mut().zip(&cells) {
                let target = m.map_or(0.0, |m| m.at(v));
                *f = keep * *f + relax * target;
            }
        });
    DistributionField::from_parts(grid, values)
}

/// Samples `f0` at the lattice nodes.
pub fn init_field(f0: &dyn InitialData, grid: &GridSpec) -> Result<DistributionField> {
    let nv = grid.nv as i64;
    let mut values = Vec::with_capacity(grid.node_count());
    for col in 0..grid.velocity_count() {
        let j = col as i64 - nv;
        let v = grid.v(j);
        for i in 0..grid.nx {
            let x = grid.x(i);
            let value = f0.value(x, v);
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidInitialCondition { i, j, x, v, value });
            }
            values.push(value);
        }
    }
    Ok(DistributionField::from_parts(*grid, values))
}

/// Applies `nt` steps to `init_field(f0)`.
pub fn run(f0: &dyn InitialData, grid: &GridSpec) -> Result<(DistributionField, Vec<StepReport>)> {
    run_with(f0, grid, |_, _| {})
}

/// Like [`run`], calling `observe(n, f^n)` for `n = 0..=nt`.
pub fn run_with(
    f0: &dyn InitialData,
    grid: &GridSpec,
    observe: impl FnMut(usize, &DistributionField),
) -> Result<(DistributionField, Vec<StepReport>)> {
    let initial = init_field(f0, grid)?;
    evolve(initial, observe)
}

/// Time-steps an existing field `nt` times (its grid's `nt`).
pub fn evolve(
    initial: DistributionField,
    mut observe: impl FnMut(usize, &DistributionField),
) -> Result<(DistributionField, Vec<StepReport>)> {
    let grid = *initial.grid();
    observe(0, &initial);
    if grid.nt == 0 {
        return Ok((initial, vec![]));
    }
    let nq0 = initial.n_norms(grid.q).nq();
    if !(nq0 > 0.0) {
        return Err(Error::BlowUp {
            step: 0,
            reason: "initial data vanishes identically (vacuum); the growth guard N_q(f^n)/N_q(f^0) is undefined"
                .into(),
        });
    }
    let mut reports = Vec::with_capacity(grid.nt);
    let mut totals = initial.totals();
    let mut field = initial;
    for n in 1..=grid.nt {
        let (next, report) = advance(&field, n, totals);
        if !report.nq_norm.is_finite() || report.totals.iter().any(|t| !t.is_finite()) {
            return Err(Error::BlowUp {
                step: n,
                reason: "non-finite values".into(),
            });
        }
        if report.nq_norm > BLOW_UP_FACTOR * nq0 {
            return Err(Error::BlowUp {
                step: n,
                reason: format!("N_q grew from {nq0} to {}", report.nq_norm),
            });
        }
        observe(n, &next);
        totals = report.totals;
        reports.push(report);
        field = next;
    }
    Ok((field, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::physics::{discrete_maxwellian, maxwellian_value};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gauss(v: f64) -> f64 {
        (-v * v / 2.0).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn node_aligned_shift_is_a_permutation() {
        // dt * dv / dx = 1, so column j moves by exactly j cells
        let g = build_grid(16, 6, 4, 6.0, 0.25, 1.0, 4.0).unwrap();
        let f = DistributionField::from_fn(&g, |i, j| (i * 7 + (j + 6) as usize * 3) as f64).unwrap();
        let r = reconstruct(&f);
        for i in 0..16 {
            for j in -6..=6i64 {
                let src = (i as i64 - j).rem_euclid(16) as usize;
                assert_eq!(r.get(i, j), f.get(src, j));
            }
        }
    }

    #[test]
    fn half_cell_shift_averages_neighbours() {
        // dt * v_1 = dx / 2
        let g = build_grid(8, 2, 1, 2.0, 1.0 / 16.0, 1.0, 4.0).unwrap();
        let f = DistributionField::from_fn(&g, |i, j| 30.0 + i as f64 + 10.0 * j as f64).unwrap();
        let r = reconstruct(&f);
        for i in 0..8 {
            let im1 = (i + 7) % 8;
            assert_eq!(r.get(i, 1), (f.get(im1, 1) + f.get(i, 1)) / 2.0);
        }
    }

    #[test]
    fn equal_weights_when_kappa_equals_dt() {
        let g = build_grid(4, 2, 2, 1.0, 0.2, 0.1, 4.0).unwrap();
        assert_eq!(g.relaxation_weights(), (0.5, 0.5));
    }

    #[test]
    fn uniform_data_relaxes_without_transport() {
        let g = build_grid(8, 16, 3, 5.0, 0.3, 0.5, 4.0).unwrap();
        let f = DistributionField::from_fn(&g, |_, j| {
            let v = g.v(j);
            0.6 * gauss(v - 1.0) + 0.4 * gauss(v + 1.5)
        })
        .unwrap();
        assert_eq!(reconstruct(&f), f);
        let (next, _) = step(&f);
        let m = discrete_maxwellian(&compute_moments(&f), &g);
        let (keep, relax) = g.relaxation_weights();
        for (k, &v) in next.values().iter().enumerate() {
            assert_eq!(v, keep * f.values()[k] + relax * m.values()[k]);
        }
        // still x-uniform
        for j in -16..=16 {
            for i in 1..8 {
                assert_eq!(next.get(i, j), next.get(0, j));
            }
        }
    }

    #[test]
    fn init_samples_and_validates() {
        let g = build_grid(8, 8, 1, 4.0, 0.1, 1.0, 4.0).unwrap();
        let zero = init_field(&|_: f64, _: f64| 0.0, &g).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let m = init_field(&|_: f64, v: f64| maxwellian_value(1.0, 0.0, 1.0, v).unwrap(), &g).unwrap();
        assert_eq!(m.get(3, 2), maxwellian_value(1.0, 0.0, 1.0, g.v(2)).unwrap());

        let sine = |x: f64, v: f64| (1.0 + 0.5 * (2.0 * PI * x).sin()) * gauss(v);
        let s = init_field(&sine, &g).unwrap();
        assert!((s.get(2, 0) - 1.5 / (2.0 * PI).sqrt()).abs() < 1e-15);

        let err = init_field(&|x: f64, _: f64| x - 0.5, &g).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialCondition { i: 0, .. }));
        assert!(init_field(&|_: f64, _: f64| f64::NAN, &g).is_err());
    }

    #[test]
    fn zero_steps_returns_initial_field() {
        let mut g = build_grid(8, 8, 1, 4.0, 0.1, 1.0, 4.0).unwrap();
        g.nt = 0;
        let sine = |x: f64, v: f64| (1.0 + 0.5 * (2.0 * PI * x).sin()) * gauss(v);
        let (f, reports) = run(&sine, &g).unwrap();
        assert!(reports.is_empty());
        assert_eq!(f, init_field(&sine, &g).unwrap());
    }

    #[test]
    fn vacuum_initial_data_aborts() {
        let g = build_grid(8, 8, 2, 4.0, 0.1, 1.0, 4.0).unwrap();
        let err = run(&|_: f64, _: f64| 0.0, &g).unwrap_err();
        assert!(err.is_numerical_abort());
    }

    #[test]
    fn huge_kappa_reduces_to_transport() {
        let g = build_grid(32, 16, 5, 4.0, 0.37, 1e12, 4.0).unwrap();
        let sine = |x: f64, v: f64| (1.0 + 0.5 * (2.0 * PI * x).sin()) * gauss(v);
        let (f, _) = run(&sine, &g).unwrap();
        let mut t = init_field(&sine, &g).unwrap();
        for _ in 0..5 {
            t = reconstruct(&t);
        }
        let scale = t.n_norms(0.0).n0_q;
        for (a, b) in f.values().iter().zip(t.values()) {
            assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn large_cfl_stays_bounded() {
        // CFL = dt * vmax / dx = 0.05 * 6 * 64 = 19.2
        let g = build_grid(64, 32, 8, 6.0, 0.4, 0.1, 4.0).unwrap();
        assert!(g.cfl() > 10.0);
        let sine = |x: f64, v: f64| (1.0 + 0.5 * (2.0 * PI * x).sin()) * gauss(v);
        let (_, reports) = run(&sine, &g).unwrap();
        let nq0 = init_field(&sine, &g).unwrap().n_norms(4.0).nq();
        assert!(reports.iter().all(|r| r.nq_norm.is_finite() && r.nq_norm <= 3.0 * nq0));
    }

    fn arb_field() -> impl Strategy<Value = (GridSpec, Vec<f64>)> {
        (1usize..12, 1usize..6, 0.05..3.0f64, 0.01..2.0f64).prop_flat_map(|(nx, nv, vmax, dt)| {
            let g = build_grid(nx, nv, 1, vmax, dt, 10.0, 4.0).unwrap();
            (Just(g), prop::collection::vec(0.0..5.0f64, g.node_count()))
        })
    }

    proptest! {
        #[test]
        fn reconstruction_does_not_increase_nq((g, vals) in arb_field(), q in 0.0..6.0f64) {
            let f = DistributionField::from_values(&g, vals).unwrap();
            let r = reconstruct(&f);
            let before = f.n_norms(q);
            let after = r.n_norms(q);
            prop_assert!(after.n0_q <= before.n0_q * (1.0 + 1e-12));
            prop_assert!(after.n1_q <= before.n1_q * (1.0 + 1e-12) + 1e-300);
            prop_assert!(r.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn step_preserves_nonnegativity((g, vals) in arb_field()) {
            let f = DistributionField::from_values(&g, vals).unwrap();
            let (next, report) = step(&f);
            prop_assert!(next.values().iter().all(|&v| v >= 0.0 && v.is_finite()));
            prop_assert!(report.conservation_defect.iter().all(|d| d.is_finite()));
        }
    }
}
