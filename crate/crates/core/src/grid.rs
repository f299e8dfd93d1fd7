//! Phase-space lattice on the unit periodic torus times a truncated velocity line.
//!
//! Spatial nodes are `x_i = i/nx` for `i = 0..nx`, velocity nodes are
//! `v_j = j*dv` for `j = -nv..=nv`. Spatial cells are the half-open intervals
//! `[x_i, x_{i+1})`; velocity cells are `[v_j - dv/2, v_j + dv/2)`, so the
//! representable velocity range is `[-vmax - dv/2, vmax + dv/2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell coordinates within this many ulps of an integer are treated as lying
/// on that integer. Keeps backtracked feet that land on a node (up to
/// round-off) exactly on the node.
const SNAP_ULPS: f64 = 8.0;

/// Discretization parameters of a run. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nv: usize,
    pub nt: usize,
    pub dx: f64,
    pub dv: f64,
    pub dt: f64,
    pub vmax: f64,
    pub t_final: f64,
    pub kappa: f64,
    pub q: f64,
}

/// Builds a grid and enforces the time-step bound `dt < max(1/2, kappa)`.
pub fn build_grid(
    nx: usize,
    nv: usize,
    nt: usize,
    vmax: f64,
    t_final: f64,
    kappa: f64,
    q: f64,
) -> Result<GridSpec> {
    let grid = GridSpec::from_counts(nx, nv, nt, vmax, t_final, kappa, q)?;
    grid.check_time_step()?;
    Ok(grid)
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidGrid {
            name,
            reason: format!("must be positive and finite, got {value}"),
        })
    }
}

fn at_least_one(name: &'static str, value: usize) -> Result<()> {
    if value >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidGrid {
            name,
            reason: "must be at least 1".into(),
        })
    }
}

impl GridSpec {
    /// Derives the spacings from node counts without checking the time-step
    /// bound. Used where that bound is only reported on (mesh validation).
    pub fn from_counts(
        nx: usize,
        nv: usize,
        nt: usize,
        vmax: f64,
        t_final: f64,
        kappa: f64,
        q: f64,
    ) -> Result<Self> {
        at_least_one("nx", nx)?;
        at_least_one("nv", nv)?;
        at_least_one("nt", nt)?;
        positive("vmax", vmax)?;
        positive("t_final", t_final)?;
        positive("kappa", kappa)?;
        if !(q.is_finite() && q > 3.0) {
            return Err(Error::InvalidGrid {
                name: "q",
                reason: format!("weight exponent must be finite and exceed 3, got {q}"),
            });
        }
        Ok(Self {
            nx,
            nv,
            nt,
            dx: 1.0 / nx as f64,
            dv: vmax / nv as f64,
            dt: t_final / nt as f64,
            vmax,
            t_final,
            kappa,
            q,
        })
    }

    pub fn time_step_bound(&self) -> f64 {
        self.kappa.max(0.5)
    }

    pub fn check_time_step(&self) -> Result<()> {
        let bound = self.time_step_bound();
        if self.dt < bound {
            Ok(())
        } else {
            Err(Error::TimeStepBound { dt: self.dt, bound })
        }
    }

    /// Same lattice and physics with a different number of time steps.
    pub fn with_time_steps(&self, nt: usize) -> Result<Self> {
        build_grid(self.nx, self.nv, nt, self.vmax, self.t_final, self.kappa, self.q)
    }

    /// Multiplies `nx`, `nv` and `nt` by `factor`; `vmax`, `t_final`, `kappa` are kept.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        build_grid(
            self.nx * factor,
            self.nv * factor,
            self.nt * factor,
            self.vmax,
            self.t_final,
            self.kappa,
            self.q,
        )
    }

    /// Number of velocity nodes, `2*nv + 1`.
    pub fn velocity_count(&self) -> usize {
        2 * self.nv + 1
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.velocity_count()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    /// Velocity of node `j` (`-nv <= j <= nv`); `v(nv) == vmax` exactly.
    pub fn v(&self, j: i64) -> f64 {
        j as f64 * self.vmax / self.nv as f64
    }

    /// Velocity of the node stored at column `col = j + nv`.
    pub fn v_col(&self, col: usize) -> f64 {
        self.v(col as i64 - self.nv as i64)
    }

    pub fn velocities(&self) -> Vec<f64> {
        (0..self.velocity_count()).map(|c| self.v_col(c)).collect()
    }

    /// `(1 + |v_j|)^q` for every velocity column.
    pub fn velocity_weights(&self, q: f64) -> Vec<f64> {
        self.velocities()
            .into_iter()
            .map(|v| (1.0 + v.abs()).powf(q))
            .collect()
    }

    /// Keep and relaxation weights `kappa/(kappa+dt)` and `dt/(kappa+dt)`.
    pub fn relaxation_weights(&self) -> (f64, f64) {
        let denom = self.kappa + self.dt;
        (self.kappa / denom, self.dt / denom)
    }

    /// Courant number `dt * vmax / dx`.
    pub fn cfl(&self) -> f64 {
        self.dt * self.vmax * self.nx as f64
    }

    /// Lattice identity: same spatial and velocity nodes.
    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.nv == other.nv && self.vmax == other.vmax
    }

    /// Index of the velocity cell containing `v`, or `None` outside the
    /// truncated range.
    pub fn velocity_index(&self, v: f64) -> Option<i64> {
        if !v.is_finite() {
            return None;
        }
        let t = snap(v / self.dv + 0.5);
        let j = t.floor();
        if j.abs() > self.nv as f64 {
            None
        } else {
            Some(j as i64)
        }
    }

    /// Projection `C2`: the cell-centre velocity `v_j` of the cell containing
    /// `v`, or `None` for velocities beyond the outermost half-cells.
    pub fn c2_project(&self, v: f64) -> Option<f64> {
        self.velocity_index(v).map(|j| self.v(j))
    }

    /// `s` such that `x_s <= wrap_periodic(x) < x_{s+1}`.
    pub fn spatial_cell_index(&self, x: f64) -> usize {
        self.locate_x(x).0
    }

    /// Cell index and interpolation weight `a = (x - x_s)/dx` in `[0, 1)`.
    pub fn locate_x(&self, x: f64) -> (usize, f64) {
        let xi = snap(wrap_periodic(x) * self.nx as f64);
        let s = xi.floor();
        let a = xi - s;
        let s = s as usize;
        if s >= self.nx {
            (s - self.nx, a)
        } else {
            (s, a)
        }
    }

    /// Per-column foot of the characteristic in index units: node `i` of
    /// column `col` reads cells `i + shift` and `i + shift + 1` (periodic)
    /// with weight `a` on the latter.
    pub fn backtrack_column(&self, col: usize) -> (usize, f64) {
        let sigma = snap(-self.dt * self.v_col(col) * self.nx as f64);
        let k = sigma.floor();
        let a = sigma - k;
        let shift = (k as i64).rem_euclid(self.nx as i64) as usize;
        (shift, a)
    }
}

/// Maps `x` onto the unit torus `[0, 1)`.
pub fn wrap_periodic(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= SNAP_ULPS * f64::EPSILON * r.abs().max(1.0) {
        r
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * b.abs().max(1.0)
    }

    #[test]
    fn spacings_follow_counts() {
        let g = build_grid(10, 5, 4, 1.0, 0.4, 1.0, 4.0).unwrap();
        assert!(close(g.dx, 0.1));
        assert!(close(g.dv, 0.2));
        assert!(close(g.dt, 0.1));

        let g = build_grid(1, 1, 1, 1.0, 0.1, 1.0, 4.0).unwrap();
        assert_eq!(g.dx, 1.0);
        assert_eq!(g.dv, 1.0);
        assert!(close(g.dt, 0.1));
    }

    #[test]
    fn rejects_large_time_step() {
        let err = build_grid(10, 5, 1, 1.0, 2.0, 1.0, 4.0).unwrap_err();
        assert!(matches!(err, Error::TimeStepBound { .. }));
        assert!(err.to_string().contains("time-step bound violated"));
        // lenient constructor still accepts it
        assert!(GridSpec::from_counts(10, 5, 1, 1.0, 2.0, 1.0, 4.0).is_ok());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_grid(0, 5, 1, 1.0, 0.1, 1.0, 4.0).is_err());
        assert!(build_grid(4, 5, 1, -1.0, 0.1, 1.0, 4.0).is_err());
        assert!(build_grid(4, 5, 1, 1.0, 0.1, 0.0, 4.0).is_err());
        assert!(build_grid(4, 5, 1, 1.0, 0.1, 1.0, 3.0).is_err());
        assert!(build_grid(4, 5, 1, f64::NAN, 0.1, 1.0, 4.0).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_periodic(0.3), 0.3);
        assert!(close(wrap_periodic(1.7), 0.7));
        assert_eq!(wrap_periodic(-0.25), 0.75);
        assert_eq!(wrap_periodic(-1e-300), 0.0);
        assert_eq!(wrap_periodic(1.0), 0.0);
    }

    #[test]
    fn c2_examples() {
        let g = build_grid(10, 5, 4, 1.0, 0.4, 1.0, 4.0).unwrap();
        assert_eq!(g.c2_project(0.0), Some(0.0));
        assert_eq!(g.velocity_index(0.29), Some(1));
        assert_eq!(g.velocity_index(0.3), Some(2));
        assert!(close(g.c2_project(0.3).unwrap(), 0.4));
        // outermost half-cells
        assert_eq!(g.velocity_index(1.09), Some(5));
        assert_eq!(g.velocity_index(1.1), None);
        assert_eq!(g.velocity_index(-1.1), Some(-5));
        assert_eq!(g.velocity_index(-1.11), None);
        assert_eq!(g.velocity_index(f64::INFINITY), None);
    }

    #[test]
    fn spatial_index_examples() {
        let g = build_grid(10, 5, 4, 1.0, 0.4, 1.0, 4.0).unwrap();
        assert_eq!(g.spatial_cell_index(0.25), 2);
        assert_eq!(g.spatial_cell_index(0.0), 0);
        assert_eq!(g.spatial_cell_index(-0.05), 9);
        for i in 0..10 {
            assert_eq!(g.locate_x(g.x(i)), (i, 0.0));
        }
    }

    #[test]
    fn backtrack_on_nodes_is_integral() {
        // dt * dv / dx = 1: every column shifts by whole cells
        let g = build_grid(16, 6, 4, 6.0, 0.25, 1.0, 4.0).unwrap();
        for col in 0..g.velocity_count() {
            let (_, a) = g.backtrack_column(col);
            assert_eq!(a, 0.0);
        }
        let (shift, a) = g.backtrack_column(g.nv + 1);
        assert_eq!((shift, a), (15, 0.0));
    }
}
