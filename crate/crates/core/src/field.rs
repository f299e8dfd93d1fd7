//! Discrete distribution functions, the extension operator and weighted norms.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Relative size below which negative entries are treated as round-off.
const ROUNDOFF_NEGATIVE: f64 = 1e-12;

/// Nodal values `f_{i,j}` on the phase-space lattice.
///
/// Storage is velocity-major: column `col = j + nv` holds the `nx` spatial
/// values of velocity `v_j` contiguously, so transport along `x` streams
/// through memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    grid: GridSpec,
    values: Vec<f64>,
    clamped: usize,
}

/// Weighted norms of a field for a given exponent `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l1_q: f64,
    pub n0_q: f64,
    pub n1_q: f64,
    pub q: f64,
}

impl NormReport {
    /// `N_q = N^0_q + N^1_q`.
    pub fn nq(&self) -> f64 {
        self.n0_q + self.n1_q
    }
}

impl DistributionField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.node_count()],
            clamped: 0,
        }
    }

    /// Fills every node from `f(i, j)`; values are validated like `from_values`.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(usize, i64) -> f64) -> Result<Self> {
        let nv = grid.nv as i64;
        let mut values = Vec::with_capacity(grid.node_count());
        for col in 0..grid.velocity_count() {
            let j = col as i64 - nv;
            values.extend((0..grid.nx).map(|i| f(i, j)));
        }
        Self::from_values(grid, values)
    }

    /// Wraps velocity-major values. Non-finite entries are rejected; negative
    /// entries at round-off scale are clamped to zero and counted.
    pub fn from_values(grid: &GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidField(format!(
                "expected {} values for a {} x {} lattice, got {}",
                grid.node_count(),
                grid.nx,
                grid.velocity_count(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value {} at storage index {pos}",
                values[pos]
            )));
        }
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut clamped = 0;
        for v in values.iter_mut() {
            if *v < 0.0 {
                if -*v > ROUNDOFF_NEGATIVE * scale {
                    return Err(Error::InvalidField(format!(
                        "negative value {v} exceeds round-off scale"
                    )));
                }
                *v = 0.0;
                clamped += 1;
            }
        }
        Ok(Self {
            grid: *grid,
            values,
            clamped,
        })
    }

    /// Trusted constructor for kernels whose output is nonnegative by construction.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self {
            grid,
            values,
            clamped: 0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Same values attached to a grid with the same lattice (e.g. other `dt`).
    pub fn with_grid(mut self, grid: &GridSpec) -> Result<Self> {
        check_same_lattice(&self.grid, grid)?;
        self.grid = *grid;
        Ok(self)
    }

    /// Number of round-off negatives clamped at construction.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values of velocity column `col = j + nv`, indexed by `i`.
    pub fn column(&self, col: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.values[col * nx..(col + 1) * nx]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.grid.nx)
    }

    /// `f_{i,j}` with `j` in `-nv..=nv`.
    pub fn get(&self, i: usize, j: i64) -> f64 {
        let col = (j + self.grid.nv as i64) as usize;
        self.values[col * self.grid.nx + i]
    }

    /// Extension `E(f)(x, v)`: linear in `x` on `[x_s, x_{s+1})`, constant on
    /// each velocity cell, zero outside the truncated velocity range.
    pub fn eval_extended(&self, x: f64, v: f64) -> f64 {
        let Some(j) = self.grid.velocity_index(v) else {
            return 0.0;
        };
        let (s, a) = self.grid.locate_x(x);
        let col = self.column((j + self.grid.nv as i64) as usize);
        lerp(col, s, a)
    }

    pub fn n_norms(&self, q: f64) -> NormReport {
        n_norms(self, q)
    }

    /// Mass, momentum and energy totals `sum f {1, v, v^2} dx dv`.
    pub fn totals(&self) -> [f64; 3] {
        let g = &self.grid;
        let per_col: Vec<[f64; 3]> = self
            .values
            .par_chunks_exact(g.nx)
            .enumerate()
            .map(|(col, c)| {
                let v = g.v_col(col);
                let s: f64 = c.iter().sum();
                [s, s * v, s * v * v]
            })
            .collect();
        let mut t = [0.0; 3];
        for p in per_col {
            for k in 0..3 {
                t[k] += p[k];
            }
        }
        let cell = g.dx * g.dv;
        t.map(|x| x * cell)
    }

    /// Writes `i,j,x,v,f` rows in lexicographic `(i, j)` order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let g = &self.grid;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "x", "v", "f"])?;
        let nv = g.nv as i64;
        for i in 0..g.nx {
            let x = g.x(i).to_string();
            let istr = i.to_string();
            for j in -nv..=nv {
                w.write_record([
                    istr.as_str(),
                    &j.to_string(),
                    &x,
                    &g.v(j).to_string(),
                    &self.get(i, j).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field CSV onto `grid`, which must have the same lattice.
    pub fn read_csv_on<R: Read>(reader: R, grid: &GridSpec) -> Result<Self> {
        let table = FieldTable::read_csv(reader)?;
        if table.nx != grid.nx || table.nv != grid.nv || table.vmax != grid.vmax {
            return Err(Error::IncompatibleGrids(format!(
                "table lattice {} x {} (vmax {}) vs grid {} x {} (vmax {})",
                table.nx, table.nv, table.vmax, grid.nx, grid.nv, grid.vmax
            )));
        }
        Self::from_values(grid, table.values)
    }
}

/// Raw contents of a field CSV: the lattice it was written on and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub nx: usize,
    pub nv: usize,
    pub vmax: f64,
    /// Velocity-major, as in [`DistributionField`].
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct FieldRow {
    i: usize,
    j: i64,
    #[allow(dead_code)]
    x: f64,
    v: f64,
    f: f64,
}

impl FieldTable {
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["i", "j", "x", "v", "f"] {
            return Err(Error::Parse {
                what: "field CSV",
                reason: format!("unexpected header {headers:?}"),
            });
        }
        let rows: Vec<FieldRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let bad = |reason: String| Error::Parse {
            what: "field CSV",
            reason,
        };
        let nx = rows.iter().map(|r| r.i).max().ok_or_else(|| bad("no rows".into()))? + 1;
        let nv = rows.iter().map(|r| r.j).max().unwrap_or(0);
        if nv < 1 {
            return Err(bad("need at least one positive velocity index".into()));
        }
        let nv = nv as usize;
        let ncols = 2 * nv + 1;
        if rows.len() != nx * ncols {
            return Err(bad(format!(
                "expected {} rows for {nx} x {ncols} nodes, got {}",
                nx * ncols,
                rows.len()
            )));
        }
        let mut values = vec![0.0; nx * ncols];
        let mut vmax = 0.0;
        for (k, r) in rows.iter().enumerate() {
            let (ei, ej) = (k / ncols, (k % ncols) as i64 - nv as i64);
            if r.i != ei || r.j != ej {
                return Err(bad(format!(
                    "row {k}: expected node ({ei}, {ej}), found ({}, {})",
                    r.i, r.j
                )));
            }
            if r.j == nv as i64 {
                vmax = r.v;
            }
            values[(ej + nv as i64) as usize * nx + ei] = r.f;
        }
        if !(vmax > 0.0) {
            return Err(bad(format!("invalid maximum velocity {vmax}")));
        }
        Ok(Self {
            nx,
            nv,
            vmax,
            values,
        })
    }
}

#[inline]
pub(crate) fn lerp(col: &[f64], s: usize, a: f64) -> f64 {
    let lo = col[s];
    if a == 0.0 {
        return lo;
    }
    let hi = col[if s + 1 == col.len() { 0 } else { s + 1 }];
    lo + a * (hi - lo)
}

pub(crate) fn check_same_lattice(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a.same_lattice(b) {
        Ok(())
    } else {
        Err(Error::IncompatibleGrids(format!(
            "{} x {} (vmax {}) vs {} x {} (vmax {})",
            a.nx,
            a.velocity_count(),
            a.vmax,
            b.nx,
            b.velocity_count(),
            b.vmax
        )))
    }
}

/// Lattice sum `sum |f - g| (1 + |v_j|)^q dx dv`.
pub fn weighted_l1_distance(f: &DistributionField, g: &DistributionField, q: f64) -> Result<f64> {
    check_same_lattice(&f.grid, &g.grid)?;
    let grid = &f.grid;
    let weights = grid.velocity_weights(q);
    let per_col: Vec<f64> = f
        .values
        .par_chunks_exact(grid.nx)
        .zip(g.values.par_chunks_exact(grid.nx))
        .zip(weights.par_iter())
        .map(|((a, b), w)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * w)
        .collect();
    Ok(per_col.iter().sum::<f64>() * grid.dx * grid.dv)
}

/// `L^1_q`, `N^0_q` and `N^1_q` of a field. The discrete `x`-derivative wraps
/// periodically, `(f_{0,j} - f_{nx-1,j})/dx` at the seam.
pub fn n_norms(field: &DistributionField, q: f64) -> NormReport {
    let grid = &field.grid;
    let weights = grid.velocity_weights(q);
    let nx = grid.nx as f64;
    let per_col: Vec<(f64, f64, f64)> = field
        .values
        .par_chunks_exact(grid.nx)
        .zip(weights.par_iter())
        .map(|(c, &w)| {
            let mut sum = 0.0;
            let mut sup = 0.0_f64;
            let mut dsup = 0.0_f64;
            for (i, &f) in c.iter().enumerate() {
                sum += f;
                sup = sup.max(f.abs());
                let next = c[if i + 1 == c.len() { 0 } else { i + 1 }];
                dsup = dsup.max((next - f).abs());
            }
            (sum * w, sup * w, dsup * nx * w)
        })
        .collect();
    let mut l1 = 0.0;
    let mut n0 = 0.0_f64;
    let mut n1 = 0.0_f64;
    for (s, a, b) in per_col {
        l1 += s;
        n0 = n0.max(a);
        n1 = n1.max(b);
    }
    NormReport {
        l1_q: l1 * grid.dx * grid.dv,
        n0_q: n0,
        n1_q: n1,
        q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        build_grid(8, 4, 4, 2.0, 0.4, 1.0, 4.0).unwrap()
    }

    fn sample(grid: &GridSpec) -> DistributionField {
        DistributionField::from_fn(grid, |i, j| 1.0 + (i as f64 * 0.7).sin().abs() + 0.1 * j as f64 * j as f64)
            .unwrap()
    }

    #[test]
    fn extension_matches_nodes_and_midpoints() {
        let g = grid();
        let f = sample(&g);
        let nv = g.nv as i64;
        for i in 0..g.nx {
            for j in -nv..=nv {
                assert_eq!(f.eval_extended(g.x(i), g.v(j)), f.get(i, j));
                let mid = f.eval_extended(g.x(i) + g.dx / 2.0, g.v(j));
                let ip1 = (i + 1) % g.nx;
                assert_eq!(mid, (f.get(i, j) + f.get(ip1, j)) / 2.0);
            }
        }
    }

    #[test]
    fn extension_vanishes_outside_velocity_range() {
        let g = grid();
        let f = sample(&g);
        assert_eq!(f.eval_extended(0.3, g.vmax + g.dv), 0.0);
        assert_eq!(f.eval_extended(0.3, -g.vmax - g.dv), 0.0);
        assert!(f.eval_extended(0.3, g.vmax + 0.49 * g.dv) > 0.0);
    }

    #[test]
    fn extension_is_periodic_on_dyadic_points() {
        let g = grid();
        let f = sample(&g);
        for k in 0..64 {
            let x = k as f64 / 64.0 - 0.5;
            assert_eq!(f.eval_extended(x + 1.0, 0.4), f.eval_extended(x, 0.4));
        }
    }

    #[test]
    fn l1_examples() {
        let g = grid();
        let f = sample(&g);
        assert_eq!(weighted_l1_distance(&f, &f, 2.0).unwrap(), 0.0);

        let mut vals = f.values().to_vec();
        let delta = 0.25;
        vals[g.nv * g.nx + 3] += delta;
        let h = DistributionField::from_values(&g, vals).unwrap();
        let d = weighted_l1_distance(&f, &h, 2.0).unwrap();
        assert!((d - delta * g.dx * g.dv).abs() < 1e-15);

        let c = 1.5;
        let cf = DistributionField::from_fn(&g, |_, _| c).unwrap();
        let z = DistributionField::zeros(&g);
        let d = weighted_l1_distance(&cf, &z, 0.0).unwrap();
        let expect = c * (2 * g.nv + 1) as f64 * g.dv;
        assert!((d - expect).abs() < 1e-13 * expect);
    }

    #[test]
    fn l1_rejects_different_lattices() {
        let a = DistributionField::zeros(&grid());
        let b = DistributionField::zeros(&build_grid(16, 4, 4, 2.0, 0.4, 1.0, 4.0).unwrap());
        assert!(matches!(
            weighted_l1_distance(&a, &b, 2.0),
            Err(Error::IncompatibleGrids(_))
        ));
    }

    #[test]
    fn norm_examples() {
        let g = grid();
        let c = DistributionField::from_fn(&g, |_, _| 0.75).unwrap();
        let r = c.n_norms(0.0);
        assert_eq!(r.n0_q, 0.75);
        assert_eq!(r.n1_q, 0.0);

        let spike = DistributionField::from_fn(&g, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 }).unwrap();
        let r = spike.n_norms(2.0);
        assert_eq!(r.n0_q, 1.0);
        assert!((r.n1_q - 1.0 / g.dx).abs() < 1e-12);

        let r = DistributionField::zeros(&g).n_norms(4.0);
        assert_eq!((r.l1_q, r.n0_q, r.n1_q), (0.0, 0.0, 0.0));
    }

    #[test]
    fn construction_validates_values() {
        let g = grid();
        let n = g.node_count();
        let mut vals = vec![1.0; n];
        vals[5] = -1e-15;
        let f = DistributionField::from_values(&g, vals.clone()).unwrap();
        assert_eq!(f.clamped_count(), 1);
        assert_eq!(f.values()[5], 0.0);
        vals[5] = -0.1;
        assert!(DistributionField::from_values(&g, vals.clone()).is_err());
        vals[5] = f64::NAN;
        assert!(DistributionField::from_values(&g, vals).is_err());
        assert!(DistributionField::from_values(&g, vec![1.0; n - 1]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = grid();
        let f = DistributionField::from_fn(&g, |i, j| (0.1 * i as f64 + 0.37).exp() / (3.0 + j as f64 * j as f64))
            .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,x,v,f\n0,-4,0,-2,"));
        let back = DistributionField::read_csv_on(buf.as_slice(), &g).unwrap();
        assert_eq!(back, f);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = grid().node_count();
        (
            prop::collection::vec(0.0..10.0f64, n),
            prop::collection::vec(0.0..10.0f64, n),
            prop::collection::vec(0.0..10.0f64, n),
        )
    }

    proptest! {
        #[test]
        fn l1_is_a_metric((a, b, c) in arb_pair(), lambda in 0.0..5.0f64) {
            let g = grid();
            let fa = DistributionField::from_values(&g, a.clone()).unwrap();
            let fb = DistributionField::from_values(&g, b.clone()).unwrap();
            let fc = DistributionField::from_values(&g, c).unwrap();
            let ab = weighted_l1_distance(&fa, &fb, 2.0).unwrap();
            let ba = weighted_l1_distance(&fb, &fa, 2.0).unwrap();
            let ac = weighted_l1_distance(&fa, &fc, 2.0).unwrap();
            let cb = weighted_l1_distance(&fc, &fb, 2.0).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= (ac + cb) * (1.0 + 1e-12));

            let sa = DistributionField::from_values(&g, a.iter().map(|x| x * lambda).collect()).unwrap();
            let sb = DistributionField::from_values(&g, b.iter().map(|x| x * lambda).collect()).unwrap();
            let scaled = weighted_l1_distance(&sa, &sb, 2.0).unwrap();
            prop_assert!((scaled - lambda * ab).abs() <= 1e-12 * (lambda * ab).max(1e-300));
        }

        #[test]
        fn extension_stays_within_neighbouring_nodes(vals in prop::collection::vec(0.0..10.0f64, grid().node_count()), x in -3.0..3.0f64, v in -2.0..2.0f64) {
            let g = grid();
            let f = DistributionField::from_values(&g, vals).unwrap();
            let (s, _) = g.locate_x(x);
            let j = g.velocity_index(v).unwrap();
            let lo = f.get(s, j).min(f.get((s + 1) % g.nx, j));
            let hi = f.get(s, j).max(f.get((s + 1) % g.nx, j));
            let e = f.eval_extended(x, v);
            prop_assert!(e >= lo && e <= hi);
        }
    }
}
