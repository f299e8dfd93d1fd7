use bgk_sl_core::{build_grid, init_field, maxwellian_value, run};
use std::f64::consts::PI;

fn sine(x: f64, v: f64) -> f64 {
    (1.0 + 0.5 * (2.0 * PI * x).sin()) * maxwellian_value(1.0, 0.0, 1.0, v).unwrap()
}

#[test]
fn weighted_norm_stays_bounded() {
    let g = build_grid(64, 32, 16, 6.0, 0.4, 0.1, 4.0).unwrap();
    let nq0 = init_field(&sine, &g).unwrap().n_norms(g.q).nq();
    let (_, reports) = run(&sine, &g).unwrap();
    assert_eq!(reports.len(), 16);
    for r in &reports {
        assert!(r.nq_norm <= 3.0 * nq0, "step {}: {} vs {}", r.step_index, r.nq_norm, nq0);
        assert!(r.min_rho > 0.0 && r.min_temp > 0.0);
    }
}

#[test]
fn large_courant_numbers_stay_bounded() {
    // dt vmax / dx = 0.1 * 6 * 64 = 38.4
    let g = build_grid(64, 32, 4, 6.0, 0.4, 0.1, 4.0).unwrap();
    assert!(g.cfl() > 30.0);
    let nq0 = init_field(&sine, &g).unwrap().n_norms(g.q).nq();
    let (f, reports) = run(&sine, &g).unwrap();
    assert!(reports.iter().all(|r| r.nq_norm <= 3.0 * nq0));
    assert!(f.values().iter().all(|&v| v >= 0.0));
}
