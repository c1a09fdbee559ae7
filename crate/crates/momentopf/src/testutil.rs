//! Helpers shared by unit tests across modules.

use num_complex::Complex64;

use crate::netcase::{build_matrices, injections, NetworkCase};
use crate::sdpcore::SdpProblem;

/// Newton solve for the load-bus voltage of the two-bus case at a fixed
/// reference voltage.
pub fn two_bus_operating_point(case: &NetworkCase, v1: Complex64) -> Vec<Complex64> {
    assert_eq!(case.n(), 2);
    let mats = build_matrices(case);
    let target = Complex64::new(-case.buses[1].pd, -case.buses[1].qd);
    let mut v2 = Complex64::new(1.0, 0.0);
    for _ in 0..60 {
        let f = injections(&mats.y, &[v1, v2])[1] - target;
        if f.norm() < 1e-13 {
            break;
        }
        let h = 1e-7;
        let fr = injections(&mats.y, &[v1, v2 + Complex64::new(h, 0.0)])[1] - target;
        let fi = injections(&mats.y, &[v1, v2 + Complex64::new(0.0, h)])[1] - target;
        let j11 = (fr.re - f.re) / h;
        let j12 = (fi.re - f.re) / h;
        let j21 = (fr.im - f.im) / h;
        let j22 = (fi.im - f.im) / h;
        let det = j11 * j22 - j12 * j21;
        v2 -= Complex64::new((f.re * j22 - f.im * j12) / det, (f.im * j11 - f.re * j21) / det);
    }
    vec![v1, v2]
}

/// Assert that a decision vector satisfies every block, equality, and box of
/// a problem within the given tolerances.
pub fn assert_feasible(p: &SdpProblem, y: &[f64], eig_tol: f64, eq_tol: f64) {
    for (bi, block) in p.blocks.iter().enumerate() {
        let eig = block
            .eval(y)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(eig >= -eig_tol, "block {bi} has min eig {eig}");
    }
    for (ri, row) in p.eq.iter().enumerate() {
        let r = (row.eval(y) - row.rhs).abs();
        assert!(r < eq_tol, "equality {ri} residual {r}");
    }
    for i in 0..p.m {
        assert!(y[i] >= p.lo[i] - eig_tol, "var {i} = {} below {}", y[i], p.lo[i]);
        assert!(y[i] <= p.hi[i] + eig_tol, "var {i} = {} above {}", y[i], p.hi[i]);
    }
}
