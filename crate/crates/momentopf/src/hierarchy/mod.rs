//! Assembly of the moment relaxations into block SDP data.
//!
//! Both hierarchies produce the same solver form: symmetric blocks linear in
//! the decision vector, equality rows, and variable boxes. Constants never
//! enter a block's constant matrix; they ride on decision variable 0 (the
//! moment of the constant monomial), which a normalization row pins to one.
//! Keeping constant matrices empty lets negated constraint pairs fold exactly
//! into equalities in presolve, so power-balance equalities at load buses do
//! not destroy the primal interior.

pub mod complex;
pub mod real;

use std::collections::{BTreeMap, BTreeSet};

use crate::netcase::{NetworkCase, ObjectiveMode};
use crate::polymodel::LinExpr;
use crate::sdpcore::{LinRow, MatCoeff, SdpBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HierarchyKind {
    Real,
    Complex,
}

impl std::fmt::Display for HierarchyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HierarchyKind::Real => "real",
            HierarchyKind::Complex => "complex",
        })
    }
}

/// Assembly switches shared by both hierarchies.
#[derive(Clone, Debug)]
pub struct AssemblyOptions {
    pub objective: ObjectiveMode,
    /// Complex hierarchy only: add the slack-lifted sphere equality
    /// `sum_k |V_k|^2 + s = sum_k (V_k^max)^2`.
    pub sphere: bool,
    /// Where the local order reaches 2, emit the direct degree-4 cost and
    /// flow rows alongside their Schur forms.
    pub quartic_at_order2: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            objective: ObjectiveMode::Cost,
            sphere: false,
            quartic_at_order2: true,
        }
    }
}

/// Epigraph variable bookkeeping for one generator's quadratic cost. The
/// objective minimizes the sum of these variables; each is pinned from below
/// by a Schur (and optionally direct degree-4) encoding of
/// `c2 Pg^2 + c1 Pg + c0` with `Pg` the lifted injection plus the bus load.
#[derive(Clone, Debug)]
pub struct CostVar {
    pub bus: usize,
    pub var: u32,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub pd: f64,
}

/// Net-injection boxes per bus: the generator box shifted by the load.
/// Buses without generation get degenerate boxes, which presolve folds into
/// power-balance equalities.
pub(crate) struct InjLimits {
    pub plo: Vec<f64>,
    pub phi: Vec<f64>,
    pub qlo: Vec<f64>,
    pub qhi: Vec<f64>,
}

pub(crate) fn injection_limits(case: &NetworkCase) -> InjLimits {
    let n = case.n();
    let mut lim = InjLimits {
        plo: vec![0.0; n],
        phi: vec![0.0; n],
        qlo: vec![0.0; n],
        qhi: vec![0.0; n],
    };
    for (k, b) in case.buses.iter().enumerate() {
        let (pmin, pmax, qmin, qmax) = match case.gen_at(k) {
            Some(g) => (g.pmin, g.pmax, g.qmin, g.qmax),
            None => (0.0, 0.0, 0.0, 0.0),
        };
        lim.plo[k] = pmin - b.pd;
        lim.phi[k] = pmax - b.pd;
        lim.qlo[k] = qmin - b.qd;
        lim.qhi[k] = qmax - b.qd;
    }
    lim
}

/// Sorted closed neighborhood of every bus under the line graph.
pub(crate) fn closed_neighborhoods(case: &NetworkCase) -> Vec<Vec<usize>> {
    let n = case.n();
    let mut nb: Vec<BTreeSet<usize>> = (0..n).map(|k| BTreeSet::from([k])).collect();
    for l in &case.lines {
        nb[l.from].insert(l.to);
        nb[l.to].insert(l.from);
    }
    nb.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Accumulates the upper triangle of a symmetric linear-matrix block. Linear
/// expressions' constants are rerouted onto variable 0.
pub(crate) struct BlockBuilder {
    dim: usize,
    per_var: BTreeMap<u32, Vec<(usize, usize, f64)>>,
}

impl BlockBuilder {
    pub fn new(dim: usize) -> Self {
        BlockBuilder { dim, per_var: BTreeMap::new() }
    }

    pub fn add(&mut self, i: usize, j: usize, var: u32, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        debug_assert!(j < self.dim);
        self.per_var.entry(var).or_default().push((i, j, coeff));
    }

    pub fn add_expr(&mut self, i: usize, j: usize, e: &LinExpr) {
        self.add(i, j, 0, e.constant);
        for &(v, c) in &e.terms {
            self.add(i, j, v, c);
        }
    }

    pub fn finish(self) -> SdpBlock {
        let terms = self
            .per_var
            .into_iter()
            .map(|(v, ents)| (v, MatCoeff::from_entries(ents)))
            .collect();
        SdpBlock::new(self.dim, MatCoeff::zero(), terms)
    }
}

/// `expr >= 0` as a one-by-one block.
pub(crate) fn scalar_row(e: &LinExpr) -> SdpBlock {
    let mut b = BlockBuilder::new(1);
    b.add_expr(0, 0, e);
    b.finish()
}

/// `expr == rhs`; the expression's constant moves to the right-hand side.
pub(crate) fn equality_row(e: &LinExpr, rhs: f64) -> LinRow {
    LinRow::new(e.terms.clone(), rhs - e.constant)
}

/// Epigraph of a quadratic cost with positive curvature:
/// [[t - c1 g - c0, sqrt(c2) g], [., 1]] >= 0 is equivalent to
/// t >= c2 g^2 + c1 g + c0 (homogenized through variable 0).
pub(crate) fn cost_schur_block(t: u32, pg: &LinExpr, c2: f64, c1: f64, c0: f64) -> SdpBlock {
    debug_assert!(c2 > 0.0);
    let mut b = BlockBuilder::new(2);
    let mut e00 = LinExpr::single(t, 1.0).add_scaled(pg, -c1);
    e00.constant -= c0;
    b.add_expr(0, 0, &e00);
    b.add_expr(0, 1, &LinExpr::zero().add_scaled(pg, c2.sqrt()));
    b.add(1, 1, 0, 1.0);
    b.finish()
}

/// Apparent-power limit in Schur form:
/// [[smax^2, p, q], [., 1, 0], [., 0, 1]] >= 0 is equivalent to
/// p^2 + q^2 <= smax^2 (homogenized through variable 0).
pub(crate) fn flow_schur_block(smax: f64, p: &LinExpr, q: &LinExpr) -> SdpBlock {
    let mut b = BlockBuilder::new(3);
    b.add(0, 0, 0, smax * smax);
    b.add_expr(0, 1, p);
    b.add_expr(0, 2, q);
    b.add(1, 1, 0, 1.0);
    b.add(2, 2, 0, 1.0);
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_eig(block: &SdpBlock, y: &[f64]) -> f64 {
        block
            .eval(y)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    #[test]
    fn flow_schur_boundary() {
        // p = 3, q = 4 against smax = 5 sits exactly on the limit
        let p = LinExpr::single(1, 1.0);
        let q = LinExpr::single(2, 1.0);
        let y = vec![1.0, 3.0, 4.0];
        let at_limit = flow_schur_block(5.0, &p, &q);
        assert!(min_eig(&at_limit, &y).abs() <= 1e-9);
        let violated = flow_schur_block(4.9, &p, &q);
        assert!(min_eig(&violated, &y) < -1e-3);
        let slack = flow_schur_block(5.1, &p, &q);
        assert!(min_eig(&slack, &y) > 0.0);
    }

    #[test]
    fn cost_schur_boundary() {
        // c2 = 1, c1 = 0, c0 = 0, Pg = 3: t = 9 is the exact epigraph edge
        let pg = LinExpr::single(1, 1.0);
        let block = cost_schur_block(2, &pg, 1.0, 0.0, 0.0);
        let tight = vec![1.0, 3.0, 9.0];
        assert!(min_eig(&block, &tight).abs() <= 1e-9);
        let below = vec![1.0, 3.0, 8.999];
        assert!(min_eig(&block, &below) < 0.0);
        let above = vec![1.0, 3.0, 9.5];
        assert!(min_eig(&block, &above) >= 0.0);

        // affine pieces ride on the homogenization variable
        let full = cost_schur_block(2, &pg, 2.0, 3.0, 5.0);
        let cost = 2.0 * 9.0 + 3.0 * 3.0 + 5.0;
        assert!(min_eig(&full, &[1.0, 3.0, cost]).abs() <= 1e-9);
        assert!(min_eig(&full, &[1.0, 3.0, cost - 0.01]) < 0.0);
    }

    #[test]
    fn builder_routes_constants_to_var_zero() {
        let e = LinExpr { constant: 2.5, terms: vec![(3, 1.0)] };
        let b = scalar_row(&e);
        assert_eq!(b.dim, 1);
        // entry value at y0 = 1, y3 = 4 is 6.5
        let v = b.eval(&[1.0, 0.0, 0.0, 4.0]);
        assert!((v[(0, 0)] - 6.5).abs() < 1e-12);
        // f0 stays empty so negated pairs can fold exactly
        assert!(b.f0.is_empty());
    }

    #[test]
    fn injection_limits_shift_by_load() {
        let case = crate::netcase::parse_case(crate::cases::by_name("case2").unwrap()).unwrap();
        let lim = injection_limits(&case);
        // bus 1 carries only load: degenerate box at minus the load
        assert_eq!(lim.plo[1], lim.phi[1]);
        assert!(lim.plo[1] < 0.0);
        let g = case.gen_at(0).unwrap();
        assert_eq!(lim.phi[0], g.pmax - case.buses[0].pd);
    }

    #[test]
    fn neighborhoods_are_closed_and_sorted() {
        let case = crate::netcase::parse_case(crate::cases::by_name("case9").unwrap()).unwrap();
        let nb = closed_neighborhoods(&case);
        for (k, set) in nb.iter().enumerate() {
            assert!(set.binary_search(&k).is_ok());
            assert!(set.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
