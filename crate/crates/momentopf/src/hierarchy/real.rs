//! Relaxation over the real voltage components xi = [V_d; V_q], with the
//! reference bus's V_q eliminated from the variable set.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::netcase::{
    build_matrices, complex_to_real, objective_polynomial, quad_poly, NetworkCase, ObjectivePoly,
    VarLayout,
};
use crate::polymodel::{basis_for_vars, lift_real, LinExpr, MomentIndex, PolyR, RealMonomial};
use crate::sdpcore::{LinRow, SdpBlock, SdpProblem};
use crate::sparsity::{clique_bases_real, clique_orders, CliqueDecomposition};
use crate::{Error, Result};

use super::{
    closed_neighborhoods, cost_schur_block, flow_schur_block, injection_limits, scalar_row,
    AssemblyOptions, BlockBuilder, CostVar,
};

/// Moment matrix over a basis: entry (a, b) is the id of the label a*b.
pub fn moment_matrix(
    basis: &[RealMonomial],
    idx: &mut MomentIndex,
) -> Result<Vec<Vec<u32>>> {
    let mut rows = Vec::with_capacity(basis.len());
    for a in basis {
        let mut row = Vec::with_capacity(basis.len());
        for b in basis {
            row.push(idx.intern(&a.mul(b))?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Basis order for localizing a constraint of degree deg(g) at relaxation
/// order gamma: gamma - ceil(deg/2), or an error when gamma is too low.
pub fn localizing_order(gamma: u32, g: &PolyR) -> Result<u32> {
    let eta = g.degree().div_ceil(2);
    if gamma < eta {
        return Err(Error::OrderTooLow { gamma, eta });
    }
    Ok(gamma - eta)
}

/// Localizing matrix of g: entry (a, b) = sum_delta g_delta y_{delta+a+b}.
pub fn localizing_matrix(
    g: &PolyR,
    basis: &[RealMonomial],
    idx: &mut MomentIndex,
) -> Result<Vec<Vec<LinExpr>>> {
    let mut rows = Vec::with_capacity(basis.len());
    for a in basis {
        let mut row = Vec::with_capacity(basis.len());
        for b in basis {
            let ab = a.mul(b);
            let mut map = std::collections::BTreeMap::new();
            for (delta, coeff) in g.terms() {
                let id = idx.intern(&delta.mul(&ab))?;
                *map.entry(id).or_insert(0.0) += coeff;
            }
            row.push(LinExpr::from_map(0.0, map));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn localizing_block(
    g: &PolyR,
    basis: &[RealMonomial],
    idx: &mut MomentIndex,
) -> Result<SdpBlock> {
    let ents = localizing_matrix(g, basis, idx)?;
    let d = basis.len();
    let mut b = BlockBuilder::new(d);
    for i in 0..d {
        for j in i..d {
            b.add_expr(i, j, &ents[i][j]);
        }
    }
    Ok(b.finish())
}

/// |V_k|^2 over the real components.
fn vmag_poly(layout: &VarLayout, k: usize) -> PolyR {
    let m = layout.m();
    let mut p = PolyR::new();
    let mut e = vec![0u8; m];
    e[layout.vd(k)] = 2;
    p.add_term(RealMonomial::from_exps(e), 1.0);
    if let Some(q) = layout.vq(k) {
        let mut e = vec![0u8; m];
        e[q] = 2;
        p.add_term(RealMonomial::from_exps(e), 1.0);
    }
    p
}

fn bus_of_var(layout: &VarLayout, v: usize) -> usize {
    if v < layout.n {
        v
    } else {
        let b = v - layout.n;
        if b < layout.ref_bus {
            b
        } else {
            b + 1
        }
    }
}

struct CostPrep {
    bus: usize,
    pg: LinExpr,
    quartic: Option<LinExpr>,
    c2: f64,
    c1: f64,
    c0: f64,
    pd: f64,
}

/// An assembled relaxation plus the bookkeeping the iteration loop needs:
/// the moment index, per-bus lifted injections, and epigraph variables.
pub struct RealRelaxation {
    pub problem: SdpProblem,
    pub index: MomentIndex,
    pub layout: VarLayout,
    pub cliques: Vec<Vec<usize>>,
    /// Clique-tree edges, carried over for solution stitching.
    pub tree_edges: Vec<(usize, usize)>,
    pub orders: Vec<u32>,
    /// Position of each clique's moment matrix in `problem.blocks`.
    pub moment_blocks: Vec<usize>,
    /// Basis monomials of each clique's moment matrix, graded order.
    pub clique_monomials: Vec<Vec<RealMonomial>>,
    /// Lifted net active/reactive injection per bus, over moment variables.
    pub inj_p: Vec<LinExpr>,
    pub inj_q: Vec<LinExpr>,
    pub cost_vars: Vec<CostVar>,
    /// Variable ids below this are moments; epigraph variables follow.
    pub n_moments: usize,
}

impl RealRelaxation {
    /// Numeric first-order moment matrix of a clique over [1, xi_v..]; its
    /// products exist in the index because the clique's moment matrix
    /// interned them.
    pub fn first_order_matrix(&self, clique: usize, y: &[f64]) -> DMatrix<f64> {
        let vars = self.layout.vars_for(&self.cliques[clique]);
        let d = vars.len() + 1;
        let monos = &self.clique_monomials[clique][..d];
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let id = self
                    .index
                    .get(&monos[i].mul(&monos[j]))
                    .expect("first-order moment interned");
                out[(i, j)] = y[id as usize];
                out[(j, i)] = y[id as usize];
            }
        }
        out
    }
}

pub fn assemble_real(
    case: &NetworkCase,
    decomp: &CliqueDecomposition,
    gamma: &[u32],
    opts: &AssemblyOptions,
) -> Result<RealRelaxation> {
    let n = case.n();
    if gamma.len() != n {
        return Err(Error::Assembly {
            msg: format!("{} relaxation orders for {} buses", gamma.len(), n),
        });
    }
    if let Some(k) = gamma.iter().position(|&g| g == 0) {
        return Err(Error::Assembly { msg: format!("bus {k} has relaxation order 0") });
    }
    let layout = VarLayout::new(n, case.ref_bus);
    let m = layout.m();
    let mats = build_matrices(case);
    let orders = clique_orders(&decomp.cliques, gamma);
    let bases = clique_bases_real(&layout, &decomp.cliques, &orders)?;
    let mut index = bases.index;
    let lim = injection_limits(case);
    let nbhd = closed_neighborhoods(case);

    let fp: Vec<PolyR> =
        (0..n).map(|k| complex_to_real(&quad_poly(&mats.h[k]), &layout)).collect();
    let fq: Vec<PolyR> =
        (0..n).map(|k| complex_to_real(&quad_poly(&mats.ht[k]), &layout)).collect();

    let mut blocks: Vec<SdpBlock> = Vec::new();
    let mut moment_blocks = Vec::with_capacity(decomp.cliques.len());
    for monos in &bases.monomials {
        let ids = moment_matrix(monos, &mut index)?;
        let d = monos.len();
        let mut b = BlockBuilder::new(d);
        for i in 0..d {
            for j in i..d {
                b.add(i, j, ids[i][j], 1.0);
            }
        }
        moment_blocks.push(blocks.len());
        blocks.push(b.finish());
    }

    let inj_p: Vec<LinExpr> =
        fp.iter().map(|p| lift_real(p, &mut index)).collect::<Result<_>>()?;
    let inj_q: Vec<LinExpr> =
        fq.iter().map(|p| lift_real(p, &mut index)).collect::<Result<_>>()?;

    // Per-bus boxes. Voltage bounds anchor on the bus's own clique. At order
    // one the injection boxes are plain lifted rows; at higher orders they
    // localize over the clique covering the bus's closed neighborhood when
    // one exists, else over the bus's own clique (products then straddle
    // cliques and enter the shared index, where the variable boxes still
    // bound them).
    for k in 0..n {
        let gk = gamma[k];
        let own = basis_for_vars(
            &layout.vars_for(&decomp.cliques[decomp.clique_for(&[k])]),
            m,
            gk - 1,
        );
        let b = &case.buses[k];
        let fv = vmag_poly(&layout, k);
        let g_lo = fv.add(&PolyR::constant(m, -b.vmin * b.vmin));
        let g_hi = fv.scale(-1.0).add(&PolyR::constant(m, b.vmax * b.vmax));
        blocks.push(localizing_block(&g_lo, &own, &mut index)?);
        blocks.push(localizing_block(&g_hi, &own, &mut index)?);

        let inj_basis = if gk == 1 {
            vec![RealMonomial::constant(m)]
        } else {
            let ci = decomp
                .clique_covering(&nbhd[k])
                .unwrap_or_else(|| decomp.clique_for(&[k]));
            basis_for_vars(&layout.vars_for(&decomp.cliques[ci]), m, gk - 1)
        };
        for (poly, lo, hi) in
            [(&fp[k], lim.plo[k], lim.phi[k]), (&fq[k], lim.qlo[k], lim.qhi[k])]
        {
            let g_lo = poly.add(&PolyR::constant(m, -lo));
            let g_hi = poly.scale(-1.0).add(&PolyR::constant(m, hi));
            blocks.push(localizing_block(&g_lo, &inj_basis, &mut index)?);
            blocks.push(localizing_block(&g_hi, &inj_basis, &mut index)?);
        }
    }

    // Directed flow limits: always the Schur form, plus the direct degree-4
    // localizing where the endpoint orders allow it.
    for fm in &mats.flows {
        let line = &case.lines[fm.line];
        if line.s_max <= 0.0 {
            continue;
        }
        let fh = (&fm.f + &fm.f.adjoint()) * Complex64::new(0.5, 0.0);
        let fj = (&fm.f - &fm.f.adjoint()) * Complex64::new(0.0, -0.5);
        let p_poly = complex_to_real(&quad_poly(&fh), &layout);
        let q_poly = complex_to_real(&quad_poly(&fj), &layout);
        let lp = lift_real(&p_poly, &mut index)?;
        let lq = lift_real(&q_poly, &mut index)?;
        blocks.push(flow_schur_block(line.s_max, &lp, &lq));
        let o = gamma[fm.from].max(gamma[fm.to]);
        if o >= 2 && opts.quartic_at_order2 {
            let mut g = PolyR::constant(m, line.s_max * line.s_max);
            g = g.add(&p_poly.mul(&p_poly).scale(-1.0));
            g = g.add(&q_poly.mul(&q_poly).scale(-1.0));
            let ci = decomp.clique_for(&[fm.from, fm.to]);
            let basis = basis_for_vars(&layout.vars_for(&decomp.cliques[ci]), m, o - 2);
            blocks.push(localizing_block(&g, &basis, &mut index)?);
        }
    }

    let obj = objective_polynomial(case, &mats, opts.objective)?;
    let mut loss_expr: Option<LinExpr> = None;
    let mut cost_prep: Vec<CostPrep> = Vec::new();
    match &obj {
        ObjectivePoly::Loss(p) => {
            let pr = complex_to_real(p, &layout);
            loss_expr = Some(lift_real(&pr, &mut index)?);
        }
        ObjectivePoly::Cost(terms) => {
            for t in terms {
                let inj_r = complex_to_real(&t.injection, &layout);
                let pg_poly = inj_r.add(&PolyR::constant(m, t.pd));
                let mut pg = lift_real(&inj_r, &mut index)?;
                pg.constant += t.pd;
                let quartic = if gamma[t.bus] >= 2 && opts.quartic_at_order2 {
                    let full = pg_poly
                        .mul(&pg_poly)
                        .scale(t.c2)
                        .add(&pg_poly.scale(t.c1))
                        .add(&PolyR::constant(m, t.c0));
                    Some(lift_real(&full, &mut index)?)
                } else {
                    None
                };
                cost_prep.push(CostPrep {
                    bus: t.bus,
                    pg,
                    quartic,
                    c2: t.c2,
                    c1: t.c1,
                    c0: t.c0,
                    pd: t.pd,
                });
            }
        }
    }

    // moment interning is complete; epigraph variables follow the moments
    let n_moments = index.len();
    let total = n_moments + cost_prep.len();
    let mut cost_vars = Vec::with_capacity(cost_prep.len());
    for (i, cp) in cost_prep.iter().enumerate() {
        let t_var = (n_moments + i) as u32;
        if cp.c2 > 0.0 {
            blocks.push(cost_schur_block(t_var, &cp.pg, cp.c2, cp.c1, cp.c0));
        } else {
            let mut row = LinExpr::single(t_var, 1.0).add_scaled(&cp.pg, -cp.c1);
            row.constant -= cp.c0;
            blocks.push(scalar_row(&row));
        }
        if let Some(q) = &cp.quartic {
            let row = LinExpr::single(t_var, 1.0).add_scaled(q, -1.0);
            blocks.push(scalar_row(&row));
        }
        cost_vars.push(CostVar {
            bus: cp.bus,
            var: t_var,
            c2: cp.c2,
            c1: cp.c1,
            c0: cp.c0,
            pd: cp.pd,
        });
    }

    let mut prob = SdpProblem::new(total);
    prob.blocks = blocks;
    prob.eq.push(LinRow::new(vec![(0, 1.0)], 1.0));

    // variable 0 keeps infinite bounds: the normalization row already pins it
    // at 1, and a box touching that value exactly would leave the interior
    // point method no strictly feasible slack
    let vmax: Vec<f64> = case.buses.iter().map(|b| b.vmax).collect();
    for (id, mono) in index.labels().iter().enumerate().skip(1) {
        let mut bound = 1.0;
        for (v, &e) in mono.exps().iter().enumerate() {
            if e > 0 {
                bound *= vmax[bus_of_var(&layout, v)].powi(e as i32);
            }
        }
        // xi -> -xi preserves every constraint polynomial (all are even), so
        // the reference component may be taken nonnegative; moments of
        // squares are nonnegative outright
        let ref_only =
            mono.exps().iter().enumerate().all(|(v, &e)| e == 0 || v == layout.ref_bus);
        prob.hi[id] = bound;
        prob.lo[id] = if mono.all_even() || ref_only { 0.0 } else { -bound };
    }

    if let Some(e) = &loss_expr {
        debug_assert_eq!(e.constant, 0.0);
        for &(v, c) in &e.terms {
            prob.c[v as usize] += c;
        }
    } else {
        for cv in &cost_vars {
            prob.c[cv.var as usize] = 1.0;
        }
    }

    prob.validate()?;
    Ok(RealRelaxation {
        problem: prob,
        index,
        layout,
        cliques: decomp.cliques.clone(),
        tree_edges: decomp.tree_edges.clone(),
        orders,
        moment_blocks,
        clique_monomials: bases.monomials,
        inj_p,
        inj_q,
        cost_vars,
        n_moments,
    })
}

/// Substitute voltage phasors into the relaxation: every moment evaluated at
/// xi(v) (after rotating the reference bus real-nonnegative), epigraph
/// variables at the exact generator cost. Feasible phasors give a feasible
/// decision vector, which pins the relaxation below the true optimum.
pub fn lifted_point(rel: &RealRelaxation, v: &[Complex64]) -> Vec<f64> {
    let vref = v[rel.layout.ref_bus];
    let phase =
        if vref.norm() > 0.0 { vref / vref.norm() } else { Complex64::new(1.0, 0.0) };
    let rotated: Vec<Complex64> = v.iter().map(|z| z / phase).collect();
    let xi = rel.layout.from_phasors(&rotated);
    let mut y = vec![0.0; rel.problem.m];
    for (id, mono) in rel.index.labels().iter().enumerate() {
        y[id] = mono.eval(&xi);
    }
    for cv in &rel.cost_vars {
        let pg = rel.inj_p[cv.bus].eval(&y) + cv.pd;
        y[cv.var as usize] = cv.c2 * pg * pg + cv.c1 * pg + cv.c0;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::netcase::{injections, parse_case};
    use crate::polymodel::{basis_real, binomial, render_real_label};
    use crate::sparsity::{build_graph, chordal_extend, merge_cliques};

    fn case(name: &str) -> NetworkCase {
        parse_case(cases::by_name(name).unwrap()).unwrap()
    }

    fn decompose(case: &NetworkCase) -> CliqueDecomposition {
        merge_cliques(&chordal_extend(&build_graph(case)))
    }

    #[test]
    fn second_order_basis_matches_printed_sequence() {
        let basis = basis_real(2, 2);
        let expect: Vec<Vec<u8>> = vec![
            vec![0, 0, 0],
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 0, 1],
            vec![2, 0, 0],
            vec![1, 1, 0],
            vec![1, 0, 1],
            vec![0, 2, 0],
            vec![0, 1, 1],
            vec![0, 0, 2],
        ];
        let got: Vec<Vec<u8>> = basis.iter().map(|m| m.exps().to_vec()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn golden_moment_matrix_two_bus() {
        let basis = basis_real(2, 2);
        assert_eq!(basis.len(), 10);
        let mut idx = MomentIndex::new(3, 4);
        let ids = moment_matrix(&basis, &mut idx).unwrap();
        let lab = |i: usize, j: usize| render_real_label(idx.label(ids[i][j]));
        assert_eq!(lab(0, 0), "y_000");
        assert_eq!(lab(1, 4), "y_300");
        assert_eq!(lab(4, 9), "y_202");
        assert_eq!(lab(9, 9), "y_004");
        // symmetry of the id pattern
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(ids[i][j], ids[j][i]);
            }
        }
    }

    #[test]
    fn golden_localizing_matrix_v2_lower_bound() {
        let layout = VarLayout::new(2, 0);
        let g = vmag_poly(&layout, 1).add(&PolyR::constant(3, -0.81));
        let basis = basis_real(2, 1);
        assert_eq!(basis.len(), 4);
        let mut idx = MomentIndex::new(3, 4);
        let ents = localizing_matrix(&g, &basis, &mut idx).unwrap();
        let expect: Vec<(usize, usize, Vec<(&str, f64)>)> = vec![
            (0, 0, vec![("y_020", 1.0), ("y_002", 1.0), ("y_000", -0.81)]),
            (0, 1, vec![("y_120", 1.0), ("y_102", 1.0), ("y_100", -0.81)]),
            (0, 2, vec![("y_030", 1.0), ("y_012", 1.0), ("y_010", -0.81)]),
            (0, 3, vec![("y_021", 1.0), ("y_003", 1.0), ("y_001", -0.81)]),
            (1, 1, vec![("y_220", 1.0), ("y_202", 1.0), ("y_200", -0.81)]),
            (1, 2, vec![("y_130", 1.0), ("y_112", 1.0), ("y_110", -0.81)]),
            (1, 3, vec![("y_121", 1.0), ("y_103", 1.0), ("y_101", -0.81)]),
            (2, 2, vec![("y_040", 1.0), ("y_022", 1.0), ("y_020", -0.81)]),
            (2, 3, vec![("y_031", 1.0), ("y_013", 1.0), ("y_011", -0.81)]),
            (3, 3, vec![("y_022", 1.0), ("y_004", 1.0), ("y_002", -0.81)]),
        ];
        for (i, j, want) in expect {
            let mut got: Vec<(String, f64)> = ents[i][j]
                .terms
                .iter()
                .map(|&(id, c)| (render_real_label(idx.label(id)), c))
                .collect();
            let mut want: Vec<(String, f64)> =
                want.into_iter().map(|(s, c)| (s.to_string(), c)).collect();
            got.sort_by(|a, b| a.0.cmp(&b.0));
            want.sort_by(|a, b| a.0.cmp(&b.0));
            assert_eq!(got, want, "entry ({i},{j})");
            // symmetry
            assert_eq!(ents[i][j].terms, ents[j][i].terms);
        }
    }

    #[test]
    fn unit_g_localizes_to_the_moment_matrix() {
        let basis = basis_real(2, 2);
        let mut idx_a = MomentIndex::new(3, 4);
        let ids = moment_matrix(&basis, &mut idx_a).unwrap();
        let mut idx_b = MomentIndex::new(3, 4);
        let ents = localizing_matrix(&PolyR::constant(3, 1.0), &basis, &mut idx_b).unwrap();
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                assert_eq!(ents[i][j].terms.len(), 1);
                let (id, c) = ents[i][j].terms[0];
                assert_eq!(c, 1.0);
                assert_eq!(
                    idx_b.label(id),
                    idx_a.label(ids[i][j]),
                );
            }
        }
    }

    #[test]
    fn localizing_order_rejects_low_gamma() {
        let mut quartic = PolyR::new();
        quartic.add_term(RealMonomial::from_exps(vec![4, 0, 0]), 1.0);
        match localizing_order(1, &quartic) {
            Err(Error::OrderTooLow { gamma: 1, eta: 2 }) => {}
            other => panic!("expected order-too-low, got {other:?}"),
        }
        assert_eq!(localizing_order(2, &quartic).unwrap(), 0);
        let quadratic = vmag_poly(&VarLayout::new(2, 0), 1);
        assert_eq!(localizing_order(1, &quadratic).unwrap(), 0);
        assert_eq!(localizing_order(3, &quadratic).unwrap(), 2);
    }

    #[test]
    fn dense_basis_sizes_follow_the_binomial() {
        for n in 2..=6u64 {
            for gamma in 1..=3u32 {
                let len = basis_real(n as usize, gamma).len() as u64;
                assert_eq!(len, binomial(2 * n - 1 + gamma as u64, gamma as u64));
            }
        }
        assert_eq!(basis_real(10, 3).len(), 1540);
    }

    #[test]
    fn substituted_operating_point_is_feasible() {
        let case = case("case2");
        let decomp = decompose(&case);
        let v = crate::testutil::two_bus_operating_point(&case, Complex64::new(1.05, 0.0));
        assert!(v[1].norm() > case.buses[1].vmin && v[1].norm() < case.buses[1].vmax);

        for gamma in [vec![1, 1], vec![2, 2], vec![2, 1]] {
            let rel = assemble_real(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
            let y = lifted_point(&rel, &v);
            crate::testutil::assert_feasible(&rel.problem, &y, 1e-9, 1e-10);

            // lifted injections agree with the direct oracle
            let mats = build_matrices(&case);
            let s = injections(&mats.y, &v);
            for k in 0..case.n() {
                assert!((rel.inj_p[k].eval(&y) - s[k].re).abs() < 1e-9);
                assert!((rel.inj_q[k].eval(&y) - s[k].im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn relaxation_bounds_the_operating_cost_from_below() {
        let case = case("case2");
        let decomp = decompose(&case);
        let rel =
            assemble_real(&case, &decomp, &[1, 1], &AssemblyOptions::default()).unwrap();
        let sol = crate::sdpcore::solve(&rel.problem, &crate::sdpcore::SdpSettings::default())
            .unwrap();
        assert_eq!(sol.status, crate::sdpcore::SdpStatus::Optimal);

        let v = crate::testutil::two_bus_operating_point(&case, Complex64::new(1.05, 0.0));
        let y = lifted_point(&rel, &v);
        let point_cost: f64 =
            rel.cost_vars.iter().map(|cv| y[cv.var as usize]).sum();
        assert!(sol.objective <= point_cost + 1e-6 * point_cost.abs());
        // generation covers at least the fixed load
        let g = case.gen_at(0).unwrap();
        let load = case.buses[1].pd;
        assert!(sol.objective >= g.c1 * load * 0.9);
    }

    #[test]
    fn first_order_matrix_of_lifted_point_is_rank_one() {
        let case = case("case9");
        let decomp = decompose(&case);
        let gamma = vec![1; case.n()];
        let rel = assemble_real(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
        // flat start is not an operating point, but lifting any phasor vector
        // still produces rank-one first-order blocks by construction
        let v: Vec<Complex64> =
            (0..case.n()).map(|k| Complex64::from_polar(1.0, 0.01 * k as f64)).collect();
        let y = lifted_point(&rel, &v);
        for ci in 0..rel.cliques.len() {
            let m1 = rel.first_order_matrix(ci, &y);
            let eigs = m1.symmetric_eigen().eigenvalues;
            let mut sorted: Vec<f64> = eigs.iter().copied().collect();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(sorted[0] > 0.9);
            for &rest in &sorted[1..] {
                assert!(rest.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let case = case("case9");
        let decomp = decompose(&case);
        let mut gamma = vec![1; case.n()];
        gamma[3] = 2;
        gamma[5] = 2;
        let a = assemble_real(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
        let b = assemble_real(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
        assert_eq!(
            crate::sdpcore::export_sdpa(&a.problem),
            crate::sdpcore::export_sdpa(&b.problem)
        );
    }

    #[test]
    fn order_vector_must_match_and_be_positive() {
        let case = case("case2");
        let decomp = decompose(&case);
        assert!(assemble_real(&case, &decomp, &[1], &AssemblyOptions::default()).is_err());
        assert!(
            assemble_real(&case, &decomp, &[1, 0], &AssemblyOptions::default()).is_err()
        );
    }
}
