//! Relaxation in the lifted phasor variables z, kept Hermitian symbolically
//! and embedded into real blocks only at assembly time. No angle reference is
//! imposed; extraction rotates the recovered phasors afterwards.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::netcase::{build_matrices, objective_polynomial, quad_poly, NetworkCase, ObjectivePoly};
use crate::polymodel::{
    basis_complex_for_vars, lift_complex, lift_complex_pair, ComplexMonomial, ComplexPart,
    ComplexVarRef, LinExpr, MomentIndexC, PolyC,
};
use crate::sdpcore::{LinRow, SdpBlock, SdpProblem};
use crate::sparsity::{clique_bases_complex, clique_orders, CliqueDecomposition};
use crate::{Error, Result};

use super::{
    closed_neighborhoods, cost_schur_block, flow_schur_block, injection_limits, scalar_row,
    AssemblyOptions, BlockBuilder, CostVar,
};

/// Moment matrix over a conjugate-free basis: entry (a, b) references the
/// label (alpha_a, alpha_b); the row monomial is unconjugated, the column
/// conjugated.
pub fn moment_matrix_c(
    basis: &[ComplexMonomial],
    idx: &mut MomentIndexC,
) -> Result<Vec<Vec<ComplexVarRef>>> {
    let mut rows = Vec::with_capacity(basis.len());
    for a in basis {
        debug_assert!(a.beta().iter().all(|&e| e == 0));
        let mut row = Vec::with_capacity(basis.len());
        for b in basis {
            let label = ComplexMonomial::new(a.alpha().to_vec(), b.alpha().to_vec());
            row.push(idx.intern(&label)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Basis order for localizing a constraint of degree deg(g) at relaxation
/// order gamma, counting conjugated and plain powers together.
pub fn localizing_order_c(gamma: u32, g: &PolyC) -> Result<u32> {
    let eta = g.degree().div_ceil(2);
    if gamma < eta {
        return Err(Error::OrderTooLow { gamma, eta });
    }
    Ok(gamma - eta)
}

fn add_exps(x: &[u8], y: &[u8]) -> Vec<u8> {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

/// Localizing matrix of g: entry (a, b) lifts g * z^{alpha_a} * conj(z)^{alpha_b}
/// into (re, im) linear forms over the solver variables.
pub fn localizing_matrix_c(
    g: &PolyC,
    basis: &[ComplexMonomial],
    idx: &mut MomentIndexC,
) -> Result<Vec<Vec<(LinExpr, LinExpr)>>> {
    let mut rows = Vec::with_capacity(basis.len());
    for a in basis {
        let mut row = Vec::with_capacity(basis.len());
        for b in basis {
            let mut shifted = PolyC::new();
            for (delta, coeff) in g.terms() {
                let alpha = add_exps(delta.alpha(), a.alpha());
                let beta = add_exps(delta.beta(), b.alpha());
                shifted.add_term(ComplexMonomial::new(alpha, beta), coeff);
            }
            row.push(lift_complex_pair(&shifted, idx)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// PSD-preserving real embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.
pub fn hermitian_to_real(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let d = h.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = h[(i, j)].re;
            out[(i + d, j + d)] = h[(i, j)].re;
            out[(i, j + d)] = -h[(i, j)].im;
            out[(i + d, j)] = h[(i, j)].im;
        }
    }
    out
}

fn expr_magnitude(e: &LinExpr) -> f64 {
    e.terms.iter().map(|t| t.1.abs()).fold(e.constant.abs(), f64::max)
}

fn check_real_entry(re: &LinExpr, im: &LinExpr) -> Result<()> {
    let worst = expr_magnitude(im);
    if worst > 1e-9 * (1.0 + expr_magnitude(re)) {
        return Err(Error::NonHermitian {
            msg: format!("diagonal entry has imaginary magnitude {worst:.3e}"),
        });
    }
    Ok(())
}

/// Build the real block of a symbolic Hermitian matrix given per-entry
/// (re, im) expressions; one-dimensional matrices stay one-dimensional.
fn herm_block(entries: &[Vec<(LinExpr, LinExpr)>]) -> Result<SdpBlock> {
    let d = entries.len();
    if d == 1 {
        let (re, im) = &entries[0][0];
        check_real_entry(re, im)?;
        return Ok(scalar_row(re));
    }
    let mut b = BlockBuilder::new(2 * d);
    for i in 0..d {
        for j in i..d {
            let (re, im) = &entries[i][j];
            if i == j {
                check_real_entry(re, im)?;
                b.add_expr(i, i, re);
                b.add_expr(i + d, i + d, re);
            } else {
                b.add_expr(i, j, re);
                b.add_expr(i + d, j + d, re);
                b.add_expr(i, j + d, &im.negate());
                b.add_expr(j, i + d, im);
            }
        }
    }
    Ok(b.finish())
}

/// The (re, im) expressions of a single interned label.
fn vref_exprs(vref: &ComplexVarRef) -> (LinExpr, LinExpr) {
    let re = LinExpr::single(vref.re, 1.0);
    let im = match vref.im {
        Some(i) => LinExpr::single(i, if vref.conj { -1.0 } else { 1.0 }),
        None => LinExpr::zero(),
    };
    (re, im)
}

/// z_k * conj(z_k).
fn zmag_poly(n: usize, k: usize) -> PolyC {
    let mut a = vec![0u8; n];
    a[k] = 1;
    let mut p = PolyC::new();
    p.add_term(ComplexMonomial::new(a.clone(), a), Complex64::new(1.0, 0.0));
    p
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

pub struct ComplexRelaxation {
    pub problem: SdpProblem,
    pub index: MomentIndexC,
    pub cliques: Vec<Vec<usize>>,
    /// Clique-tree edges, carried over for solution stitching.
    pub tree_edges: Vec<(usize, usize)>,
    pub orders: Vec<u32>,
    /// Position of each clique's (embedded) moment matrix in `problem.blocks`.
    pub moment_blocks: Vec<usize>,
    /// Basis monomials of each clique's moment matrix, graded order.
    pub clique_monomials: Vec<Vec<ComplexMonomial>>,
    /// Lifted net active/reactive injection per bus, over solver variables.
    pub inj_p: Vec<LinExpr>,
    pub inj_q: Vec<LinExpr>,
    pub cost_vars: Vec<CostVar>,
    /// Slack variable of the sphere equality, when enabled.
    pub sphere_var: Option<u32>,
    /// Right-hand side of the sphere equality.
    pub sphere_rhs: f64,
    /// Variable ids below this are moment parts; epigraph variables and the
    /// sphere slack follow.
    pub n_moments: usize,
}

impl ComplexRelaxation {
    /// Numeric first-order moment matrix of a clique over [1, z_b..].
    pub fn first_order_matrix(&self, clique: usize, y: &[f64]) -> DMatrix<Complex64> {
        let d = self.cliques[clique].len() + 1;
        let monos = &self.clique_monomials[clique][..d];
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let label =
                    ComplexMonomial::new(monos[i].alpha().to_vec(), monos[j].alpha().to_vec());
                let vref = self.index.get(&label).expect("first-order moment interned");
                let sign = if vref.conj { -1.0 } else { 1.0 };
                let val = Complex64::new(
                    y[vref.re as usize],
                    vref.im.map_or(0.0, |i| sign * y[i as usize]),
                );
                out[(i, j)] = val;
                out[(j, i)] = val.conj();
            }
        }
        out
    }
}

pub fn assemble_complex(
    case: &NetworkCase,
    decomp: &CliqueDecomposition,
    gamma: &[u32],
    opts: &AssemblyOptions,
) -> Result<ComplexRelaxation> {
    let n = case.n();
    if gamma.len() != n {
        return Err(Error::Assembly {
            msg: format!("{} relaxation orders for {} buses", gamma.len(), n),
        });
    }
    if let Some(k) = gamma.iter().position(|&g| g == 0) {
        return Err(Error::Assembly { msg: format!("bus {k} has relaxation order 0") });
    }
    let mats = build_matrices(case);
    let orders = clique_orders(&decomp.cliques, gamma);
    let bases = clique_bases_complex(n, &decomp.cliques, &orders)?;
    let mut index = bases.index;
    let lim = injection_limits(case);
    let nbhd = closed_neighborhoods(case);

    let fp: Vec<PolyC> = (0..n).map(|k| quad_poly(&mats.h[k])).collect();
    let fq: Vec<PolyC> = (0..n).map(|k| quad_poly(&mats.ht[k])).collect();

    let mut blocks: Vec<SdpBlock> = Vec::new();
    let mut moment_blocks = Vec::with_capacity(decomp.cliques.len());
    for monos in &bases.monomials {
        let vrefs = moment_matrix_c(monos, &mut index)?;
        let d = monos.len();
        let mut entries = Vec::with_capacity(d);
        for i in 0..d {
            let mut row = Vec::with_capacity(d);
            for j in 0..d {
                row.push(vref_exprs(&vrefs[i][j]));
            }
            entries.push(row);
        }
        moment_blocks.push(blocks.len());
        blocks.push(herm_block(&entries)?);
    }

    let inj_p: Vec<LinExpr> =
        fp.iter().map(|p| lift_complex(p, &mut index)).collect::<Result<_>>()?;
    let inj_q: Vec<LinExpr> =
        fq.iter().map(|p| lift_complex(p, &mut index)).collect::<Result<_>>()?;

    // per-bus boxes, anchored as in the real hierarchy
    for k in 0..n {
        let gk = gamma[k];
        let own = basis_complex_for_vars(
            &decomp.cliques[decomp.clique_for(&[k])],
            n,
            gk - 1,
        );
        let b = &case.buses[k];
        let fv = zmag_poly(n, k);
        let g_lo = fv.add(&PolyC::constant(n, Complex64::new(-b.vmin * b.vmin, 0.0)));
        let g_hi = fv
            .scale(Complex64::new(-1.0, 0.0))
            .add(&PolyC::constant(n, Complex64::new(b.vmax * b.vmax, 0.0)));
        blocks.push(herm_block(&localizing_matrix_c(&g_lo, &own, &mut index)?)?);
        blocks.push(herm_block(&localizing_matrix_c(&g_hi, &own, &mut index)?)?);

        let inj_basis = if gk == 1 {
            vec![ComplexMonomial::constant(n)]
        } else {
            let ci = decomp
                .clique_covering(&nbhd[k])
                .unwrap_or_else(|| decomp.clique_for(&[k]));
            basis_complex_for_vars(&decomp.cliques[ci], n, gk - 1)
        };
        for (poly, lo, hi) in
            [(&fp[k], lim.plo[k], lim.phi[k]), (&fq[k], lim.qlo[k], lim.qhi[k])]
        {
            let g_lo = poly.add(&PolyC::constant(n, Complex64::new(-lo, 0.0)));
            let g_hi = poly
                .scale(Complex64::new(-1.0, 0.0))
                .add(&PolyC::constant(n, Complex64::new(hi, 0.0)));
            blocks.push(herm_block(&localizing_matrix_c(&g_lo, &inj_basis, &mut index)?)?);
            blocks.push(herm_block(&localizing_matrix_c(&g_hi, &inj_basis, &mut index)?)?);
        }
    }

    // directed flow limits
    for fm in &mats.flows {
        let line = &case.lines[fm.line];
        if line.s_max <= 0.0 {
            continue;
        }
        let fh = (&fm.f + &fm.f.adjoint()) * Complex64::new(0.5, 0.0);
        let fj = (&fm.f - &fm.f.adjoint()) * Complex64::new(0.0, -0.5);
        let p_poly = quad_poly(&fh);
        let q_poly = quad_poly(&fj);
        let lp = lift_complex(&p_poly, &mut index)?;
        let lq = lift_complex(&q_poly, &mut index)?;
        blocks.push(flow_schur_block(line.s_max, &lp, &lq));
        let o = gamma[fm.from].max(gamma[fm.to]);
        if o >= 2 && opts.quartic_at_order2 {
            let one = Complex64::new(1.0, 0.0);
            let mut g = PolyC::constant(n, one * line.s_max * line.s_max);
            g = g.add(&p_poly.mul(&p_poly).scale(-one));
            g = g.add(&q_poly.mul(&q_poly).scale(-one));
            let ci = decomp.clique_for(&[fm.from, fm.to]);
            let basis = basis_complex_for_vars(&decomp.cliques[ci], n, o - 2);
            blocks.push(herm_block(&localizing_matrix_c(&g, &basis, &mut index)?)?);
        }
    }

    let obj = objective_polynomial(case, &mats, opts.objective)?;
    let mut loss_expr: Option<LinExpr> = None;
    let mut cost_prep: Vec<CostPrep> = Vec::new();
    match &obj {
        ObjectivePoly::Loss(p) => {
            loss_expr = Some(lift_complex(p, &mut index)?);
        }
        ObjectivePoly::Cost(terms) => {
            for t in terms {
                let one = Complex64::new(1.0, 0.0);
                let pg_poly = t.injection.add(&PolyC::constant(n, one * t.pd));
                let mut pg = lift_complex(&t.injection, &mut index)?;
                pg.constant += t.pd;
                let quartic = if gamma[t.bus] >= 2 && opts.quartic_at_order2 {
                    let full = pg_poly
                        .mul(&pg_poly)
                        .scale(one * t.c2)
                        .add(&pg_poly.scale(one * t.c1))
                        .add(&PolyC::constant(n, one * t.c0));
                    Some(lift_complex(&full, &mut index)?)
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

    // optional sphere: lift the total squared magnitude before variable
    // layout freezes
    let sphere_lift = if opts.sphere {
        let mut total = PolyC::new();
        for k in 0..n {
            total = total.add(&zmag_poly(n, k));
        }
        Some(lift_complex(&total, &mut index)?)
    } else {
        None
    };

    let n_moments = index.len();
    let total_vars = n_moments + cost_prep.len() + usize::from(sphere_lift.is_some());
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

    let mut prob = SdpProblem::new(total_vars);
    prob.blocks = blocks;
    prob.eq.push(LinRow::new(vec![(0, 1.0)], 1.0));

    let vmax: Vec<f64> = case.buses.iter().map(|b| b.vmax).collect();
    let mut sphere_var = None;
    let mut sphere_rhs = 0.0;
    if let Some(e) = &sphere_lift {
        debug_assert_eq!(e.constant, 0.0);
        let s = (total_vars - 1) as u32;
        sphere_rhs = vmax.iter().map(|v| v * v).sum();
        let mut coeffs = e.terms.clone();
        coeffs.push((s, 1.0));
        prob.eq.push(LinRow::new(coeffs, sphere_rhs));
        prob.lo[s as usize] = 0.0;
        prob.hi[s as usize] = sphere_rhs;
        sphere_var = Some(s);
    }

    // variable 0 keeps infinite bounds: the normalization row already pins it
    // at 1, and a box touching that value exactly would leave the interior
    // point method no strictly feasible slack
    for (id, part) in index.parts().iter().enumerate().skip(1) {
        let (mono, is_im) = match part {
            ComplexPart::Re(m) => (m, false),
            ComplexPart::Im(m) => (m, true),
        };
        let mut bound = 1.0;
        for k in 0..n {
            let e = mono.alpha()[k] + mono.beta()[k];
            if e > 0 {
                bound *= vmax[k].powi(e as i32);
            }
        }
        prob.hi[id] = bound;
        // diagonal labels are moments of |z^alpha|^2
        prob.lo[id] = if !is_im && mono.is_diagonal() { 0.0 } else { -bound };
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
    Ok(ComplexRelaxation {
        problem: prob,
        index,
        cliques: decomp.cliques.clone(),
        tree_edges: decomp.tree_edges.clone(),
        orders,
        moment_blocks,
        clique_monomials: bases.monomials,
        inj_p,
        inj_q,
        cost_vars,
        sphere_var,
        sphere_rhs,
        n_moments,
    })
}

/// Substitute voltage phasors: every moment part evaluated at v, epigraph
/// variables at the exact generator cost, the sphere slack at its residual.
/// No rotation is applied; the relaxation is phase-invariant.
pub fn lifted_point(rel: &ComplexRelaxation, v: &[Complex64]) -> Vec<f64> {
    let mut y = vec![0.0; rel.problem.m];
    for (id, part) in rel.index.parts().iter().enumerate() {
        y[id] = match part {
            ComplexPart::Re(m) => m.eval(v).re,
            ComplexPart::Im(m) => m.eval(v).im,
        };
    }
    for cv in &rel.cost_vars {
        let pg = rel.inj_p[cv.bus].eval(&y) + cv.pd;
        y[cv.var as usize] = cv.c2 * pg * pg + cv.c1 * pg + cv.c0;
    }
    if let Some(s) = rel.sphere_var {
        let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        y[s as usize] = rel.sphere_rhs - total;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::netcase::{injections, parse_case, ObjectiveMode};
    use crate::polymodel::{basis_complex, binomial, render_complex_label};
    use crate::sdpcore::{solve, SdpSettings, SdpStatus};
    use crate::sparsity::{build_graph, chordal_extend, merge_cliques};

    fn case(name: &str) -> NetworkCase {
        parse_case(cases::by_name(name).unwrap()).unwrap()
    }

    fn decompose(case: &NetworkCase) -> CliqueDecomposition {
        merge_cliques(&chordal_extend(&build_graph(case)))
    }

    fn displayed(idx: &MomentIndexC, vref: &ComplexVarRef) -> String {
        let mono = match idx.part(vref.re) {
            ComplexPart::Re(m) => m.clone(),
            ComplexPart::Im(_) => unreachable!("re id always names a Re part"),
        };
        render_complex_label(&if vref.conj { mono.conj() } else { mono })
    }

    #[test]
    fn second_order_basis_matches_printed_sequence() {
        let basis = basis_complex(2, 2);
        let expect: Vec<Vec<u8>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        let got: Vec<Vec<u8>> = basis.iter().map(|m| m.alpha().to_vec()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn golden_moment_matrix_two_bus() {
        let basis = basis_complex(2, 2);
        assert_eq!(basis.len(), 6);
        let mut idx = MomentIndexC::new(2, 4);
        let vrefs = moment_matrix_c(&basis, &mut idx).unwrap();
        assert_eq!(displayed(&idx, &vrefs[0][0]), "ŷ_{00,00}");
        assert_eq!(displayed(&idx, &vrefs[1][2]), "ŷ_{10,01}");
        assert_eq!(displayed(&idx, &vrefs[2][1]), "ŷ_{01,10}");
        assert_eq!(displayed(&idx, &vrefs[5][5]), "ŷ_{02,02}");
        // conjugate symmetry: mirrored entries share the canonical label with
        // opposite orientation
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(vrefs[i][j].re, vrefs[j][i].re);
                assert_eq!(vrefs[i][j].im, vrefs[j][i].im);
                if i != j && vrefs[i][j].im.is_some() {
                    assert_ne!(vrefs[i][j].conj, vrefs[j][i].conj);
                }
            }
        }
        // diagonal labels carry no imaginary part
        for i in 0..6 {
            assert!(vrefs[i][i].im.is_none());
        }
    }

    #[test]
    fn golden_localizing_matrix_v2_lower_bound() {
        let n = 2;
        let g = zmag_poly(n, 1).add(&PolyC::constant(n, Complex64::new(-0.81, 0.0)));
        let basis = basis_complex(n, 1);
        assert_eq!(basis.len(), 3);
        let mut idx = MomentIndexC::new(n, 4);
        let ents = localizing_matrix_c(&g, &basis, &mut idx).unwrap();

        let lab = |a: &[u8], b: &[u8]| ComplexMonomial::new(a.to_vec(), b.to_vec());
        let expect: Vec<(usize, usize, Vec<(ComplexMonomial, f64)>)> = vec![
            (0, 0, vec![(lab(&[0, 1], &[0, 1]), 1.0), (lab(&[0, 0], &[0, 0]), -0.81)]),
            (0, 1, vec![(lab(&[0, 1], &[1, 1]), 1.0), (lab(&[0, 0], &[1, 0]), -0.81)]),
            (0, 2, vec![(lab(&[0, 1], &[0, 2]), 1.0), (lab(&[0, 0], &[0, 1]), -0.81)]),
            (1, 1, vec![(lab(&[1, 1], &[1, 1]), 1.0), (lab(&[1, 0], &[1, 0]), -0.81)]),
            (1, 2, vec![(lab(&[1, 1], &[0, 2]), 1.0), (lab(&[1, 0], &[0, 1]), -0.81)]),
            (2, 2, vec![(lab(&[0, 2], &[0, 2]), 1.0), (lab(&[0, 1], &[0, 1]), -0.81)]),
        ];
        for (i, j, want) in expect {
            let (re, im) = &ents[i][j];
            let mut want_re: std::collections::BTreeMap<u32, f64> = Default::default();
            let mut want_im: std::collections::BTreeMap<u32, f64> = Default::default();
            for (mono, c) in want {
                let vref = idx.get(&mono).unwrap();
                *want_re.entry(vref.re).or_insert(0.0) += c;
                if let Some(id) = vref.im {
                    let sign = if vref.conj { -1.0 } else { 1.0 };
                    *want_im.entry(id).or_insert(0.0) += sign * c;
                }
            }
            want_re.retain(|_, c| *c != 0.0);
            want_im.retain(|_, c| *c != 0.0);
            let got_re: std::collections::BTreeMap<u32, f64> = re.terms.iter().copied().collect();
            let got_im: std::collections::BTreeMap<u32, f64> = im.terms.iter().copied().collect();
            assert_eq!(got_re, want_re, "re of entry ({i},{j})");
            assert_eq!(got_im, want_im, "im of entry ({i},{j})");
        }
        // the pattern reads as printed
        assert_eq!(
            render_complex_label(&lab(&[0, 1], &[0, 1])),
            "ŷ_{01,01}"
        );
    }

    #[test]
    fn localizing_order_counts_conjugates() {
        let n = 2;
        let quartic = zmag_poly(n, 0).mul(&zmag_poly(n, 1));
        match localizing_order_c(1, &quartic) {
            Err(Error::OrderTooLow { gamma: 1, eta: 2 }) => {}
            other => panic!("expected order-too-low, got {other:?}"),
        }
        assert_eq!(localizing_order_c(2, &quartic).unwrap(), 0);
        assert_eq!(localizing_order_c(1, &zmag_poly(n, 0)).unwrap(), 0);
    }

    #[test]
    fn embedding_preserves_eigenvalues() {
        // [[1, i], [-i, 1]] has eigenvalues {0, 2}; the embedding doubles them
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 0)] = Complex64::new(1.0, 0.0);
        h[(0, 1)] = Complex64::new(0.0, 1.0);
        h[(1, 0)] = Complex64::new(0.0, -1.0);
        h[(1, 1)] = Complex64::new(1.0, 0.0);
        let r = hermitian_to_real(&h);
        let mut eigs: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eigs.iter().zip([0.0, 0.0, 2.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        // random Hermitian PSD stays PSD under the embedding
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = DMatrix::from_fn(4, 4, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let h = &a.adjoint() * &a;
            let r = hermitian_to_real(&h);
            let min = r
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |acc, &x| acc.min(x));
            assert!(min >= -1e-10);
        }
    }

    #[test]
    fn dense_basis_sizes_follow_the_binomial() {
        for n in 2..=6u64 {
            for gamma in 1..=3u32 {
                let len = basis_complex(n as usize, gamma).len() as u64;
                assert_eq!(len, binomial(n + gamma as u64, gamma as u64));
            }
        }
        assert_eq!(basis_complex(10, 3).len(), 286);
    }

    #[test]
    fn two_bus_moment_block_embeds_to_twelve() {
        let case = case("case2");
        let decomp = decompose(&case);
        let rel =
            assemble_complex(&case, &decomp, &[2, 2], &AssemblyOptions::default()).unwrap();
        assert_eq!(rel.problem.blocks[rel.moment_blocks[0]].dim, 12);
    }

    #[test]
    fn substituted_operating_point_is_feasible() {
        let case = case("case2");
        let decomp = decompose(&case);
        let v = crate::testutil::two_bus_operating_point(&case, Complex64::new(1.05, 0.0));

        for sphere in [false, true] {
            for gamma in [vec![1, 1], vec![2, 2], vec![2, 1]] {
                let opts = AssemblyOptions { sphere, ..AssemblyOptions::default() };
                let rel = assemble_complex(&case, &decomp, &gamma, &opts).unwrap();
                let y = lifted_point(&rel, &v);
                crate::testutil::assert_feasible(&rel.problem, &y, 1e-9, 1e-10);

                let mats = build_matrices(&case);
                let s = injections(&mats.y, &v);
                for k in 0..case.n() {
                    assert!((rel.inj_p[k].eval(&y) - s[k].re).abs() < 1e-9);
                    assert!((rel.inj_q[k].eval(&y) - s[k].im).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn substitution_is_phase_invariant() {
        let case = case("case2");
        let decomp = decompose(&case);
        let rel =
            assemble_complex(&case, &decomp, &[1, 1], &AssemblyOptions::default()).unwrap();
        let v = crate::testutil::two_bus_operating_point(&case, Complex64::new(1.05, 0.0));
        let rot = Complex64::from_polar(1.0, 0.7);
        let vr: Vec<Complex64> = v.iter().map(|z| z * rot).collect();
        let y = lifted_point(&rel, &vr);
        crate::testutil::assert_feasible(&rel.problem, &y, 1e-9, 1e-10);
    }

    #[test]
    fn first_order_hierarchies_agree_on_two_bus_losses() {
        let case = case("case2");
        let decomp = decompose(&case);
        let opts = AssemblyOptions {
            objective: ObjectiveMode::Loss,
            ..AssemblyOptions::default()
        };
        let rel_c = assemble_complex(&case, &decomp, &[1, 1], &opts).unwrap();
        let sol_c = solve(&rel_c.problem, &SdpSettings::default()).unwrap();
        assert_eq!(sol_c.status, SdpStatus::Optimal);

        let rel_r =
            crate::hierarchy::real::assemble_real(&case, &decomp, &[1, 1], &opts).unwrap();
        let sol_r = solve(&rel_r.problem, &SdpSettings::default()).unwrap();
        assert_eq!(sol_r.status, SdpStatus::Optimal);

        let denom = 1.0 + sol_r.objective.abs();
        assert!(
            (sol_r.objective - sol_c.objective).abs() / denom < 1e-6,
            "real {} vs complex {}",
            sol_r.objective,
            sol_c.objective
        );
    }

    #[test]
    fn sphere_leaves_the_first_order_bound_unchanged() {
        let case = case("case2");
        let decomp = decompose(&case);
        let base = AssemblyOptions {
            objective: ObjectiveMode::Loss,
            ..AssemblyOptions::default()
        };
        let plain = assemble_complex(&case, &decomp, &[1, 1], &base).unwrap();
        let with = assemble_complex(
            &case,
            &decomp,
            &[1, 1],
            &AssemblyOptions { sphere: true, ..base },
        )
        .unwrap();
        let a = solve(&plain.problem, &SdpSettings::default()).unwrap();
        let b = solve(&with.problem, &SdpSettings::default()).unwrap();
        assert_eq!(a.status, SdpStatus::Optimal);
        assert_eq!(b.status, SdpStatus::Optimal);
        assert!((a.objective - b.objective).abs() / (1.0 + a.objective.abs()) < 1e-6);
    }

    #[test]
    fn assembly_is_deterministic() {
        let case = case("case9");
        let decomp = decompose(&case);
        let mut gamma = vec![1; case.n()];
        gamma[2] = 2;
        gamma[6] = 2;
        let a = assemble_complex(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
        let b = assemble_complex(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
        assert_eq!(
            crate::sdpcore::export_sdpa(&a.problem),
            crate::sdpcore::export_sdpa(&b.problem)
        );
    }

    #[test]
    fn first_order_matrix_recovers_the_phasor_dyad() {
        let case = case("case9");
        let decomp = decompose(&case);
        let gamma = vec![1; case.n()];
        let rel = assemble_complex(&case, &decomp, &gamma, &AssemblyOptions::default()).unwrap();
        let v: Vec<Complex64> =
            (0..case.n()).map(|k| Complex64::from_polar(1.0, 0.05 * k as f64)).collect();
        let y = lifted_point(&rel, &v);
        for (ci, c) in rel.cliques.iter().enumerate() {
            let m1 = rel.first_order_matrix(ci, &y);
            // entry (0, 1 + i) is conj(z_i), entry (1+i, 1+j) is z_i conj(z_j)
            for (a, &ba) in c.iter().enumerate() {
                assert!((m1[(1 + a, 0)] - v[ba]).norm() < 1e-12);
                for (b2, &bb) in c.iter().enumerate() {
                    assert!((m1[(1 + a, 1 + b2)] - v[ba] * v[bb].conj()).norm() < 1e-12);
                }
            }
        }
    }
}
