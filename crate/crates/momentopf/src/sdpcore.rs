//! Block-diagonal semidefinite programming: problem representation, presolve,
//! a dense primal-dual interior-point solver with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps, and SDPA sparse-format interchange.
//!
//! Problems are in "dual" form: minimize c'y subject to per-block linear
//! matrix inequalities F_0 + sum_i y_i F_i >= 0, linear equalities A y = d,
//! and box bounds on y.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Sparse symmetric matrix stored as upper-triangle entries (i <= j), sorted,
/// deduplicated, zero-free.
#[derive(Clone, Debug, PartialEq)]
pub struct MatCoeff {
    entries: Vec<(usize, usize, f64)>,
}

impl MatCoeff {
    pub fn zero() -> Self {
        MatCoeff { entries: Vec::new() }
    }

    /// Build from arbitrary entries; (i, j) and (j, i) refer to the same
    /// symmetric slot and are summed.
    pub fn from_entries(raw: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map: std::collections::BTreeMap<(usize, usize), f64> =
            std::collections::BTreeMap::new();
        for (i, j, v) in raw {
            let key = (i.min(j), i.max(j));
            *map.entry(key).or_insert(0.0) += v;
        }
        let entries = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        MatCoeff { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn negated(&self) -> Self {
        MatCoeff { entries: self.entries.iter().map(|&(i, j, v)| (i, j, -v)).collect() }
    }

    pub fn norm_inf(&self) -> f64 {
        self.entries.iter().map(|e| e.2.abs()).fold(0.0, f64::max)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.1).max()
    }

    /// Dense symmetric realization.
    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Full-matrix entry list (off-diagonal entries appear mirrored), for
    /// Frobenius products against dense matrices.
    fn full(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }

    fn key(&self) -> Vec<(usize, usize, u64)> {
        self.entries.iter().map(|&(i, j, v)| (i, j, v.to_bits())).collect()
    }
}

/// One PSD constraint F_0 + sum_i y_i F_i >= 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpBlock {
    pub dim: usize,
    pub f0: MatCoeff,
    /// (variable id, coefficient matrix), sorted by variable id, unique.
    pub terms: Vec<(u32, MatCoeff)>,
}

impl SdpBlock {
    pub fn new(dim: usize, f0: MatCoeff, mut terms: Vec<(u32, MatCoeff)>) -> Self {
        terms.retain(|(_, m)| !m.is_empty());
        terms.sort_by_key(|t| t.0);
        SdpBlock { dim, f0, terms }
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.f0.to_dense(self.dim);
        for (var, coeff) in &self.terms {
            let w = y[*var as usize];
            if w != 0.0 {
                for &(i, j, v) in coeff.entries() {
                    m[(i, j)] += w * v;
                    if i != j {
                        m[(j, i)] += w * v;
                    }
                }
            }
        }
        m
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Solver { msg: "zero-dimension block".into() });
        }
        let check = |mc: &MatCoeff| -> Result<()> {
            if let Some(mx) = mc.max_index() {
                if mx >= self.dim {
                    return Err(Error::Solver { msg: "block entry out of range".into() });
                }
            }
            Ok(())
        };
        check(&self.f0)?;
        for (var, mc) in &self.terms {
            if *var as usize >= m {
                return Err(Error::Solver { msg: "block variable out of range".into() });
            }
            check(mc)?;
        }
        Ok(())
    }
}

/// One linear equality row: sum coeffs_i y_i = rhs.
#[derive(Clone, Debug, PartialEq)]
pub struct LinRow {
    pub coeffs: Vec<(u32, f64)>,
    pub rhs: f64,
}

impl LinRow {
    pub fn new(mut coeffs: Vec<(u32, f64)>, rhs: f64) -> Self {
        coeffs.retain(|c| c.1 != 0.0);
        coeffs.sort_by_key(|c| c.0);
        LinRow { coeffs, rhs }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * y[v as usize]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub m: usize,
    pub c: Vec<f64>,
    pub blocks: Vec<SdpBlock>,
    pub eq: Vec<LinRow>,
    /// Per-variable bounds; infinities mean unbounded.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SdpProblem {
    pub fn new(m: usize) -> Self {
        SdpProblem {
            m,
            c: vec![0.0; m],
            blocks: Vec::new(),
            eq: Vec::new(),
            lo: vec![f64::NEG_INFINITY; m],
            hi: vec![f64::INFINITY; m],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Solver { msg: "problem has no variables".into() });
        }
        if self.c.len() != self.m || self.lo.len() != self.m || self.hi.len() != self.m {
            return Err(Error::Solver { msg: "vector length mismatch".into() });
        }
        if self.blocks.is_empty() && self.eq.is_empty() {
            return Err(Error::Solver { msg: "no blocks and no equalities".into() });
        }
        for b in &self.blocks {
            b.validate(self.m)?;
        }
        for row in &self.eq {
            for &(v, _) in &row.coeffs {
                if v as usize >= self.m {
                    return Err(Error::Solver { msg: "equality variable out of range".into() });
                }
            }
        }
        for i in 0..self.m {
            if self.lo[i] > self.hi[i] {
                return Err(Error::Solver { msg: format!("empty bound box on variable {i}") });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Converged to `tol_near` but not to `tol`. Expected on problems whose
    /// optimal face is degenerate, like moment matrices pinned at rank one.
    NearOptimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

impl SdpStatus {
    /// The returned point is a usable optimum, exact or reduced-accuracy.
    pub fn is_solved(self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::NearOptimal)
    }
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::NearOptimal => "near_optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::MaxIter => "max_iter",
            SdpStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

/// Dual ray evidence for infeasibility: a dual-feasible direction with
/// positive dual objective and near-zero homogeneous residual.
#[derive(Clone, Debug)]
pub struct InfeasibilityRay {
    pub nu: Vec<f64>,
    pub dual_objective: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Minimum eigenvalue of each block of the input problem at y.
    pub block_min_eigs: Vec<f64>,
    /// Largest violation among PSD blocks, equalities, and bounds.
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Relative objective gap |primal - dual| / (1 + |primal| + |dual|).
    pub gap: f64,
    pub iterations: usize,
    pub solve_time: Duration,
    pub ray: Option<InfeasibilityRay>,
}

#[derive(Clone, Debug)]
pub struct SdpSettings {
    pub tol: f64,
    /// Fallback tolerance: when full convergence stalls, the best iterate is
    /// still reported as `NearOptimal` if it meets this bound.
    pub tol_near: f64,
    pub max_iter: usize,
    pub detect_infeasibility: bool,
    pub verbose: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            tol: 1e-8,
            tol_near: 1e-6,
            max_iter: 200,
            detect_infeasibility: true,
            verbose: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Presolve
// ---------------------------------------------------------------------------

/// Fold exact-negation block pairs into equality rows and reduce the
/// equality system to a maximal linearly independent row set; dependent rows
/// must be consistent. The variable space is unchanged, so solutions of the
/// presolved problem are solutions of the original.
pub fn presolve(p: &SdpProblem) -> Result<SdpProblem> {
    use std::collections::BTreeMap;
    type BlockKey = (usize, Vec<(usize, usize, u64)>, Vec<(u32, Vec<(usize, usize, u64)>)>);

    let key_of = |b: &SdpBlock, negate: bool| -> BlockKey {
        let f0 = if negate { b.f0.negated() } else { b.f0.clone() };
        let terms = b
            .terms
            .iter()
            .map(|(v, mc)| (*v, if negate { mc.negated().key() } else { mc.key() }))
            .collect();
        (b.dim, f0.key(), terms)
    };

    let mut consumed = vec![false; p.blocks.len()];
    let mut by_key: BTreeMap<BlockKey, Vec<usize>> = BTreeMap::new();
    for (bi, b) in p.blocks.iter().enumerate() {
        by_key.entry(key_of(b, false)).or_default().push(bi);
    }
    let mut new_eq: Vec<LinRow> = Vec::new();
    for (bi, b) in p.blocks.iter().enumerate() {
        if consumed[bi] {
            continue;
        }
        let neg_key = key_of(b, true);
        let partner = by_key
            .get(&neg_key)
            .and_then(|ids| ids.iter().copied().find(|&j| j != bi && !consumed[j]));
        let Some(pj) = partner else { continue };
        consumed[bi] = true;
        consumed[pj] = true;
        // every upper-triangle slot of the pair is pinned to zero:
        // F_0[i,j] + sum_v y_v F_v[i,j] = 0
        let mut slots: BTreeMap<(usize, usize), (f64, Vec<(u32, f64)>)> = BTreeMap::new();
        for &(i, j, v) in b.f0.entries() {
            slots.entry((i, j)).or_insert((0.0, Vec::new())).0 = v;
        }
        for (var, mc) in &b.terms {
            for &(i, j, v) in mc.entries() {
                slots.entry((i, j)).or_insert((0.0, Vec::new())).1.push((*var, v));
            }
        }
        for ((_, _), (f0v, coeffs)) in slots {
            new_eq.push(LinRow::new(coeffs, -f0v));
        }
    }

    let blocks: Vec<SdpBlock> = p
        .blocks
        .iter()
        .enumerate()
        .filter(|(i, _)| !consumed[*i])
        .map(|(_, b)| b.clone())
        .collect();

    // keep only rows independent of those already kept: dependent rows make
    // the equality Schur complement singular and let the multipliers drift
    // along its null space. Folding produces many of them, e.g. a pinned
    // scalar constraint reappearing as the corner of its localizing matrix.
    let mut pivots: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut eq = Vec::new();
    for row in p.eq.iter().cloned().chain(new_eq) {
        if row.coeffs.is_empty() {
            if row.rhs.abs() > 1e-12 {
                return Err(Error::Infeasible {
                    context: format!("contradictory constant constraint 0 = {}", row.rhs),
                });
            }
            continue;
        }
        let mut aug = DVector::<f64>::zeros(p.m + 1);
        for &(v, c) in &row.coeffs {
            aug[v as usize] += c;
        }
        aug[p.m] = row.rhs;
        let scale = row.coeffs.iter().map(|&(_, c)| c.abs()).fold(1.0, f64::max);
        for (col, pv) in &pivots {
            let f = aug[*col];
            if f != 0.0 {
                aug.axpy(-f, pv, 1.0);
            }
        }
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for i in 0..p.m {
            let a = aug[i].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs <= 1e-9 * scale {
            if aug[p.m].abs() > 1e-9 * (1.0 + row.rhs.abs()) {
                return Err(Error::Infeasible {
                    context: format!(
                        "equality row is a combination of earlier rows but its right-hand side differs by {:.3e}",
                        aug[p.m]
                    ),
                });
            }
            continue;
        }
        let piv = &aug / aug[best];
        pivots.push((best, piv));
        eq.push(row);
    }

    Ok(SdpProblem {
        m: p.m,
        c: p.c.clone(),
        blocks,
        eq,
        lo: p.lo.clone(),
        hi: p.hi.clone(),
    })
}

// ---------------------------------------------------------------------------
// Interior-point solver
// ---------------------------------------------------------------------------

pub fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    eig.iter().copied().fold(f64::INFINITY, f64::min)
}

struct BlockData {
    dim: usize,
    f0: DMatrix<f64>,
    vars: Vec<usize>,
    /// Full-matrix entries per variable, parallel to `vars`.
    ents: Vec<Vec<(usize, usize, f64)>>,
}

impl BlockData {
    fn build(b: &SdpBlock) -> Self {
        BlockData {
            dim: b.dim,
            f0: b.f0.to_dense(b.dim),
            vars: b.terms.iter().map(|(v, _)| *v as usize).collect(),
            ents: b.terms.iter().map(|(_, mc)| mc.full()).collect(),
        }
    }

    fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (k, &var) in self.vars.iter().enumerate() {
            let w = y[var];
            if w != 0.0 {
                for &(i, j, v) in &self.ents[k] {
                    m[(i, j)] += w * v;
                }
            }
        }
        m
    }

    fn frob(&self, k: usize, dense: &DMatrix<f64>) -> f64 {
        self.ents[k].iter().map(|&(i, j, v)| v * dense[(i, j)]).sum()
    }
}

/// Smallest eigenvalue of L^-1 M L^-T given the Cholesky factor L of a PD
/// matrix; used for step lengths to the PSD boundary.
fn scaled_min_eig(chol_l: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let t1 = chol_l.solve_lower_triangular(m).expect("nonsingular factor");
    let t2 = chol_l.solve_lower_triangular(&t1.transpose()).expect("nonsingular factor");
    min_eig_sym(&t2)
}

fn max_step_psd(chol_l: &DMatrix<f64>, delta: &DMatrix<f64>) -> f64 {
    let lam = scaled_min_eig(chol_l, delta);
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn chol_with_jitter(m: DMatrix<f64>, scale: f64) -> Option<Cholesky<f64, Dyn>> {
    chol_with_jitter_track(m, scale).map(|(ch, _)| ch)
}

/// Like `chol_with_jitter` but also reports the diagonal shift that was
/// needed, so callers can treat the shifted matrix as the system they solve.
fn chol_with_jitter_track(mut m: DMatrix<f64>, scale: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    let mut jitter = 0.0;
    for attempt in 0..6 {
        if attempt > 0 {
            let add = if jitter == 0.0 { 1e-12 * scale } else { jitter * 100.0 } - jitter;
            for i in 0..n {
                m[(i, i)] += add;
            }
            jitter += add;
        }
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some((ch, jitter));
        }
    }
    None
}

struct NtScaling {
    lam: DVector<f64>,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    chol_s_l: DMatrix<f64>,
    chol_x_l: DMatrix<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>, scale: f64) -> Option<NtScaling> {
    // jitter proportional to each factor's own magnitude: cone blocks span
    // several orders of magnitude within one problem
    let lx = chol_with_jitter(x.clone(), scale.max(x.amax()))?.l();
    let ls = chol_with_jitter(s.clone(), scale.max(s.amax()))?.l();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let lam = svd.singular_values;
    if lam.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return None;
    }
    let d = lam.len();
    let mut v_scaled = vt.transpose();
    let mut ut_scaled = u.transpose();
    for k in 0..d {
        let f = lam[k].sqrt();
        for i in 0..d {
            v_scaled[(i, k)] /= f;
        }
        for j in 0..d {
            ut_scaled[(k, j)] /= f;
        }
    }
    let r = &lx * v_scaled;
    let r_inv = ut_scaled * ls.transpose();
    let w = &r * r.transpose();
    Some(NtScaling { lam, r, r_inv, w, chol_s_l: ls, chol_x_l: lx })
}

#[derive(Clone)]
struct Workspace {
    y: Vec<f64>,
    nu: Vec<f64>,
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    // bound slacks/multipliers; meaningful only at finite-bound indices
    slo: Vec<f64>,
    shi: Vec<f64>,
    xlo: Vec<f64>,
    xhi: Vec<f64>,
}

struct StepDir {
    dy: Vec<f64>,
    dnu: Vec<f64>,
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dslo: Vec<f64>,
    dshi: Vec<f64>,
    dxlo: Vec<f64>,
    dxhi: Vec<f64>,
}

/// Solve the problem with the embedded interior-point method. Presolve runs
/// first; statuses other than hard input errors are reported in the solution.
pub fn solve(p: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    p.validate()?;
    let started = Instant::now();
    let sp = presolve(p)?;
    let mut sol = solve_ipm(&sp, settings);
    // report feasibility metrics against the caller's formulation
    sol.block_min_eigs = p.blocks.iter().map(|b| min_eig_sym(&b.eval(&sol.y))).collect();
    let mut pres = 0.0_f64;
    for &e in &sol.block_min_eigs {
        pres = pres.max(-e.min(0.0));
    }
    for row in &p.eq {
        pres = pres.max((row.eval(&sol.y) - row.rhs).abs());
    }
    for i in 0..p.m {
        if p.lo[i].is_finite() {
            pres = pres.max(p.lo[i] - sol.y[i]);
        }
        if p.hi[i].is_finite() {
            pres = pres.max(sol.y[i] - p.hi[i]);
        }
    }
    sol.primal_residual = pres.max(0.0);
    // the loop's internal residual can overstate true infeasibility (it
    // measures F(y) against the internal slack, not against the cone), so a
    // failed run whose recomputed metrics meet the fallback tolerance is
    // still a usable reduced-accuracy optimum
    if matches!(sol.status, SdpStatus::NumericalFailure | SdpStatus::MaxIter) {
        let scale_p = 1.0
            + p.blocks
                .iter()
                .map(|b| b.f0.entries().iter().map(|&(_, _, v)| v.abs()).fold(0.0, f64::max))
                .chain(p.eq.iter().map(|r| r.rhs.abs()))
                .fold(0.0, f64::max);
        let scale_d = 1.0 + p.c.iter().map(|c| c.abs()).fold(0.0, f64::max);
        if sol.primal_residual <= settings.tol_near * scale_p
            && sol.dual_residual <= settings.tol_near * scale_d
            && sol.gap <= settings.tol_near
        {
            sol.status = SdpStatus::NearOptimal;
        }
    }
    sol.solve_time = started.elapsed();
    Ok(sol)
}

fn solve_ipm(p: &SdpProblem, settings: &SdpSettings) -> SdpSolution {
    let m = p.m;
    let blocks: Vec<BlockData> = p.blocks.iter().map(BlockData::build).collect();
    let nb = blocks.len();
    let pr = p.eq.len();
    let lset: Vec<usize> = (0..m).filter(|&i| p.lo[i].is_finite()).collect();
    let uset: Vec<usize> = (0..m).filter(|&i| p.hi[i].is_finite()).collect();

    let data_scale: f64 = blocks
        .iter()
        .map(|b| b.f0.amax())
        .chain(p.eq.iter().map(|r| r.rhs.abs()))
        .fold(0.0, f64::max);
    let scale_p = 1.0 + data_scale;
    let scale_d = 1.0 + p.c.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let k_total: f64 =
        (blocks.iter().map(|b| b.dim).sum::<usize>() + lset.len() + uset.len()) as f64;

    // starting point: y centered in its box, blocks shifted into the cone
    let mut w = Workspace {
        y: (0..m)
            .map(|i| match (p.lo[i].is_finite(), p.hi[i].is_finite()) {
                (true, true) => 0.5 * (p.lo[i] + p.hi[i]),
                (true, false) => p.lo[i] + 1.0,
                (false, true) => p.hi[i] - 1.0,
                (false, false) => 0.0,
            })
            .collect(),
        nu: vec![0.0; pr],
        x: Vec::with_capacity(nb),
        s: Vec::with_capacity(nb),
        slo: vec![0.0; m],
        shi: vec![0.0; m],
        xlo: vec![0.0; m],
        xhi: vec![0.0; m],
    };
    let omega = 1.0 + 0.1 * scale_d;
    for b in &blocks {
        let e = b.eval(&w.y);
        let lam_min = min_eig_sym(&e);
        let target = 1.0 + 0.1 * scale_p;
        let shift = (target - lam_min).max(0.0);
        let mut s0 = e;
        for i in 0..b.dim {
            s0[(i, i)] += shift;
        }
        w.s.push(s0);
        w.x.push(DMatrix::identity(b.dim, b.dim) * omega);
    }
    for &i in &lset {
        w.slo[i] = (w.y[i] - p.lo[i]).max(1.0);
        w.xlo[i] = omega;
    }
    for &i in &uset {
        w.shi[i] = (p.hi[i] - w.y[i]).max(1.0);
        w.xhi[i] = omega;
    }

    // Gram matrix of the dual linear map y_i -> (F_i, bound rows). Recovered
    // dual directions are projected back onto the dual feasibility equation
    // through it: the algebraic recovery of dX from dy amplifies roundoff by
    // the squared scaling matrix, which grows without bound near degenerate
    // optima, while this projection is against fixed well-conditioned data.
    let gram_chol = {
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for bd in &blocks {
            let id = DMatrix::<f64>::identity(bd.dim, bd.dim);
            accumulate_schur(bd, &id, &mut gram);
        }
        for &i in &lset {
            gram[(i, i)] += 1.0;
        }
        for &i in &uset {
            gram[(i, i)] += 1.0;
        }
        for i in 0..m {
            if gram[(i, i)] == 0.0 {
                gram[(i, i)] = 1.0;
            }
        }
        let scale = 1.0 + gram.amax();
        chol_with_jitter(gram, scale)
    };

    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let mut ray = None;
    let mut stall = 0usize;
    // best iterate by worst relative KKT measure, for reduced-accuracy exits
    let mut best: Option<Workspace> = None;
    let mut best_metric = f64::INFINITY;
    let mut best_iter = 0usize;

    for iter in 0..settings.max_iter {
        iterations = iter + 1;

        // residuals
        let rp: Vec<DMatrix<f64>> = (0..nb).map(|b| blocks[b].eval(&w.y) - &w.s[b]).collect();
        let re: Vec<f64> = p.eq.iter().map(|r| r.rhs - r.eval(&w.y)).collect();
        let mut fx = vec![0.0; m]; // sum_b <F_i, X_b>
        for (b, bd) in blocks.iter().enumerate() {
            for (k, &var) in bd.vars.iter().enumerate() {
                fx[var] += bd.frob(k, &w.x[b]);
            }
        }
        let mut atnu = vec![0.0; m];
        for (r, row) in p.eq.iter().enumerate() {
            for &(v, cf) in &row.coeffs {
                atnu[v as usize] += cf * w.nu[r];
            }
        }
        let rd: Vec<f64> = (0..m)
            .map(|i| p.c[i] - fx[i] - atnu[i] - w.xlo[i] + w.xhi[i])
            .collect();
        let rlo: Vec<f64> = (0..m)
            .map(|i| if p.lo[i].is_finite() { w.y[i] - p.lo[i] - w.slo[i] } else { 0.0 })
            .collect();
        let rhi: Vec<f64> = (0..m)
            .map(|i| if p.hi[i].is_finite() { p.hi[i] - w.y[i] - w.shi[i] } else { 0.0 })
            .collect();

        let mut gap_inner = 0.0;
        for b in 0..nb {
            gap_inner += frob_dense(&w.x[b], &w.s[b]);
        }
        for &i in &lset {
            gap_inner += w.xlo[i] * w.slo[i];
        }
        for &i in &uset {
            gap_inner += w.xhi[i] * w.shi[i];
        }
        let mu = (gap_inner / k_total).max(0.0);

        let pobj: f64 = (0..m).map(|i| p.c[i] * w.y[i]).sum();
        let mut dobj: f64 = p.eq.iter().enumerate().map(|(r, row)| w.nu[r] * row.rhs).sum();
        for (b, bd) in blocks.iter().enumerate() {
            dobj -= frob_dense(&bd.f0, &w.x[b]);
        }
        for &i in &lset {
            dobj += p.lo[i] * w.xlo[i];
        }
        for &i in &uset {
            dobj -= p.hi[i] * w.xhi[i];
        }

        let rel_p = rp
            .iter()
            .map(|r| r.amax())
            .chain(re.iter().map(|v| v.abs()))
            .chain(rlo.iter().map(|v| v.abs()))
            .chain(rhi.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            / scale_p;
        let rel_d = rd.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale_d;
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let mu_rel = mu / (1.0 + pobj.abs());

        if settings.verbose {
            eprintln!(
                "iter {iter:3}  pobj {pobj:+.6e}  dobj {dobj:+.6e}  rp {rel_p:.2e}  rd {rel_d:.2e}  mu {mu:.2e}"
            );
        }

        // the objective bracket matters here, so a small mu alone does not
        // substitute for a small gap the way it does in the optimality test
        let metric = rel_p.max(rel_d).max(rel_gap);
        if metric < best_metric {
            best_metric = metric;
            best_iter = iter;
            best = Some(w.clone());
            if settings.verbose {
                eprintln!(
                    "      best: metric {metric:.2e} (rp {rel_p:.2e} rd {rel_d:.2e} gap {rel_gap:.2e} mu {mu_rel:.2e})"
                );
            }
        }

        if rel_p < settings.tol && rel_d < settings.tol && (rel_gap < settings.tol || mu_rel < settings.tol)
        {
            status = SdpStatus::Optimal;
            break;
        }
        // degenerate problems flatline well above full tolerance; stop once
        // the best iterate has not improved for a while
        if iter > best_iter + 25 {
            status = SdpStatus::NumericalFailure;
            break;
        }
        // complementarity exhausted to machine zero with residuals still
        // open: later iterations only wander
        if mu_rel < 1e-15 {
            status = SdpStatus::NumericalFailure;
            break;
        }

        if settings.detect_infeasibility && dobj > 1e4 * (scale_p + scale_d) {
            let hom: f64 = (0..m)
                .map(|i| (fx[i] + atnu[i] + w.xlo[i] - w.xhi[i]).abs())
                .fold(0.0, f64::max);
            if hom < 1e-7 * dobj {
                status = SdpStatus::Infeasible;
                ray = Some(InfeasibilityRay {
                    nu: w.nu.clone(),
                    dual_objective: dobj,
                    residual: hom,
                });
                break;
            }
        }
        if pobj < -1e8 * (scale_p + scale_d) && rel_p < settings.tol.sqrt() {
            status = SdpStatus::Unbounded;
            break;
        }

        // NT scaling per block
        let mut scalings = Vec::with_capacity(nb);
        let mut scaling_failed = false;
        for b in 0..nb {
            match nt_scaling(&w.x[b], &w.s[b], scale_p) {
                Some(sc) => scalings.push(sc),
                None => {
                    scaling_failed = true;
                    break;
                }
            }
        }
        if scaling_failed {
            status = SdpStatus::NumericalFailure;
            break;
        }

        // Schur complement M = H + D + delta I
        let mut h = DMatrix::<f64>::zeros(m, m);
        for (b, bd) in blocks.iter().enumerate() {
            accumulate_schur(bd, &scalings[b].w, &mut h);
        }
        // multiplier ratios are capped, consistently with the direction
        // formulas below, so pinned bounds cannot blow the Schur diagonal
        // past the range where refinement still converges
        let mut wlo = vec![0.0; m];
        let mut whi = vec![0.0; m];
        for &i in &lset {
            wlo[i] = (w.xlo[i] / w.slo[i]).min(1e12);
        }
        for &i in &uset {
            whi[i] = (w.xhi[i] / w.shi[i]).min(1e12);
        }
        let mut max_diag = 0.0_f64;
        for i in 0..m {
            h[(i, i)] += wlo[i] + whi[i];
            max_diag = max_diag.max(h[(i, i)]);
        }
        let mut m_mat = h;
        let Some((chol_m, m_jitter)) = chol_with_jitter_track(m_mat.clone(), 1.0 + max_diag)
        else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        if m_jitter > 0.0 {
            // the shifted matrix is the system actually factored; refining
            // against it converges where refining against the singular
            // original would diverge, and the shift acts as a proximal term
            for i in 0..m {
                m_mat[(i, i)] += m_jitter;
            }
        }
        // Z = M^-1 A^T and the equality Schur complement
        let (z, chol_b) = if pr > 0 {
            let mut at = DMatrix::<f64>::zeros(m, pr);
            for (r, row) in p.eq.iter().enumerate() {
                for &(v, cf) in &row.coeffs {
                    at[(v as usize, r)] = cf;
                }
            }
            let z = chol_m.solve(&at);
            let mut bm = DMatrix::<f64>::zeros(pr, pr);
            for (r, row) in p.eq.iter().enumerate() {
                for &(v, cf) in &row.coeffs {
                    for cidx in 0..pr {
                        bm[(r, cidx)] += cf * z[(v as usize, cidx)];
                    }
                }
            }
            let bscale = 1.0 + bm.amax();
            let Some(cb) = chol_with_jitter(bm, bscale) else {
                status = SdpStatus::NumericalFailure;
                break;
            };
            (z, Some(cb))
        } else {
            (DMatrix::zeros(m, 0), None)
        };

        // worst relative residual left by the direction solves this iteration
        let dir_quality = std::cell::Cell::new(0.0_f64);
        let kkt = |rhs: &DVector<f64>, re_v: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let solve_once = |rhs: &DVector<f64>, re_v: &DVector<f64>| {
                let y0 = chol_m.solve(rhs);
                if pr == 0 {
                    return (y0, DVector::zeros(0));
                }
                let mut t = re_v.clone();
                for (r, row) in p.eq.iter().enumerate() {
                    for &(v, cf) in &row.coeffs {
                        t[r] -= cf * y0[v as usize];
                    }
                }
                let dnu = chol_b.as_ref().unwrap().solve(&t);
                let dy = y0 + &z * &dnu;
                (dy, dnu)
            };
            let (mut dy, mut dnu) = solve_once(rhs, re_v);
            // iterative refinement against the (regularized) condensed
            // system; the factorization matches it, so each pass contracts
            let rhs_scale = 1.0 + rhs.amax();
            let mut res = f64::INFINITY;
            for pass in 0..7 {
                let mut res_y = rhs.clone() - &m_mat * &dy;
                if pr > 0 {
                    for (r, row) in p.eq.iter().enumerate() {
                        for &(v, cf) in &row.coeffs {
                            res_y[v as usize] += cf * dnu[r];
                        }
                    }
                }
                let mut res_e = re_v.clone();
                for (r, row) in p.eq.iter().enumerate() {
                    for &(v, cf) in &row.coeffs {
                        res_e[r] -= cf * dy[v as usize];
                    }
                }
                res = res_y.amax().max(res_e.amax());
                if res <= 1e-12 * rhs_scale || pass == 6 {
                    break;
                }
                let (cy, cnu) = solve_once(&res_y, &res_e);
                dy += cy;
                dnu += cnu;
            }
            dir_quality.set(dir_quality.get().max(res / rhs_scale));
            (dy, dnu)
        };

        let assemble_dir = |g_blocks: &[DMatrix<f64>],
                            glo: &[f64],
                            ghi: &[f64]|
         -> StepDir {
            // rhs_i = -rd_i + sum_b <F_i, R G R^T - W rp W>_b
            //         + glo_i - wlo_i rlo_i - ghi_i + whi_i rhi_i
            let mut rhs = DVector::<f64>::zeros(m);
            for i in 0..m {
                rhs[i] = -rd[i] + glo[i] - wlo[i] * rlo[i] - ghi[i] + whi[i] * rhi[i];
            }
            let mut u_store = Vec::with_capacity(nb);
            for (b, bd) in blocks.iter().enumerate() {
                let sc = &scalings[b];
                let rgr = &sc.r * &g_blocks[b] * sc.r.transpose();
                let wrw = &sc.w * &rp[b] * &sc.w;
                let u = rgr - wrw;
                for (k, &var) in bd.vars.iter().enumerate() {
                    rhs[var] += bd.frob(k, &u);
                }
                u_store.push(u);
            }
            let re_v = DVector::from_vec(re.clone());
            let (dy, dnu) = kkt(&rhs, &re_v);
            let mut ds = Vec::with_capacity(nb);
            let mut dx = Vec::with_capacity(nb);
            for (b, bd) in blocks.iter().enumerate() {
                let mut dsb = rp[b].clone();
                for (k, &var) in bd.vars.iter().enumerate() {
                    let wv = dy[var];
                    if wv != 0.0 {
                        for &(i, j, v) in &bd.ents[k] {
                            dsb[(i, j)] += wv * v;
                        }
                    }
                }
                let sc = &scalings[b];
                let dxb = &u_store[b] + &sc.w * &rp[b] * &sc.w - &sc.w * &dsb * &sc.w;
                ds.push(dsb);
                dx.push(dxb);
            }
            let mut dslo = vec![0.0; m];
            let mut dshi = vec![0.0; m];
            let mut dxlo = vec![0.0; m];
            let mut dxhi = vec![0.0; m];
            for &i in &lset {
                dslo[i] = dy[i] + rlo[i];
                dxlo[i] = glo[i] - wlo[i] * dslo[i];
            }
            for &i in &uset {
                dshi[i] = -dy[i] + rhi[i];
                dxhi[i] = ghi[i] - whi[i] * dshi[i];
            }
            // project the dual direction onto the dual feasibility equation
            if let Some(gc) = &gram_chol {
                let mut ferr = DVector::<f64>::zeros(m);
                for i in 0..m {
                    ferr[i] = rd[i] - dxlo[i] + dxhi[i];
                }
                for (r, row) in p.eq.iter().enumerate() {
                    for &(v, cf) in &row.coeffs {
                        ferr[v as usize] -= cf * dnu[r];
                    }
                }
                for (b, bd) in blocks.iter().enumerate() {
                    for (k, &var) in bd.vars.iter().enumerate() {
                        ferr[var] -= bd.frob(k, &dx[b]);
                    }
                }
                let alpha = gc.solve(&ferr);
                for (b, bd) in blocks.iter().enumerate() {
                    for (k, &var) in bd.vars.iter().enumerate() {
                        let a = alpha[var];
                        if a != 0.0 {
                            for &(i, j, v) in &bd.ents[k] {
                                dx[b][(i, j)] += a * v;
                            }
                        }
                    }
                }
                for &i in &lset {
                    dxlo[i] += alpha[i];
                }
                for &i in &uset {
                    dxhi[i] -= alpha[i];
                }
            }
            StepDir {
                dy: dy.iter().copied().collect(),
                dnu: dnu.iter().copied().collect(),
                dx,
                ds,
                dslo,
                dshi,
                dxlo,
                dxhi,
            }
        };

        // predictor: sigma = 0, no corrector
        let g_aff: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| {
                let d = blocks[b].dim;
                let mut g = DMatrix::zeros(d, d);
                for i in 0..d {
                    g[(i, i)] = -scalings[b].lam[i];
                }
                g
            })
            .collect();
        let mut glo_aff = vec![0.0; m];
        let mut ghi_aff = vec![0.0; m];
        for &i in &lset {
            glo_aff[i] = -w.xlo[i];
        }
        for &i in &uset {
            ghi_aff[i] = -w.xhi[i];
        }
        let aff = assemble_dir(&g_aff, &glo_aff, &ghi_aff);

        let (ap_aff, ad_aff) = step_lengths(&w, &blocks, &scalings, &aff, &lset, &uset, 1.0);
        let mut gap_aff = 0.0;
        for b in 0..nb {
            let xn = &w.x[b] + &aff.dx[b] * ad_aff;
            let sn = &w.s[b] + &aff.ds[b] * ap_aff;
            gap_aff += frob_dense(&xn, &sn);
        }
        for &i in &lset {
            gap_aff += (w.xlo[i] + ad_aff * aff.dxlo[i]) * (w.slo[i] + ap_aff * aff.dslo[i]);
        }
        for &i in &uset {
            gap_aff += (w.xhi[i] + ad_aff * aff.dxhi[i]) * (w.shi[i] + ap_aff * aff.dshi[i]);
        }
        let mu_aff = (gap_aff / k_total).max(0.0);
        let mut sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(1e-8, 1.0) } else { 1e-8 };
        // complementarity must not outrun feasibility: once mu drops far
        // below the residuals the centering term vanishes and the lagging
        // residual stops contracting, so hold mu back until they catch up
        if mu_rel < 1e-4 * rel_p.max(rel_d) {
            sigma = sigma.max(0.5);
        }

        // corrector
        let g_corr: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| {
                let sc = &scalings[b];
                let d = blocks[b].dim;
                let dx_s = &sc.r_inv * &aff.dx[b] * sc.r_inv.transpose();
                let ds_s = sc.r.transpose() * &aff.ds[b] * &sc.r;
                let cross = (&dx_s * &ds_s + &ds_s * &dx_s) * 0.5;
                let mut g = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let numer = if i == j {
                            sigma * mu - sc.lam[i] * sc.lam[i] - cross[(i, j)]
                        } else {
                            -cross[(i, j)]
                        };
                        g[(i, j)] = 2.0 * numer / (sc.lam[i] + sc.lam[j]);
                    }
                }
                g
            })
            .collect();
        let mut glo_c = vec![0.0; m];
        let mut ghi_c = vec![0.0; m];
        for &i in &lset {
            glo_c[i] = (sigma * mu - w.xlo[i] * w.slo[i] - aff.dxlo[i] * aff.dslo[i]) / w.slo[i];
        }
        for &i in &uset {
            ghi_c[i] = (sigma * mu - w.xhi[i] * w.shi[i] - aff.dxhi[i] * aff.dshi[i]) / w.shi[i];
        }
        let dir = assemble_dir(&g_corr, &glo_c, &ghi_c);

        let (ap, ad) = step_lengths(&w, &blocks, &scalings, &dir, &lset, &uset, 0.99);
        if settings.verbose {
            let mut adyre = 0.0_f64;
            for (r, row) in p.eq.iter().enumerate() {
                let mut v = -re[r];
                for &(vv, cf) in &row.coeffs {
                    v += cf * dir.dy[vv as usize];
                }
                adyre = adyre.max(v.abs());
            }
            let bmax = rp.iter().map(|r| r.amax()).fold(0.0, f64::max);
            let emax = re.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let lmax = rlo
                .iter()
                .chain(rhi.iter())
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            eprintln!(
                "      ap {ap:.2e} ad {ad:.2e} dirq {:.2e} |Ady-re| {adyre:.2e} bres {bmax:.2e} eres {emax:.2e} boxres {lmax:.2e}",
                dir_quality.get()
            );
        }
        if !ap.is_finite() || !ad.is_finite() || dir.dy.iter().any(|v| !v.is_finite()) {
            status = SdpStatus::NumericalFailure;
            break;
        }
        // a direction the factorization could not solve to reasonable
        // accuracy moves the iterate arbitrarily; stop at the best point
        if dir_quality.get() > 1e-4 {
            status = SdpStatus::NumericalFailure;
            break;
        }
        if ap < 1e-8 && ad < 1e-8 {
            stall += 1;
            if stall >= 3 {
                status = SdpStatus::NumericalFailure;
                break;
            }
        } else {
            stall = 0;
        }

        for i in 0..m {
            w.y[i] += ap * dir.dy[i];
        }
        for r in 0..pr {
            w.nu[r] += ad * dir.dnu[r];
        }
        for b in 0..nb {
            w.s[b] += &dir.ds[b] * ap;
            w.x[b] += &dir.dx[b] * ad;
            // keep the cone iterates exactly symmetric; additive updates
            // otherwise accumulate drift that poisons late factorizations
            symmetrize(&mut w.s[b]);
            symmetrize(&mut w.x[b]);
        }
        for &i in &lset {
            w.slo[i] += ap * dir.dslo[i];
            w.xlo[i] += ad * dir.dxlo[i];
        }
        for &i in &uset {
            w.shi[i] += ap * dir.dshi[i];
            w.xhi[i] += ad * dir.dxhi[i];
        }
    }

    // a failed run still ends at its most converged iterate, and one inside
    // the fallback tolerance is a usable reduced-accuracy optimum
    if matches!(status, SdpStatus::MaxIter | SdpStatus::NumericalFailure) {
        if let Some(b) = best {
            w = b;
        }
        if best_metric <= settings.tol_near {
            status = SdpStatus::NearOptimal;
        }
    }

    // final metrics on the presolved formulation
    let pobj: f64 = (0..m).map(|i| p.c[i] * w.y[i]).sum();
    let mut dobj: f64 = p.eq.iter().enumerate().map(|(r, row)| w.nu[r] * row.rhs).sum();
    for (b, bd) in blocks.iter().enumerate() {
        dobj -= frob_dense(&bd.f0, &w.x[b]);
    }
    for &i in &lset {
        dobj += p.lo[i] * w.xlo[i];
    }
    for &i in &uset {
        dobj -= p.hi[i] * w.xhi[i];
    }
    let mut fx = vec![0.0; m];
    for (b, bd) in blocks.iter().enumerate() {
        for (k, &var) in bd.vars.iter().enumerate() {
            fx[var] += bd.frob(k, &w.x[b]);
        }
    }
    let mut atnu = vec![0.0; m];
    for (r, row) in p.eq.iter().enumerate() {
        for &(v, cf) in &row.coeffs {
            atnu[v as usize] += cf * w.nu[r];
        }
    }
    let dual_residual = (0..m)
        .map(|i| (p.c[i] - fx[i] - atnu[i] - w.xlo[i] + w.xhi[i]).abs())
        .fold(0.0, f64::max);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

    SdpSolution {
        status,
        y: w.y,
        objective: pobj,
        dual_objective: dobj,
        block_min_eigs: Vec::new(),
        primal_residual: 0.0,
        dual_residual,
        gap,
        iterations,
        solve_time: Duration::ZERO,
        ray,
    }
}

fn frob_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Accumulate H_ij += <F_i, W F_j W> for all variable pairs of one block.
fn accumulate_schur(bd: &BlockData, w: &DMatrix<f64>, h: &mut DMatrix<f64>) {
    let d = bd.dim;
    let ws = w.as_slice();
    let mut t = vec![0.0f64; d * d];
    for (kj, &vj) in bd.vars.iter().enumerate() {
        t.iter_mut().for_each(|x| *x = 0.0);
        for &(r, s, v) in &bd.ents[kj] {
            // T += v * W[:,r] W[:,s]^T
            let col_r = &ws[r * d..(r + 1) * d];
            let col_s = &ws[s * d..(s + 1) * d];
            for b in 0..d {
                let f = v * col_s[b];
                if f != 0.0 {
                    let tcol = &mut t[b * d..(b + 1) * d];
                    for a in 0..d {
                        tcol[a] += f * col_r[a];
                    }
                }
            }
        }
        for (ki, &vi) in bd.vars.iter().enumerate() {
            if vi > vj {
                continue;
            }
            let mut acc = 0.0;
            for &(a, bb, v) in &bd.ents[ki] {
                acc += v * t[bb * d + a];
            }
            h[(vi, vj)] += acc;
            if vi != vj {
                h[(vj, vi)] += acc;
            }
        }
    }
}

fn step_lengths(
    w: &Workspace,
    blocks: &[BlockData],
    scalings: &[NtScaling],
    dir: &StepDir,
    lset: &[usize],
    uset: &[usize],
    frac: f64,
) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for b in 0..blocks.len() {
        ap = ap.min(max_step_psd(&scalings[b].chol_s_l, &dir.ds[b]));
        ad = ad.min(max_step_psd(&scalings[b].chol_x_l, &dir.dx[b]));
    }
    for &i in lset {
        if dir.dslo[i] < 0.0 {
            ap = ap.min(-w.slo[i] / dir.dslo[i]);
        }
        if dir.dxlo[i] < 0.0 {
            ad = ad.min(-w.xlo[i] / dir.dxlo[i]);
        }
    }
    for &i in uset {
        if dir.dshi[i] < 0.0 {
            ap = ap.min(-w.shi[i] / dir.dshi[i]);
        }
        if dir.dxhi[i] < 0.0 {
            ad = ad.min(-w.xhi[i] / dir.dxhi[i]);
        }
    }
    ((frac * ap).min(1.0), (frac * ad).min(1.0))
}

// ---------------------------------------------------------------------------
// SDPA sparse format
// ---------------------------------------------------------------------------

/// Export to SDPA sparse (.dat-s) text. Matrix blocks of dimension >= 2 come
/// first in problem order; all 1x1 blocks, equality rows (as +/- pairs), and
/// finite bounds are packed into one trailing diagonal block. SDPA's
/// constant matrix is the negation of ours.
pub fn export_sdpa(p: &SdpProblem) -> String {
    let mut sizes: Vec<i64> = Vec::new();
    // (block number, i, j, var id or None for F0, value) with 1-based indices
    let mut entries: Vec<(usize, usize, usize, Option<u32>, f64)> = Vec::new();

    let mut blkno = 0usize;
    for b in p.blocks.iter().filter(|b| b.dim >= 2) {
        blkno += 1;
        sizes.push(b.dim as i64);
        for &(i, j, v) in b.f0.entries() {
            entries.push((blkno, i + 1, j + 1, None, -v));
        }
        for (var, mc) in &b.terms {
            for &(i, j, v) in mc.entries() {
                entries.push((blkno, i + 1, j + 1, Some(*var), v));
            }
        }
    }

    let mut diag: Vec<(Option<f64>, Vec<(u32, f64)>)> = Vec::new(); // (f0, terms)
    for b in p.blocks.iter().filter(|b| b.dim == 1) {
        let f0 = b.f0.entries().first().map(|e| e.2);
        let terms: Vec<(u32, f64)> = b
            .terms
            .iter()
            .filter_map(|(v, mc)| mc.entries().first().map(|e| (*v, e.2)))
            .collect();
        diag.push((f0, terms));
    }
    for row in &p.eq {
        diag.push((Some(-row.rhs), row.coeffs.clone()));
        diag.push((
            Some(row.rhs),
            row.coeffs.iter().map(|&(v, c)| (v, -c)).collect(),
        ));
    }
    for i in 0..p.m {
        if p.lo[i].is_finite() {
            diag.push((Some(-p.lo[i]), vec![(i as u32, 1.0)]));
        }
    }
    for i in 0..p.m {
        if p.hi[i].is_finite() {
            diag.push((Some(p.hi[i]), vec![(i as u32, -1.0)]));
        }
    }
    if !diag.is_empty() {
        blkno += 1;
        sizes.push(-(diag.len() as i64));
        for (pos, (f0, terms)) in diag.iter().enumerate() {
            let ij = pos + 1;
            if let Some(v) = f0 {
                if *v != 0.0 {
                    entries.push((blkno, ij, ij, None, -v));
                }
            }
            for &(var, c) in terms {
                if c != 0.0 {
                    entries.push((blkno, ij, ij, Some(var), c));
                }
            }
        }
    }

    entries.sort_by(|a, b| {
        (a.0, a.1, a.2, a.3.map_or(0, |v| v as i64 + 1))
            .cmp(&(b.0, b.1, b.2, b.3.map_or(0, |v| v as i64 + 1)))
    });

    let mut out = String::new();
    let _ = writeln!(out, "{}", p.m);
    let _ = writeln!(out, "{}", sizes.len());
    let size_line: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{}", size_line.join(" "));
    let c_line: Vec<String> = p.c.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", c_line.join(" "));
    for (blk, i, j, var, v) in entries {
        let k = var.map_or(0, |v| v as usize + 1);
        let _ = writeln!(out, "{k} {blk} {i} {j} {v:e}");
    }
    out
}

/// Parse SDPA sparse text back into a problem. Diagonal blocks become 1x1
/// blocks in diagonal order, so re-exporting reproduces the text bit for bit.
pub fn import_sdpa(text: &str) -> Result<SdpProblem> {
    let mut tokens: Vec<&str> = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with('"') || t.starts_with('*') {
            continue;
        }
        tokens.extend(t.split_whitespace());
    }
    let mut pos = 0usize;
    fn take<'a>(tokens: &[&'a str], pos: &mut usize, what: &str) -> Result<&'a str> {
        let t = tokens.get(*pos).copied().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of SDPA text, expected {what}"),
        })?;
        *pos += 1;
        Ok(t)
    }
    let parse_usize = |t: &str, what: &str| -> Result<usize> {
        t.parse().map_err(|_| Error::Parse { line: 0, msg: format!("bad {what}: {t:?}") })
    };
    let parse_f64 = |t: &str, what: &str| -> Result<f64> {
        t.parse().map_err(|_| Error::Parse { line: 0, msg: format!("bad {what}: {t:?}") })
    };

    let m = parse_usize(take(&tokens, &mut pos, "variable count")?, "variable count")?;
    let nblocks = parse_usize(take(&tokens, &mut pos, "block count")?, "block count")?;
    let mut sizes = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let t = take(&tokens, &mut pos, "block size")?;
        let s: i64 = t
            .parse()
            .map_err(|_| Error::Parse { line: 0, msg: format!("bad block size: {t:?}") })?;
        if s == 0 {
            return Err(Error::Parse { line: 0, msg: "zero block size".into() });
        }
        sizes.push(s);
    }
    let mut c = Vec::with_capacity(m);
    for _ in 0..m {
        c.push(parse_f64(take(&tokens, &mut pos, "objective value")?, "objective value")?);
    }

    // block layout: positive size d >= 2 -> one matrix block; size 1 or
    // negative size -d -> d consecutive 1x1 blocks
    struct Slot {
        first: usize,
        matrix: bool,
        dim: usize,
    }
    let mut slots = Vec::with_capacity(nblocks);
    let mut nout = 0usize;
    for &s in &sizes {
        if s >= 2 {
            slots.push(Slot { first: nout, matrix: true, dim: s as usize });
            nout += 1;
        } else {
            let d = s.unsigned_abs() as usize;
            slots.push(Slot { first: nout, matrix: false, dim: d });
            nout += d;
        }
    }
    let mut f0: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nout];
    let mut terms: Vec<std::collections::BTreeMap<u32, Vec<(usize, usize, f64)>>> =
        vec![std::collections::BTreeMap::new(); nout];
    let mut dims = vec![1usize; nout];
    for slot in &slots {
        if slot.matrix {
            dims[slot.first] = slot.dim;
        }
    }

    while pos < tokens.len() {
        let k = parse_usize(take(&tokens, &mut pos, "matrix number")?, "matrix number")?;
        let blk = parse_usize(take(&tokens, &mut pos, "block number")?, "block number")?;
        let i = parse_usize(take(&tokens, &mut pos, "row index")?, "row index")?;
        let j = parse_usize(take(&tokens, &mut pos, "column index")?, "column index")?;
        let v = parse_f64(take(&tokens, &mut pos, "entry value")?, "entry value")?;
        if blk == 0 || blk > slots.len() {
            return Err(Error::Parse { line: 0, msg: format!("block number {blk} out of range") });
        }
        if k > m {
            return Err(Error::Parse { line: 0, msg: format!("matrix number {k} out of range") });
        }
        let slot = &slots[blk - 1];
        let (target, ei, ej) = if slot.matrix {
            if i == 0 || j == 0 || i > slot.dim || j > slot.dim {
                return Err(Error::Parse { line: 0, msg: "entry index out of range".into() });
            }
            (slot.first, i - 1, j - 1)
        } else {
            if i != j || i == 0 || i > slot.dim {
                return Err(Error::Parse {
                    line: 0,
                    msg: "diagonal block entry must be on the diagonal".into(),
                });
            }
            (slot.first + i - 1, 0, 0)
        };
        if k == 0 {
            f0[target].push((ei, ej, -v));
        } else {
            terms[target].entry((k - 1) as u32).or_default().push((ei, ej, v));
        }
    }

    let mut problem = SdpProblem::new(m.max(1));
    problem.m = m;
    problem.c = c;
    problem.lo = vec![f64::NEG_INFINITY; m];
    problem.hi = vec![f64::INFINITY; m];
    for idx in 0..nout {
        let block_terms: Vec<(u32, MatCoeff)> = std::mem::take(&mut terms[idx])
            .into_iter()
            .map(|(v, ents)| (v, MatCoeff::from_entries(ents)))
            .collect();
        problem.blocks.push(SdpBlock::new(
            dims[idx],
            MatCoeff::from_entries(std::mem::take(&mut f0[idx])),
            block_terms,
        ));
    }
    problem.validate()?;
    Ok(problem)
}

/// Parse the xVec section of an SDPA solver's output and re-derive every
/// quality metric from the problem itself.
pub fn import_sdpa_solution(text: &str, p: &SdpProblem) -> Result<SdpSolution> {
    let marker = text.find("xVec").ok_or(Error::Parse {
        line: 0,
        msg: "no xVec section in solver output".into(),
    })?;
    let rest = &text[marker..];
    let open = rest.find('{').ok_or(Error::Parse {
        line: 0,
        msg: "xVec section has no opening brace".into(),
    })?;
    let close = rest[open..].find('}').ok_or(Error::Parse {
        line: 0,
        msg: "xVec section has no closing brace".into(),
    })? + open;
    let body = &rest[open + 1..close];
    let mut y = Vec::new();
    for tok in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Parse { line: 0, msg: format!("bad xVec value {tok:?}") })?;
        y.push(v);
    }
    if y.len() != p.m {
        return Err(Error::Solver {
            msg: format!("solution has {} values, problem has {} variables", y.len(), p.m),
        });
    }
    let objective: f64 = (0..p.m).map(|i| p.c[i] * y[i]).sum();
    let block_min_eigs: Vec<f64> =
        p.blocks.iter().map(|b| min_eig_sym(&b.eval(&y))).collect();
    let mut pres = 0.0_f64;
    for &e in &block_min_eigs {
        pres = pres.max(-e.min(0.0));
    }
    for row in &p.eq {
        pres = pres.max((row.eval(&y) - row.rhs).abs());
    }
    for i in 0..p.m {
        if p.lo[i].is_finite() {
            pres = pres.max(p.lo[i] - y[i]);
        }
        if p.hi[i].is_finite() {
            pres = pres.max(y[i] - p.hi[i]);
        }
    }
    let status = if pres < 1e-6 { SdpStatus::Optimal } else { SdpStatus::NumericalFailure };
    Ok(SdpSolution {
        status,
        y,
        objective,
        dual_objective: f64::NEG_INFINITY,
        block_min_eigs,
        primal_residual: pres,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
        solve_time: Duration::ZERO,
        ray: None,
    })
}
