//! Iterative order escalation around the moment relaxations.
//!
//! Every bus starts at order 1. Each round solves the assembled relaxation,
//! reads an approximate voltage vector off the first-order moment blocks,
//! and measures per-bus power-injection mismatches between that vector and
//! the lifted injections. Buses with the worst mismatches get their orders
//! raised, at most `h` per round, and the relaxation is rebuilt from scratch.
//! The loop stops when the largest mismatch falls below the tolerance, at
//! which point the moment blocks are rank-one in practice and the voltage
//! vector is extracted and verified against the original constraints.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::hierarchy::complex::{assemble_complex, ComplexRelaxation};
use crate::hierarchy::real::{assemble_real, RealRelaxation};
use crate::hierarchy::{injection_limits, AssemblyOptions, HierarchyKind};
use crate::netcase::{
    build_matrices, injections, quad_form, HermitianMatrixSet, NetworkCase, ObjectiveMode,
};
use crate::sdpcore::{solve, SdpSettings, SdpSolution, SdpStatus};
use crate::sparsity::{build_graph, chordal_extend, merge_cliques, CliqueDecomposition};
use crate::{Error, Result};

/// Per-bus relaxation orders plus the iteration log.
#[derive(Clone, Debug)]
pub struct RelaxationState {
    pub gamma: Vec<u32>,
    pub iteration: usize,
    pub log: Vec<IterationRecord>,
}

impl RelaxationState {
    pub fn new(n: usize) -> Self {
        RelaxationState { gamma: vec![1; n], iteration: 0, log: Vec::new() }
    }

    pub fn gamma_max(&self) -> u32 {
        self.gamma.iter().copied().max().unwrap_or(1)
    }
}

/// One solve of the loop: the orders it ran with, what it produced, and
/// which buses were escalated afterwards.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gamma: Vec<u32>,
    /// Buses whose order was raised after this solve; empty on the final one.
    pub incremented: Vec<usize>,
    pub objective: f64,
    pub bound: f64,
    pub max_mismatch_mva: f64,
    pub solver_time: Duration,
    pub solver_iterations: usize,
}

/// Mismatch summary for one solved relaxation.
#[derive(Clone, Debug)]
pub struct MismatchReport {
    /// Modulus of the complex injection mismatch per bus, in MVA.
    pub per_bus_mva: Vec<f64>,
    pub max_mva: f64,
    /// Stitched approximate voltage phasors.
    pub z_approx: Vec<Complex64>,
    /// Top eigenvalue of the worst-conditioned first-order clique block.
    pub lambda1: f64,
    /// Largest second-to-first eigenvalue ratio across the clique blocks;
    /// near zero exactly when every block is rank-one.
    pub rank_ratio: f64,
}

/// Signed constraint violations at a voltage vector, in natural units.
/// Negative entries mean slack.
#[derive(Clone, Debug)]
pub struct ViolationReport {
    /// Net active injection outside its generation-minus-load box, MW.
    pub inj_p_mw: Vec<f64>,
    /// Reactive counterpart, MVAr.
    pub inj_q_mvar: Vec<f64>,
    /// Voltage magnitude outside its box, pu.
    pub vmag_pu: Vec<f64>,
    /// Apparent-power overload per rated line end: (line, metered bus, MVA).
    pub flow_mva: Vec<(usize, usize, f64)>,
    /// Reference-bus angle error, radians.
    pub ref_angle_rad: f64,
}

impl ViolationReport {
    /// Worst violation among the power-type constraints, MVA-comparable.
    pub fn max_power_mva(&self) -> f64 {
        let inj = self
            .inj_p_mw
            .iter()
            .chain(self.inj_q_mvar.iter())
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let flow = self.flow_mva.iter().map(|&(_, _, v)| v).fold(f64::NEG_INFINITY, f64::max);
        inj.max(flow).max(0.0)
    }

    pub fn max_voltage_pu(&self) -> f64 {
        self.vmag_pu.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0)
    }
}

/// Extracted and verified globally optimal operating point.
#[derive(Clone, Debug)]
pub struct GlobalSolution {
    pub v: Vec<Complex64>,
    /// Objective evaluated at `v` in problem units ($/h or pu losses).
    pub objective: f64,
    /// Best certified lower bound across iterations.
    pub bound: f64,
    /// (objective - bound) / max(1, |objective|).
    pub gap: f64,
    pub violations: ViolationReport,
    pub state: RelaxationState,
}

/// Result of the escalation loop: a verified global solution, or the best
/// bound when an iteration/order/time cap stopped the loop first.
pub enum AlgorithmOutcome {
    Global(GlobalSolution),
    BoundOnly { bound: f64, report: MismatchReport, state: RelaxationState },
}

#[derive(Clone, Debug)]
pub struct AlgorithmCaps {
    pub max_iterations: usize,
    pub max_gamma: u32,
    pub wall_clock: Option<Duration>,
}

impl Default for AlgorithmCaps {
    fn default() -> Self {
        AlgorithmCaps { max_iterations: 15, max_gamma: 3, wall_clock: None }
    }
}

#[derive(Clone, Debug)]
pub struct AlgorithmConfig {
    pub hierarchy: HierarchyKind,
    /// Buses escalated per iteration; defaults to 4 (real) or 7 (complex).
    pub h: Option<usize>,
    /// Termination tolerance on the largest injection mismatch, MVA.
    pub eps_mva: f64,
    pub caps: AlgorithmCaps,
    pub options: AssemblyOptions,
    /// Eigenvalue-ratio threshold for declaring a block rank-one.
    pub rank_tol: f64,
    pub settings: SdpSettings,
}

impl AlgorithmConfig {
    pub fn new(hierarchy: HierarchyKind) -> Self {
        AlgorithmConfig {
            hierarchy,
            h: None,
            eps_mva: 1.0,
            caps: AlgorithmCaps::default(),
            options: AssemblyOptions::default(),
            rank_tol: 1e-5,
            settings: SdpSettings::default(),
        }
    }

    pub fn effective_h(&self) -> usize {
        self.h.unwrap_or(match self.hierarchy {
            HierarchyKind::Real => 4,
            HierarchyKind::Complex => 7,
        })
    }
}

// ---------------------------------------------------------------------------
// Spectral helpers
// ---------------------------------------------------------------------------

/// Eigenvalues descending plus the top unit eigenvector.
fn top_eigenpair(m: &DMatrix<f64>) -> (Vec<f64>, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vector = eig.eigenvectors.column(order[0]).into_owned();
    (values, vector)
}

/// Rank-one test on a symmetric PSD block: true iff lambda_2/lambda_1 is
/// below `tol`. The ratio is reported alongside; a nonpositive top
/// eigenvalue yields ratio 1.
pub fn check_rank1(block: &DMatrix<f64>, tol: f64) -> (bool, f64) {
    let (values, _) = top_eigenpair(block);
    let ratio = rank_ratio(&values, 1);
    (ratio < tol, ratio)
}

/// Hermitian variant via the real embedding, where every eigenvalue shows
/// up twice.
pub fn check_rank1_hermitian(block: &DMatrix<Complex64>, tol: f64) -> (bool, f64) {
    let embedded = crate::hierarchy::complex::hermitian_to_real(block);
    let (values, _) = top_eigenpair(&embedded);
    let ratio = rank_ratio(&values, 2);
    (ratio < tol, ratio)
}

/// lambda_{1+stride} / lambda_1 from a descending eigenvalue list.
fn rank_ratio(values_desc: &[f64], stride: usize) -> f64 {
    let top = values_desc[0];
    if top <= 0.0 {
        return 1.0;
    }
    let second = values_desc.get(stride).copied().unwrap_or(0.0).max(0.0);
    second / top
}

/// Largest-modulus entry made real positive; kills the per-clique
/// eigenvector phase ambiguity deterministically.
fn orient(z: &mut [Complex64]) {
    let mut k = 0;
    for (i, v) in z.iter().enumerate() {
        if v.norm_sqr() > z[k].norm_sqr() {
            k = i;
        }
    }
    let m = z[k].norm();
    if m > 0.0 {
        let phase = z[k] / m;
        for v in z.iter_mut() {
            *v /= phase;
        }
    }
}

/// Per-clique scaled top eigenvectors of the degree-1 moment blocks,
/// stitched over the clique tree into one slot vector. `slots[c]` lists the
/// global slot of each block row. Children are rotated to match their
/// already-assigned overlap in the least-squares sense.
fn stitch(
    blocks: &[Vec<Complex64>],
    slots: &[Vec<usize>],
    n_slots: usize,
    tree_edges: &[(usize, usize)],
) -> Vec<Complex64> {
    let nc = blocks.len();
    let mut adj = vec![Vec::new(); nc];
    for &(a, b) in tree_edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for nb in &mut adj {
        nb.sort_unstable();
    }
    let mut assigned: Vec<Option<Complex64>> = vec![None; n_slots];
    let mut visited = vec![false; nc];
    for root in 0..nc {
        if visited[root] {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([root]);
        visited[root] = true;
        while let Some(c) = queue.pop_front() {
            let mut z = blocks[c].clone();
            // phase that best maps this clique's entries onto the overlap
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &slot) in slots[c].iter().enumerate() {
                if let Some(prev) = assigned[slot] {
                    acc += z[i].conj() * prev;
                }
            }
            if acc.norm() > 0.0 {
                let phase = acc / acc.norm();
                for v in z.iter_mut() {
                    *v *= phase;
                }
            }
            for (i, &slot) in slots[c].iter().enumerate() {
                if assigned[slot].is_none() {
                    assigned[slot] = Some(z[i]);
                }
            }
            for &nb in &adj[c] {
                if !visited[nb] {
                    visited[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    assigned.into_iter().map(|v| v.unwrap_or(Complex64::new(0.0, 0.0))).collect()
}

fn nonpositive_top(clique: usize, lambda: f64) -> Error {
    Error::Solver {
        msg: format!(
            "first-order moment block of clique {clique} has nonpositive top eigenvalue {lambda:.3e}"
        ),
    }
}

/// Approximate voltages from a real-hierarchy solution: per clique, the top
/// eigenpair of the degree-1 moment block scaled by sqrt(lambda), stitched
/// by sign over the tree, then paired into phasors.
pub fn approx_solution_real(rel: &RealRelaxation, y: &[f64]) -> Result<Vec<Complex64>> {
    let (blocks, slots, _) = real_clique_blocks(rel, y)?;
    let xi = stitch(&blocks, &slots, rel.layout.m(), &rel.tree_edges);
    let xi: Vec<f64> = xi.iter().map(|z| z.re).collect();
    Ok(rel.layout.to_phasors(&xi))
}

/// Complex-hierarchy counterpart; slots are buses.
pub fn approx_solution_complex(rel: &ComplexRelaxation, y: &[f64]) -> Result<Vec<Complex64>> {
    let (blocks, slots, _) = complex_clique_blocks(rel, y)?;
    Ok(stitch(&blocks, &slots, rel.inj_p.len(), &rel.tree_edges))
}

/// Scaled top eigenvectors and slot lists of every clique's degree-1 block,
/// plus the worst (lambda1, ratio) pair for rank reporting.
fn real_clique_blocks(
    rel: &RealRelaxation,
    y: &[f64],
) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<usize>>, (f64, f64))> {
    let mut blocks = Vec::with_capacity(rel.cliques.len());
    let mut slots = Vec::with_capacity(rel.cliques.len());
    let mut worst = (0.0_f64, 0.0_f64);
    for (c, clique) in rel.cliques.iter().enumerate() {
        let full = rel.first_order_matrix(c, y);
        let d = full.nrows() - 1;
        let sub = full.view((1, 1), (d, d)).into_owned();
        let (values, vector) = top_eigenpair(&sub);
        let lambda = values[0];
        if lambda <= 0.0 {
            return Err(nonpositive_top(c, lambda));
        }
        let ratio = rank_ratio(&values, 1);
        if ratio > worst.1 {
            worst = (lambda, ratio);
        }
        let scale = lambda.sqrt();
        let mut z: Vec<Complex64> =
            vector.iter().map(|&v| Complex64::new(scale * v, 0.0)).collect();
        orient(&mut z);
        blocks.push(z);
        slots.push(rel.layout.vars_for(clique));
    }
    Ok((blocks, slots, worst))
}

fn complex_clique_blocks(
    rel: &ComplexRelaxation,
    y: &[f64],
) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<usize>>, (f64, f64))> {
    let mut blocks = Vec::with_capacity(rel.cliques.len());
    let mut slots = Vec::with_capacity(rel.cliques.len());
    let mut worst = (0.0_f64, 0.0_f64);
    for (c, clique) in rel.cliques.iter().enumerate() {
        let full = rel.first_order_matrix(c, y);
        let d = full.nrows() - 1;
        let sub = full.view((1, 1), (d, d)).into_owned();
        let embedded = crate::hierarchy::complex::hermitian_to_real(&sub);
        let (values, vector) = top_eigenpair(&embedded);
        let lambda = values[0];
        if lambda <= 0.0 {
            return Err(nonpositive_top(c, lambda));
        }
        let ratio = rank_ratio(&values, 2);
        if ratio > worst.1 {
            worst = (lambda, ratio);
        }
        let scale = lambda.sqrt();
        let mut z: Vec<Complex64> = (0..d)
            .map(|i| Complex64::new(scale * vector[i], scale * vector[d + i]))
            .collect();
        orient(&mut z);
        blocks.push(z);
        slots.push(clique.clone());
    }
    Ok((blocks, slots, worst))
}

// ---------------------------------------------------------------------------
// Mismatch
// ---------------------------------------------------------------------------

/// Per-bus modulus of the complex gap between the injections of `v` and the
/// lifted injection values, scaled to MVA.
pub fn mismatch_values(
    mats: &HermitianMatrixSet,
    v: &[Complex64],
    lifted_p: &[f64],
    lifted_q: &[f64],
    base_mva: f64,
) -> Vec<f64> {
    injections(&mats.y, v)
        .iter()
        .enumerate()
        .map(|(k, s)| {
            Complex64::new(s.re - lifted_p[k], s.im - lifted_q[k]).norm() * base_mva
        })
        .collect()
}

fn build_report(
    mats: &HermitianMatrixSet,
    base_mva: f64,
    z_approx: Vec<Complex64>,
    lifted_p: Vec<f64>,
    lifted_q: Vec<f64>,
    worst: (f64, f64),
) -> MismatchReport {
    let per_bus_mva = mismatch_values(mats, &z_approx, &lifted_p, &lifted_q, base_mva);
    let max_mva = per_bus_mva.iter().copied().fold(0.0, f64::max);
    MismatchReport {
        per_bus_mva,
        max_mva,
        z_approx,
        lambda1: worst.0,
        rank_ratio: worst.1,
    }
}

pub fn mismatch_real(
    rel: &RealRelaxation,
    mats: &HermitianMatrixSet,
    base_mva: f64,
    y: &[f64],
) -> Result<MismatchReport> {
    let (blocks, slots, worst) = real_clique_blocks(rel, y)?;
    let xi = stitch(&blocks, &slots, rel.layout.m(), &rel.tree_edges);
    let xi: Vec<f64> = xi.iter().map(|z| z.re).collect();
    let v = rel.layout.to_phasors(&xi);
    let lp: Vec<f64> = rel.inj_p.iter().map(|e| e.eval(y)).collect();
    let lq: Vec<f64> = rel.inj_q.iter().map(|e| e.eval(y)).collect();
    Ok(build_report(mats, base_mva, v, lp, lq, worst))
}

pub fn mismatch_complex(
    rel: &ComplexRelaxation,
    mats: &HermitianMatrixSet,
    base_mva: f64,
    y: &[f64],
) -> Result<MismatchReport> {
    let (blocks, slots, worst) = complex_clique_blocks(rel, y)?;
    let n = rel.inj_p.len();
    let v = stitch(&blocks, &slots, n, &rel.tree_edges);
    let lp: Vec<f64> = rel.inj_p.iter().map(|e| e.eval(y)).collect();
    let lq: Vec<f64> = rel.inj_q.iter().map(|e| e.eval(y)).collect();
    Ok(build_report(mats, base_mva, v, lp, lq, worst))
}

// ---------------------------------------------------------------------------
// Order escalation
// ---------------------------------------------------------------------------

/// One application of the escalation rule: raise the order at up to `h`
/// buses with the largest mismatches among those lagging the current
/// maximum order (and exceeding the tolerance); when no bus lags, raise the
/// maximum itself at up to `h` of the worst offenders. Ties break toward
/// the lower bus index. All mismatches within tolerance leave the state
/// unchanged.
pub fn increment_orders(
    state: &RelaxationState,
    report: &MismatchReport,
    h: usize,
    eps_mva: f64,
) -> RelaxationState {
    let gmax = state.gamma_max();
    let over: Vec<usize> =
        (0..state.gamma.len()).filter(|&i| report.per_bus_mva[i] > eps_mva).collect();
    let mut candidates: Vec<usize> =
        over.iter().copied().filter(|&i| state.gamma[i] < gmax).collect();
    if candidates.is_empty() {
        candidates = over;
    }
    candidates.sort_by(|&a, &b| {
        report.per_bus_mva[b].total_cmp(&report.per_bus_mva[a]).then(a.cmp(&b))
    });
    let mut next = state.clone();
    for &bus in candidates.iter().take(h) {
        next.gamma[bus] += 1;
    }
    next
}

// ---------------------------------------------------------------------------
// Verification and extraction
// ---------------------------------------------------------------------------

/// Signed constraint violations of the original problem at `v`.
pub fn verify_feasibility(case: &NetworkCase, v: &[Complex64]) -> ViolationReport {
    let mats = build_matrices(case);
    let lim = injection_limits(case);
    let base = case.base_mva;
    let inj = injections(&mats.y, v);
    let inj_p_mw: Vec<f64> = (0..case.n())
        .map(|k| (lim.plo[k] - inj[k].re).max(inj[k].re - lim.phi[k]) * base)
        .collect();
    let inj_q_mvar: Vec<f64> = (0..case.n())
        .map(|k| (lim.qlo[k] - inj[k].im).max(inj[k].im - lim.qhi[k]) * base)
        .collect();
    let vmag_pu: Vec<f64> = case
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let m = v[k].norm();
            (b.vmin - m).max(m - b.vmax)
        })
        .collect();
    let flow_mva: Vec<(usize, usize, f64)> = mats
        .flows
        .iter()
        .filter(|f| case.lines[f.line].s_max > 0.0)
        .map(|f| {
            let s = quad_form(&f.f, v).norm();
            (f.line, f.from, (s - case.lines[f.line].s_max) * base)
        })
        .collect();
    let mut angle = v[case.ref_bus].arg() - case.ref_angle;
    while angle > std::f64::consts::PI {
        angle -= 2.0 * std::f64::consts::PI;
    }
    while angle < -std::f64::consts::PI {
        angle += 2.0 * std::f64::consts::PI;
    }
    ViolationReport { inj_p_mw, inj_q_mvar, vmag_pu, flow_mva, ref_angle_rad: angle }
}

/// Objective of the original problem at `v`: generation cost in $/h, or
/// total active losses in pu.
pub fn operating_objective(
    case: &NetworkCase,
    mats: &HermitianMatrixSet,
    v: &[Complex64],
    mode: ObjectiveMode,
) -> f64 {
    let inj = injections(&mats.y, v);
    match mode {
        ObjectiveMode::Loss => inj.iter().map(|s| s.re).sum(),
        ObjectiveMode::Cost => case
            .gens
            .iter()
            .map(|g| {
                let pg = inj[g.bus].re + case.buses[g.bus].pd;
                g.c2 * pg * pg + g.c1 * pg + g.c0
            })
            .sum(),
    }
}

/// Rotate so the reference bus sits at the case's fixed angle.
fn rotate_to_reference(mut v: Vec<Complex64>, ref_bus: usize, ref_angle: f64) -> Vec<Complex64> {
    let cur = v[ref_bus];
    if cur.norm() > 0.0 {
        let turn = Complex64::from_polar(1.0, ref_angle) * cur.conj() / cur.norm();
        for z in v.iter_mut() {
            *z *= turn;
        }
    }
    v
}

// ---------------------------------------------------------------------------
// The loop
// ---------------------------------------------------------------------------

enum Assembled {
    Real(RealRelaxation),
    Complex(ComplexRelaxation),
}

impl Assembled {
    fn problem(&self) -> &crate::sdpcore::SdpProblem {
        match self {
            Assembled::Real(r) => &r.problem,
            Assembled::Complex(r) => &r.problem,
        }
    }

    fn report(
        &self,
        mats: &HermitianMatrixSet,
        base: f64,
        sol: &SdpSolution,
    ) -> Result<MismatchReport> {
        match self {
            Assembled::Real(r) => mismatch_real(r, mats, base, &sol.y),
            Assembled::Complex(r) => mismatch_complex(r, mats, base, &sol.y),
        }
    }
}

/// Run the escalation loop to completion. Solver statuses other than
/// optimality abort with context; caps turn the best bound into a
/// `BoundOnly` outcome instead.
pub fn run_algorithm1(case: &NetworkCase, cfg: &AlgorithmConfig) -> Result<AlgorithmOutcome> {
    let started = Instant::now();
    let mats = build_matrices(case);
    let decomp = merge_cliques(&chordal_extend(&build_graph(case)));
    let h = cfg.effective_h();
    let mut state = RelaxationState::new(case.n());
    let mut best_bound = f64::NEG_INFINITY;

    loop {
        state.iteration += 1;
        let rel = assemble(case, &decomp, &state.gamma, cfg)?;
        let sol = solve(rel.problem(), &cfg.settings)?;
        match sol.status {
            status if status.is_solved() => {}
            SdpStatus::Infeasible => {
                return Err(Error::Infeasible {
                    context: format!(
                        "iteration {} with orders {:?}",
                        state.iteration, state.gamma
                    ),
                });
            }
            other => {
                return Err(Error::Solver {
                    msg: format!(
                        "{other} at iteration {} with orders {:?}",
                        state.iteration, state.gamma
                    ),
                });
            }
        }
        best_bound = best_bound.max(sol.dual_objective);
        let report = rel.report(&mats, case.base_mva, &sol)?;
        state.log.push(IterationRecord {
            iteration: state.iteration,
            gamma: state.gamma.clone(),
            incremented: Vec::new(),
            objective: sol.objective,
            bound: sol.dual_objective,
            max_mismatch_mva: report.max_mva,
            solver_time: sol.solve_time,
            solver_iterations: sol.iterations,
        });

        if report.max_mva <= cfg.eps_mva {
            if report.rank_ratio >= cfg.rank_tol {
                return Err(Error::RankCondition {
                    ratio: report.rank_ratio,
                    tol: cfg.rank_tol,
                });
            }
            let v = rotate_to_reference(report.z_approx.clone(), case.ref_bus, case.ref_angle);
            let objective = operating_objective(case, &mats, &v, cfg.options.objective);
            let violations = verify_feasibility(case, &v);
            let gap = (objective - best_bound) / objective.abs().max(1.0);
            return Ok(AlgorithmOutcome::Global(GlobalSolution {
                v,
                objective,
                bound: best_bound,
                gap,
                violations,
                state,
            }));
        }

        let capped = state.iteration >= cfg.caps.max_iterations
            || cfg.caps.wall_clock.is_some_and(|cap| started.elapsed() >= cap);
        if capped {
            return Ok(AlgorithmOutcome::BoundOnly { bound: best_bound, report, state });
        }
        let next = increment_orders(&state, &report, h, cfg.eps_mva);
        if next.gamma.iter().any(|&g| g > cfg.caps.max_gamma) {
            return Ok(AlgorithmOutcome::BoundOnly { bound: best_bound, report, state });
        }
        let incremented: Vec<usize> =
            (0..case.n()).filter(|&i| next.gamma[i] > state.gamma[i]).collect();
        debug_assert!(!incremented.is_empty());
        state.log.last_mut().expect("just pushed").incremented = incremented;
        state.gamma = next.gamma;
    }
}

fn assemble(
    case: &NetworkCase,
    decomp: &CliqueDecomposition,
    gamma: &[u32],
    cfg: &AlgorithmConfig,
) -> Result<Assembled> {
    Ok(match cfg.hierarchy {
        HierarchyKind::Real => Assembled::Real(assemble_real(case, decomp, gamma, &cfg.options)?),
        HierarchyKind::Complex => {
            Assembled::Complex(assemble_complex(case, decomp, gamma, &cfg.options)?)
        }
    })
}
