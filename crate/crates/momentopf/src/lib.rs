//! Global AC optimal power flow via sparse moment relaxations.
//!
//! The crate builds semidefinite relaxations of the AC-OPF problem in two
//! flavors, a real hierarchy over the rectangular voltage components and a
//! complex hierarchy over the voltage phasors themselves, exploits network
//! sparsity through a chordal clique decomposition, and tightens the
//! relaxation bus-by-bus using a power-injection-mismatch heuristic until the
//! moment matrices become rank one and a globally optimal voltage profile can
//! be extracted.
//!
//! Module map:
//! - [`netcase`]: case-file parsing and the Hermitian matrix data of the OPF.
//! - [`polymodel`]: monomials, moment indices, lifting functionals.
//! - [`sparsity`]: chordal extension, maximal cliques, clique tree.
//! - [`hierarchy`]: assembly of the real and complex relaxations.
//! - [`sdpcore`]: block SDP representation, embedded interior-point solver,
//!   SDPA sparse-format interchange.
//! - [`orchestrator`]: the iterative order-escalation loop, solution
//!   extraction and feasibility verification.

pub mod hierarchy;
pub mod netcase;
pub mod orchestrator;
pub mod polymodel;
pub mod sdpcore;
pub mod sparsity;

pub mod cases;

#[cfg(test)]
mod testutil;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("semantic error in {what}: {msg}")]
    Semantic { what: String, msg: String },
    /// Voltage box is empty at a bus; callers map this to an "infeasible"
    /// outcome rather than a malformed-input one.
    #[error("infeasible voltage bounds at bus {bus}: V_min {vmin} > V_max {vmax}")]
    InfeasibleBounds { bus: usize, vmin: f64, vmax: f64 },
    #[error("relaxation order {gamma} too low for constraint of half-degree {eta}")]
    OrderTooLow { gamma: u32, eta: u32 },
    #[error("monomial degree {degree} exceeds configured maximum {max}")]
    DegreeOverflow { degree: u32, max: u32 },
    #[error("polynomial is not Hermitian: {msg}")]
    NonHermitian { msg: String },
    #[error("assembly error: {msg}")]
    Assembly { msg: String },
    #[error("SDP solver failure ({msg})")]
    Solver { msg: String },
    #[error("problem certified infeasible{}", context_suffix(.context))]
    Infeasible { context: String },
    #[error("rank condition failed: lambda2/lambda1 = {ratio:.3e} >= {tol:.3e}; continue raising orders")]
    RankCondition { ratio: f64, tol: f64 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
