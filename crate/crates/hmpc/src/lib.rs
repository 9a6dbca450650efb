//! Solver library for harmonic model predictive control (HMPC).
//!
//! HMPC tracks an artificial single-frequency harmonic reference instead
//! of an artificial steady state, which buys good closed-loop behavior at
//! short horizons in exchange for per-output constraints on the harmonic
//! amplitude triples. Those constraints live on intersections of two
//! opposed shifted second-order cones; both the single cones and their
//! intersections admit closed-form Euclidean projections, so the whole
//! program can be solved by a plain ADMM loop whose iteration cost is a
//! pair of sparse matrix-vector products, one cached dense solve and a
//! stack of cheap projections.
//!
//! The crate provides the cone projections with a Dykstra validation
//! oracle ([`cones`]), the CSR kernels and the cached equality-QP
//! operators ([`sparse`], [`kkt`]), problem data and condensed assembly in
//! two interchangeable constraint encodings ([`problem`], [`mod@assemble`]),
//! the solver loop ([`admm`]), a closed-loop simulator ([`sim`]), polygon
//! constraint generation ([`polygon`]) and the encoding benchmark harness
//! ([`mod@bench`]). File schemas for problems and scenarios live in [`io`].

pub mod admm;
pub mod assemble;
pub mod bench;
pub mod cones;
pub mod io;
pub mod kkt;
pub mod polygon;
pub mod problem;
pub mod sim;
pub mod sparse;

#[doc(hidden)]
pub mod testutil;

pub use admm::{solve, AdmmSettings, SolveResult, SolveStatus, SolverState};
pub use assemble::{assemble, objective_value, CondensedQP, Encoding};
pub use cones::{ConeBand, ConeSign, ShiftedCone};
pub use kkt::{build_kkt_operators, KktOperators};
pub use problem::{HarmonicParams, HmpcProblem};
pub use sim::{run_closed_loop, ClosedLoopTrace, Scenario};
pub use sparse::CsrMatrix;
