//! Offline POMDP solver toolkit built around the fast informed bound (FIB).
//!
//! The value function of a discounted POMDP is approximated with one
//! alpha-vector per action. The FIB backup is a gamma-contraction on the
//! stacked alpha-vector, so the solver is a fixed-point iteration, and the
//! interesting part of this crate is making that iteration fast: the
//! [`anderson`] module implements Anderson acceleration with adaptive
//! regularization and a residual-schedule safeguard, generic over any
//! operator on alpha-vectors. A simulation-based operator that only needs a
//! generative model lives in [`sim`].
//!
//! Module map:
//! - [`model`] — POMDP tuple, alpha-vector and belief containers, validation.
//! - [`parser`] — the `.pomdp` text format (read and write).
//! - [`fixtures`] — built-in problems: the tiger instance and a grid
//!   navigation generator.
//! - [`fib`] — the FIB backup operator, plain fixed-point iteration, the
//!   QMDP baseline and a desk-scale exact value-iteration oracle.
//! - [`anderson`] — the accelerated solver.
//! - [`sim`] — generative-model sampling and the simulation-based operator.
//! - [`policy`] — greedy policies, belief filtering and Monte Carlo
//!   evaluation of discounted returns.

pub mod anderson;
pub mod fib;
pub mod fixtures;
pub mod model;
pub mod parser;
pub mod policy;
pub mod sim;

#[doc(hidden)]
pub mod testutil;

mod util;

pub use anderson::{aa_fib_solve, AaParams};
pub use fib::{fib_solve, qmdp_solve, SolveParams, SolveResult, StepKind};
pub use model::{AlphaMatrix, Belief, PomdpModel};
pub use parser::{parse_pomdp, serialize_pomdp};
pub use sim::{aa_fib_solve_sim, SimParams};
