//! Simulation and verification toolkit for systems with finitely many
//! discrete delays.
//!
//! States live in `L∞ × Rⁿ` (a piecewise-polynomial history plus an explicit
//! value at `0`). Solutions are computed by the method of steps with
//! breakpoint propagation. On top of the solver sit empirical reachability
//! estimates and a pipeline that turns sampled decay data into a uniform
//! `KL` bound.

// `!(a < b)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod piecewise;
mod poly;

pub mod history;
pub mod pipeline;
pub mod reachability;
pub mod rhsdsl;
pub mod sampling;
pub mod signals;
pub mod solver;
pub mod stability;
pub mod trajectory;

pub use history::{
    embed_continuous, eval_diamond, norm_xinf, segment_at, segment_norm, ContinuousHistory, Delays,
    HistoryError, PiecewiseHistory,
};
pub use piecewise::{PieceLiteral, PiecewiseError, PiecewiseFn};
pub use poly::{Piece, Poly, Side, MAX_DEGREE};
pub use rhsdsl::{catalog, estimate_lipschitz, eval_rhs, parse_system, SystemDef, SystemError};
pub use signals::{delayed_inputs, sample_input, shift_input, InputSignal};
pub use solver::{flow_segment, lift_to_tds, solve_ode, solve_tds, SolveConfig, SolveError};
pub use trajectory::{Escape, EscapeConfidence, Trajectory};
