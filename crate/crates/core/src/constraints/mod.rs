//! Unilateral constraints (joint limits, point contacts) solved as a
//! velocity-level linear complementarity problem each step.

mod detect;
mod lcp;

pub use detect::{detect_constraints, ConstraintKind, Obstacle, UnilateralConstraint};
pub use lcp::{
    assemble_lcp, constraint_torques, enumerate_lcp, solve_lcp, ContactSolution, LcpProblem,
    CONTACT_SLOP, DEFAULT_BAUMGARTE, LCP_MAX_ITER, LCP_TOLERANCE,
};
