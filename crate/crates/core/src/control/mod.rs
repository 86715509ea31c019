//! Task-space PD control and projected internal (posture) control.

mod potential;
mod projection;
mod task;

pub use potential::{InternalPotential, PosturePotential};
pub use projection::{
    build_internal_projection, gradient_projectivity_residual, internal_torque,
    orthogonal_projection, self_projectivity_residual, Projection, PINV_CUTOFF,
};
pub(crate) use task::check_gains;
pub use task::{pose_potential, task_force, TaskFrame, TaskTarget};
