//! Kinematic model: topology, forward kinematics, Jacobians, integration
//! and the JSON chain file format.

mod file;
mod integrate;
mod kinematics;
pub mod lie;
mod model;

pub use file::{
    ChainFile, DampingSpec, JointFile, LinkFile, OriginFile, ProbeFile, CHAIN_FILE_VERSION,
};
pub use integrate::{integrate, integrate_field, retract};
pub use kinematics::{
    directional_row, forward_kinematics, frame_jacobian, jacobian_from_frames, link_tip,
    point_frame, pose_error,
};
pub use model::{CollisionProbe, JointKind, JointSpec, KinematicChain, LinkSpec, SimState};
