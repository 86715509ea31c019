use nalgebra::{DMatrix, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};

use super::lie;
use super::model::{JointKind, KinematicChain, SimState};
use crate::{Real, Result};

/// Transform contributed by a 1-DOF joint at coordinate `q`.
fn joint_motion<T: Real>(kind: &JointKind<T>, q: T) -> Isometry3<T> {
    match kind {
        JointKind::Revolute { axis } => Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(axis, q),
        ),
        JointKind::Prismatic { axis } => Isometry3::from_parts(
            Translation3::from(axis.into_inner() * q),
            UnitQuaternion::identity(),
        ),
        JointKind::FloatingBase => Isometry3::identity(),
    }
}

/// World frame of every link.
pub fn forward_kinematics<T: Real>(
    chain: &KinematicChain<T>,
    state: &SimState<T>,
) -> Result<Vec<Isometry3<T>>> {
    state.check(chain)?;
    let mut frames: Vec<Isometry3<T>> = Vec::with_capacity(chain.links().len());
    for (i, (link, joint)) in chain.links().iter().zip(chain.joints()).enumerate() {
        let parent = match link.parent {
            Some(p) => frames[p],
            None => Isometry3::identity(),
        };
        let motion = match (&joint.kind, chain.coordinate_index(i)) {
            (JointKind::FloatingBase, _) => state.base.expect("checked above"),
            (kind, Some(c)) => joint_motion(kind, state.joints[c]),
            (_, None) => unreachable!("1-DOF joints always own a coordinate"),
        };
        frames.push(parent * link.origin * motion);
    }
    Ok(frames)
}

/// Pose of the frame attached to `link` at `local_point`: the link's
/// orientation, translated to the point.
pub fn point_frame<T: Real>(
    frames: &[Isometry3<T>],
    link: usize,
    local_point: &Vector3<T>,
) -> Isometry3<T> {
    let f = &frames[link];
    let p = f * Point3::from(*local_point);
    Isometry3::from_parts(Translation3::from(p.coords), f.rotation)
}

/// Tip of a link, `(length, 0, 0)` in its frame.
pub fn link_tip<T: Real>(
    chain: &KinematicChain<T>,
    frames: &[Isometry3<T>],
    link: usize,
) -> Vector3<T> {
    let len = chain.links()[link].length;
    (frames[link] * Point3::new(len, T::zero(), T::zero())).coords
}

/// 6×n Jacobian of the world twist `(linear; angular)` of `local_point` on
/// `link`, using precomputed link frames.
pub fn jacobian_from_frames<T: Real>(
    chain: &KinematicChain<T>,
    frames: &[Isometry3<T>],
    link: usize,
    local_point: &Vector3<T>,
) -> DMatrix<T> {
    let n = chain.dof();
    let mut jac = DMatrix::zeros(6, n);
    let point = (frames[link] * Point3::from(*local_point)).coords;
    for &j in chain.ancestors(link) {
        let col = chain.velocity_offset(j);
        let frame = &frames[j];
        match &chain.joints()[j].kind {
            JointKind::Revolute { axis } => {
                let w = frame.rotation * axis.into_inner();
                let v = w.cross(&(point - frame.translation.vector));
                jac.fixed_view_mut::<3, 1>(0, col).copy_from(&v);
                jac.fixed_view_mut::<3, 1>(3, col).copy_from(&w);
            }
            JointKind::Prismatic { axis } => {
                let v = frame.rotation * axis.into_inner();
                jac.fixed_view_mut::<3, 1>(0, col).copy_from(&v);
            }
            JointKind::FloatingBase => {
                // Body twist of the base: ṗ = R v_b, ω = R ω_b.
                let r = frame.rotation.to_rotation_matrix();
                let arm = point - frame.translation.vector;
                for k in 0..3 {
                    let axis = r.matrix().column(k).into_owned();
                    jac.fixed_view_mut::<3, 1>(0, col + k).copy_from(&axis);
                    jac.fixed_view_mut::<3, 1>(0, col + 3 + k)
                        .copy_from(&axis.cross(&arm));
                    jac.fixed_view_mut::<3, 1>(3, col + 3 + k).copy_from(&axis);
                }
            }
        }
    }
    jac
}

/// 6×n Jacobian mapping q̇ to the world twist of `local_point` on `link`.
pub fn frame_jacobian<T: Real>(
    chain: &KinematicChain<T>,
    state: &SimState<T>,
    link: usize,
    local_point: &Vector3<T>,
) -> Result<DMatrix<T>> {
    chain.check_link(link)?;
    let frames = forward_kinematics(chain, state)?;
    Ok(jacobian_from_frames(chain, &frames, link, local_point))
}

/// Linear rows of the point Jacobian projected on a world direction.
pub fn directional_row<T: Real>(jac: &DMatrix<T>, direction: &Vector3<T>) -> DMatrix<T> {
    let lin = jac.rows(0, 3);
    let d = DMatrix::from_row_slice(1, 3, direction.as_slice());
    d * lin
}

/// Pose error `(p_d − p; log(R_d Rᵀ))` in world coordinates.
pub fn pose_error<T: Real>(desired: &Isometry3<T>, actual: &Isometry3<T>) -> nalgebra::Vector6<T> {
    let dp = desired.translation.vector - actual.translation.vector;
    let dr = lie::rotation_error(&desired.rotation, &actual.rotation);
    lie::twist(&dp, &dr)
}
