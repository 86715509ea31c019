use nalgebra::{DMatrix, DVector, Isometry3, Matrix6, Vector3, Vector6};

use crate::chain::{jacobian_from_frames, point_frame, pose_error, KinematicChain};
use crate::dynamics::ImplicitTask;
use crate::linalg;
use crate::{Error, Real, Result};

/// Point on a link whose pose is controlled or monitored.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFrame<T: Real> {
    pub link: usize,
    pub point: Vector3<T>,
}

impl<T: Real> TaskFrame<T> {
    pub fn new(link: usize, point: Vector3<T>) -> Self {
        Self { link, point }
    }

    pub fn pose(&self, frames: &[Isometry3<T>]) -> Isometry3<T> {
        point_frame(frames, self.link, &self.point)
    }

    pub fn jacobian(&self, chain: &KinematicChain<T>, frames: &[Isometry3<T>]) -> DMatrix<T> {
        jacobian_from_frames(chain, frames, self.link, &self.point)
    }
}

/// Operational-space PD target for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTarget<T: Real> {
    pub frame: TaskFrame<T>,
    pub desired_pose: Isometry3<T>,
    /// `(linear; angular)` in m/s and rad/s.
    pub desired_twist: Vector6<T>,
    /// `K`, symmetric PSD.
    pub stiffness: Matrix6<T>,
    /// `B_c`, symmetric PD.
    pub damping: Matrix6<T>,
}

pub(crate) fn check_gains<T: Real>(
    what: &str,
    stiffness: &Matrix6<T>,
    damping: &Matrix6<T>,
    strict_damping: bool,
) -> Result<()> {
    let k = DMatrix::from_column_slice(6, 6, stiffness.as_slice());
    let b = DMatrix::from_column_slice(6, 6, damping.as_slice());
    let tol = T::lit(1e-12);
    if linalg::asymmetry(&k) > tol || linalg::asymmetry(&b) > tol {
        return Err(Error::config(format!("{what}: gains must be symmetric")));
    }
    if linalg::eigen_range(&k).0 < -tol {
        return Err(Error::config(format!(
            "{what}: stiffness must be positive semi-definite"
        )));
    }
    let min_b = linalg::eigen_range(&b).0;
    if (strict_damping && !(min_b > T::zero())) || min_b < -tol {
        return Err(Error::config(format!(
            "{what}: damping must be positive {}definite",
            if strict_damping { "" } else { "semi-" }
        )));
    }
    Ok(())
}

impl<T: Real> TaskTarget<T> {
    pub fn new(
        frame: TaskFrame<T>,
        desired_pose: Isometry3<T>,
        desired_twist: Vector6<T>,
        stiffness: Matrix6<T>,
        damping: Matrix6<T>,
    ) -> Result<Self> {
        check_gains("task target", &stiffness, &damping, true)?;
        Ok(Self {
            frame,
            desired_pose,
            desired_twist,
            stiffness,
            damping,
        })
    }

    /// Contribution to the implicit velocity solve at the current frames.
    pub fn implicit_term(
        &self,
        chain: &KinematicChain<T>,
        frames: &[Isometry3<T>],
    ) -> ImplicitTask<T> {
        let err = pose_error(&self.desired_pose, &self.frame.pose(frames));
        ImplicitTask {
            jacobian: self.frame.jacobian(chain, frames),
            stiffness: DMatrix::from_column_slice(6, 6, self.stiffness.as_slice()),
            damping: DMatrix::from_column_slice(6, 6, self.damping.as_slice()),
            error: DVector::from_column_slice(err.as_slice()),
            desired_velocity: DVector::from_column_slice(self.desired_twist.as_slice()),
        }
    }

    /// Energy stored in the task spring, `½ errᵀ K err`.
    pub fn spring_energy(&self, x: &Isometry3<T>) -> T {
        pose_potential(&self.stiffness, &pose_error(&self.desired_pose, x))
    }
}

/// `f = K·err(x_d, x) + B_c(v_d − v)`; the orientation error is the
/// rotation vector of `R_d Rᵀ`.
pub fn task_force<T: Real>(target: &TaskTarget<T>, x: &Isometry3<T>, v: &Vector6<T>) -> Vector6<T> {
    let err = pose_error(&target.desired_pose, x);
    target.stiffness * err + target.damping * (target.desired_twist - v)
}

/// `½ errᵀ K err`.
pub fn pose_potential<T: Real>(stiffness: &Matrix6<T>, err: &Vector6<T>) -> T {
    err.dot(&(stiffness * err)) * T::lit(0.5)
}
