//! Passive virtual guides: simulated mechanisms with their own first-order
//! dynamics, attached to a manikin frame by a 6-D damped spring.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix6, Unit, Vector3, Vector6};

use crate::chain::{forward_kinematics, integrate, pose_error, KinematicChain, SimState};
use crate::control::{check_gains, pose_potential, TaskFrame};
use crate::dynamics::{ImplicitSystem, ImplicitTask, TorqueSource, TorqueVector, SINGULAR_RATIO};
use crate::linalg::SpdSystem;
use crate::{Error, Real, Result};

/// Damped spring between a manikin frame and a guide's tool frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideCoupling<T: Real> {
    pub manikin_frame: TaskFrame<T>,
    pub stiffness: Matrix6<T>,
    pub damping: Matrix6<T>,
}

impl<T: Real> GuideCoupling<T> {
    /// `K_g` symmetric PSD and `B_g` symmetric PD, or both exactly zero for a
    /// detached coupling.
    pub fn new(
        manikin_frame: TaskFrame<T>,
        stiffness: Matrix6<T>,
        damping: Matrix6<T>,
    ) -> Result<Self> {
        let detached = stiffness
            .iter()
            .chain(damping.iter())
            .all(|v| *v == T::zero());
        if !detached {
            check_gains("guide coupling", &stiffness, &damping, true)?;
        }
        Ok(Self {
            manikin_frame,
            stiffness,
            damping,
        })
    }

    /// True when both gains are zero: the guide exerts nothing.
    pub fn is_detached(&self) -> bool {
        self.stiffness
            .iter()
            .chain(self.damping.iter())
            .all(|v| *v == T::zero())
    }
}

/// Auxiliary mechanism (fixed to the world) whose tool frame is coupled to
/// the manikin. Its damping `B_v` is the guide chain's damping matrix.
#[derive(Debug, Clone)]
pub struct VirtualMechanism<T: Real> {
    chain: KinematicChain<T>,
    tool: TaskFrame<T>,
    coupling: GuideCoupling<T>,
    mobility: SpdSystem<T>,
}

impl<T: Real> VirtualMechanism<T> {
    pub fn new(
        chain: KinematicChain<T>,
        tool: TaskFrame<T>,
        coupling: GuideCoupling<T>,
    ) -> Result<Self> {
        chain.check_link(tool.link)?;
        let mobility =
            SpdSystem::new(chain.damping(), T::lit(SINGULAR_RATIO)).map_err(|(e, _)| {
                Error::config(format!("guide damping B_v must be positive definite: {e}"))
            })?;
        Ok(Self {
            chain,
            tool,
            coupling,
            mobility,
        })
    }

    pub fn chain(&self) -> &KinematicChain<T> {
        &self.chain
    }

    pub fn tool(&self) -> &TaskFrame<T> {
        &self.tool
    }

    pub fn coupling(&self) -> &GuideCoupling<T> {
        &self.coupling
    }

    pub fn set_gains(&mut self, stiffness: Matrix6<T>, damping: Matrix6<T>) -> Result<()> {
        self.coupling =
            GuideCoupling::new(self.coupling.manikin_frame.clone(), stiffness, damping)?;
        Ok(())
    }

    pub fn tool_pose(&self, state: &SimState<T>) -> Result<Isometry3<T>> {
        let frames = forward_kinematics(&self.chain, state)?;
        Ok(self.tool.pose(&frames))
    }

    /// Coupling geometry at the current manikin and guide configurations.
    pub fn coupling_term(
        &self,
        manikin: &KinematicChain<T>,
        manikin_frames: &[Isometry3<T>],
        guide_state: &SimState<T>,
    ) -> Result<CouplingTerm<T>> {
        manikin.check_link(self.coupling.manikin_frame.link)?;
        let guide_frames = forward_kinematics(&self.chain, guide_state)?;
        let manikin_pose = self.coupling.manikin_frame.pose(manikin_frames);
        let tool_pose = self.tool.pose(&guide_frames);
        Ok(CouplingTerm {
            manikin_jacobian: self
                .coupling
                .manikin_frame
                .jacobian(manikin, manikin_frames),
            guide_jacobian: self.tool.jacobian(&self.chain, &guide_frames),
            error: pose_error(&tool_pose, &manikin_pose),
            stiffness: self.coupling.stiffness,
            damping: self.coupling.damping,
        })
    }
}

/// Linearized coupling: `W = K_g·err + B_g(J_v q̇_v − J_m q̇)` on the manikin,
/// `−W` on the guide, with `err = x_tool ⊖ x_manikin`.
#[derive(Debug, Clone)]
pub struct CouplingTerm<T: Real> {
    pub manikin_jacobian: DMatrix<T>,
    pub guide_jacobian: DMatrix<T>,
    pub error: Vector6<T>,
    pub stiffness: Matrix6<T>,
    pub damping: Matrix6<T>,
}

impl<T: Real> CouplingTerm<T> {
    /// `(wrench on manikin, wrench on guide)`, world coordinates, each
    /// applied at its own frame.
    pub fn wrenches(
        &self,
        manikin_qdot: &DVector<T>,
        guide_qdot: &DVector<T>,
    ) -> (Vector6<T>, Vector6<T>) {
        let vm = &self.manikin_jacobian * manikin_qdot;
        let vg = &self.guide_jacobian * guide_qdot;
        let rel = Vector6::from_iterator((vg - vm).iter().copied());
        let w = self.stiffness * self.error + self.damping * rel;
        (w, -w)
    }

    pub fn potential(&self) -> T {
        pose_potential(&self.stiffness, &self.error)
    }

    /// Power dissipated in `B_g` at the given velocities.
    pub fn dissipation(&self, manikin_qdot: &DVector<T>, guide_qdot: &DVector<T>) -> T {
        let rel = &self.guide_jacobian * guide_qdot - &self.manikin_jacobian * manikin_qdot;
        let rel = Vector6::from_iterator(rel.iter().copied());
        rel.dot(&(self.damping * rel))
    }
}

/// Equal and opposite coupling wrenches for the given states and velocities.
pub fn guide_wrenches<T: Real>(
    mech: &VirtualMechanism<T>,
    manikin: &KinematicChain<T>,
    manikin_state: &SimState<T>,
    manikin_qdot: &DVector<T>,
    guide_state: &SimState<T>,
    guide_qdot: &DVector<T>,
) -> Result<(Vector6<T>, Vector6<T>)> {
    let frames = forward_kinematics(manikin, manikin_state)?;
    let term = mech.coupling_term(manikin, &frames, guide_state)?;
    if manikin_qdot.len() != manikin.dof() || guide_qdot.len() != mech.chain.dof() {
        return Err(Error::config("velocity dimensions do not match the chains"));
    }
    Ok(term.wrenches(manikin_qdot, guide_qdot))
}

/// Guide velocity `q̇_v = B_v⁻¹ J_vᵀ W` for a wrench `W` on its tool frame.
pub fn guide_velocity<T: Real>(
    mech: &VirtualMechanism<T>,
    guide_state: &SimState<T>,
    wrench: &Vector6<T>,
) -> Result<DVector<T>> {
    let frames = forward_kinematics(&mech.chain, guide_state)?;
    let jac = mech.tool.jacobian(&mech.chain, &frames);
    let torque = TorqueVector::new(
        jac.tr_mul(&DVector::from_column_slice(wrench.as_slice())),
        TorqueSource::Guide,
    )?;
    Ok(mech.mobility.solve(&torque.values))
}

/// One explicit guide step under a wrench held over `dt`.
pub fn step_guide<T: Real>(
    mech: &VirtualMechanism<T>,
    guide_state: &SimState<T>,
    wrench: &Vector6<T>,
    dt: T,
) -> Result<SimState<T>> {
    let qdot = guide_velocity(mech, guide_state, wrench)?;
    integrate(&mech.chain, guide_state, &qdot, dt)
}

/// Angle between the world tool axis and the ideal axis, in `[0, π]`.
pub fn axis_error<T: Real>(
    tool_pose: &Isometry3<T>,
    ideal_axis: &Unit<Vector3<T>>,
    tool_axis_local: &Unit<Vector3<T>>,
) -> T {
    let actual = tool_pose.rotation * tool_axis_local.into_inner();
    // atan2 keeps full precision near 0 and π where acos does not.
    let cross = actual.cross(ideal_axis).norm();
    let dot = actual.dot(ideal_axis);
    cross.atan2(dot)
}

/// Implicit system on the stacked velocity `(q̇, q̇_v₁, q̇_v₂, …)`: manikin
/// tasks and external torques act on the first block, each coupling acts as
/// a task on the relative twist `J_m q̇ − J_v q̇_v`.
pub fn coupled_system<T: Real>(
    manikin_damping: &DMatrix<T>,
    tasks: &[ImplicitTask<T>],
    external: &DVector<T>,
    guides: &[(&CouplingTerm<T>, &DMatrix<T>)],
) -> Result<ImplicitSystem<T>> {
    let n = manikin_damping.nrows();
    let total = n + guides.iter().map(|(_, b)| b.nrows()).sum::<usize>();
    let mut damping = DMatrix::zeros(total, total);
    damping.view_mut((0, 0), (n, n)).copy_from(manikin_damping);
    let mut ext = DVector::zeros(total);
    if external.len() != n {
        return Err(Error::config(
            "external torque dimension differs from the manikin",
        ));
    }
    ext.rows_mut(0, n).copy_from(external);
    let pad = |j: &DMatrix<T>| {
        let mut p = DMatrix::zeros(j.nrows(), total);
        p.view_mut((0, 0), (j.nrows(), j.ncols())).copy_from(j);
        p
    };
    let mut stacked: Vec<ImplicitTask<T>> = tasks
        .iter()
        .map(|t| {
            if t.jacobian.ncols() != n {
                return Err(Error::config(
                    "task Jacobian width differs from the manikin",
                ));
            }
            Ok(ImplicitTask {
                jacobian: pad(&t.jacobian),
                ..t.clone()
            })
        })
        .collect::<Result<_>>()?;
    let mut offset = n;
    for (term, bv) in guides {
        let nv = bv.nrows();
        if term.manikin_jacobian.ncols() != n || term.guide_jacobian.ncols() != nv {
            return Err(Error::config("coupling Jacobians do not match the chains"));
        }
        damping.view_mut((offset, offset), (nv, nv)).copy_from(bv);
        let mut jac = pad(&term.manikin_jacobian);
        jac.view_mut((0, offset), (6, nv))
            .copy_from(&(-&term.guide_jacobian));
        stacked.push(ImplicitTask {
            jacobian: jac,
            stiffness: DMatrix::from_column_slice(6, 6, term.stiffness.as_slice()),
            damping: DMatrix::from_column_slice(6, 6, term.damping.as_slice()),
            error: DVector::from_column_slice(term.error.as_slice()),
            desired_velocity: DVector::zeros(6),
        });
        offset += nv;
    }
    ImplicitSystem::assemble(&damping, &stacked, &ext)
}
