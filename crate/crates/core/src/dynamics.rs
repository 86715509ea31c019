//! First-order damped dynamics `B_a q̇ = Γ` and its implicit task-space
//! resolvent `(B_a + Σ JᵀB_cJ) q̇ = Σ Jᵀ(K·err + B_c v_d) + Γ_ext`.

use nalgebra::{DMatrix, DVector};

use crate::chain::KinematicChain;
use crate::linalg::SpdSystem;
use crate::{Error, Real, Result};

/// Relative eigenvalue threshold below which a system matrix is singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TorqueSource {
    Task,
    Internal,
    Constraint,
    Guide,
    /// Constant torques such as an emulated weight.
    External,
}

/// Joint torques `Γ` with the subsystem that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueVector<T: Real> {
    pub values: DVector<T>,
    pub source: TorqueSource,
}

impl<T: Real> TorqueVector<T> {
    pub fn new(values: DVector<T>, source: TorqueSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite {source:?} torque")));
        }
        Ok(Self { values, source })
    }

    pub fn zeros(n: usize, source: TorqueSource) -> Self {
        Self {
            values: DVector::zeros(n),
            source,
        }
    }
}

/// One task's contribution to the implicit solve. The task space may have
/// any dimension `m`; controlled frames use `m = 6`.
#[derive(Debug, Clone)]
pub struct ImplicitTask<T: Real> {
    /// m×n Jacobian.
    pub jacobian: DMatrix<T>,
    /// m×m stiffness `K`, symmetric PSD.
    pub stiffness: DMatrix<T>,
    /// m×m damping `B_c`, symmetric PD.
    pub damping: DMatrix<T>,
    /// `x_d − x`.
    pub error: DVector<T>,
    /// `v_d`.
    pub desired_velocity: DVector<T>,
}

impl<T: Real> ImplicitTask<T> {
    fn check(&self, n: usize) -> Result<()> {
        let m = self.jacobian.nrows();
        if self.jacobian.ncols() != n
            || self.stiffness.shape() != (m, m)
            || self.damping.shape() != (m, m)
            || self.error.len() != m
            || self.desired_velocity.len() != m
        {
            return Err(Error::config(format!(
                "task term dimensions do not match a {m}-D task on {n} DOF"
            )));
        }
        Ok(())
    }

    /// `K·err + B_c·v_d`, the part of the task wrench known before the solve.
    pub fn feedforward(&self) -> DVector<T> {
        &self.stiffness * &self.error + &self.damping * &self.desired_velocity
    }

    /// Task wrench `K·err + B_c(v_d − J q̇)` once `q̇` is known.
    pub fn wrench(&self, qdot: &DVector<T>) -> DVector<T> {
        let v = &self.jacobian * qdot;
        &self.stiffness * &self.error + &self.damping * (&self.desired_velocity - v)
    }
}

/// Assembled `S q̇ = b`.
#[derive(Debug, Clone)]
pub struct ImplicitSystem<T: Real> {
    pub matrix: DMatrix<T>,
    pub rhs: DVector<T>,
}

impl<T: Real> ImplicitSystem<T> {
    pub fn assemble(
        damping: &DMatrix<T>,
        tasks: &[ImplicitTask<T>],
        external: &DVector<T>,
    ) -> Result<Self> {
        let n = damping.nrows();
        if external.len() != n {
            return Err(Error::config(format!(
                "external torque has {} entries, expected {n}",
                external.len()
            )));
        }
        let mut matrix = damping.clone();
        let mut rhs = external.clone();
        for task in tasks {
            task.check(n)?;
            let jt = task.jacobian.transpose();
            matrix += &jt * &task.damping * &task.jacobian;
            rhs += &jt * task.feedforward();
        }
        Ok(Self { matrix, rhs })
    }

    pub fn factorize(&self) -> Result<SpdSystem<T>, (Error, T)> {
        SpdSystem::new(&self.matrix, T::lit(SINGULAR_RATIO))
    }
}

/// Result of the implicit solve.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySolveReport<T: Real> {
    pub qdot: DVector<T>,
    pub system_matrix_condition: T,
    pub solvable: bool,
}

/// `q̇ = B_a⁻¹ ΣΓ`. Requires `B_a` positive definite.
pub fn solve_velocity_explicit<T: Real>(
    chain: &KinematicChain<T>,
    torques: &[TorqueVector<T>],
) -> Result<DVector<T>> {
    let n = chain.dof();
    let mut total = DVector::zeros(n);
    for t in torques {
        if t.values.len() != n {
            return Err(Error::config(format!(
                "{:?} torque has {} entries, expected {n}",
                t.source,
                t.values.len()
            )));
        }
        total += &t.values;
    }
    let system = SpdSystem::new(chain.damping(), T::lit(SINGULAR_RATIO)).map_err(|(e, _)| {
        Error::Singular(format!(
            "{e}; B_a must be definite for the explicit solve, use the implicit task solve"
        ))
    })?;
    Ok(system.solve(&total))
}

/// Implicit task-space solve. A singular system matrix is reported through
/// `solvable = false` (with a zero velocity) rather than an error.
pub fn solve_velocity_implicit<T: Real>(
    chain: &KinematicChain<T>,
    tasks: &[ImplicitTask<T>],
    external_torques: &DVector<T>,
) -> Result<VelocitySolveReport<T>> {
    let system = ImplicitSystem::assemble(chain.damping(), tasks, external_torques)?;
    Ok(match system.factorize() {
        Ok(f) => {
            let qdot = f.solve(&system.rhs);
            if qdot.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(
                    "implicit solve produced a non-finite velocity".into(),
                ));
            }
            VelocitySolveReport {
                qdot,
                system_matrix_condition: f.condition(),
                solvable: true,
            }
        }
        Err((_, condition)) => VelocitySolveReport {
            qdot: DVector::zeros(chain.dof()),
            system_matrix_condition: condition,
            solvable: false,
        },
    })
}
