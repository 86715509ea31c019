use nalgebra::{DMatrix, DVector};

use super::potential::InternalPotential;
use crate::chain::{KinematicChain, SimState};
use crate::dynamics::{TorqueSource, TorqueVector, SINGULAR_RATIO};
use crate::linalg::{self, SpdSystem};
use crate::{Error, Real, Result};

/// Singular values below this fraction of the largest are dropped.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Torque-space projection `Π₁ᵀ` into the kernel of `J₁ B_a⁻¹`.
///
/// Valid only for the `(q, J₁)` it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T: Real> {
    matrix: DMatrix<T>,
    source_jacobian: DMatrix<T>,
}

impl<T: Real> Projection<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            source_jacobian: DMatrix::zeros(0, n),
        }
    }

    /// `Π₁ᵀ`.
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn source_jacobian(&self) -> &DMatrix<T> {
        &self.source_jacobian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |ΠΠ − Π|`.
    pub fn idempotency_residual(&self) -> T {
        (&self.matrix * &self.matrix - &self.matrix).abs().max()
    }

    /// `max |J₁ B_a⁻¹ Π|`.
    pub fn annihilation_residual(&self, damping: &DMatrix<T>) -> Result<T> {
        let sys = spd(damping)?;
        let a = sys
            .solve_matrix(&self.source_jacobian.transpose())
            .transpose();
        Ok(if a.is_empty() {
            T::zero()
        } else {
            (a * &self.matrix).abs().max()
        })
    }

    /// `B_a⁻¹ Π`, the mobility seen by projected torques.
    pub fn projected_mobility(&self, damping: &DMatrix<T>) -> Result<DMatrix<T>> {
        Ok(spd(damping)?.solve_matrix(&self.matrix))
    }

    pub fn apply(&self, torque: &DVector<T>) -> DVector<T> {
        &self.matrix * torque
    }
}

fn spd<T: Real>(damping: &DMatrix<T>) -> Result<SpdSystem<T>> {
    SpdSystem::new(damping, T::lit(SINGULAR_RATIO)).map_err(|(e, _)| {
        Error::Singular(format!("B_a must be invertible to build a projection: {e}"))
    })
}

fn check_dims<T: Real>(j1: &DMatrix<T>, damping: &DMatrix<T>) -> Result<()> {
    if damping.nrows() != damping.ncols() || j1.ncols() != damping.nrows() {
        return Err(Error::config(format!(
            "J1 is {}x{} but B_a is {}x{}",
            j1.nrows(),
            j1.ncols(),
            damping.nrows(),
            damping.ncols()
        )));
    }
    Ok(())
}

/// Internal-control projection into `Ker(J₁ B_a⁻¹)`.
///
/// With `B_a = L Lᵀ` and `Ã = J₁ L⁻ᵀ`, returns `Π₁ᵀ = L (I − Ã⁺Ã) L⁻¹`.
/// It is idempotent, annihilated by `J₁ B_a⁻¹`, and `B_a⁻¹ Π₁ᵀ =
/// L⁻ᵀ (I − Ã⁺Ã) L⁻¹` is symmetric positive semi-definite, so projected
/// gradient descent never raises the potential. For `B_a ∝ I` it coincides
/// with `I − (J₁B_a⁻¹)ᵀ(J₁B_a⁻¹)⁺ᵀ`.
pub fn build_internal_projection<T: Real>(
    j1: &DMatrix<T>,
    damping: &DMatrix<T>,
) -> Result<Projection<T>> {
    check_dims(j1, damping)?;
    spd(damping)?;
    let n = damping.nrows();
    let chol = damping
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("B_a is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Singular("B_a Cholesky factor is singular".into()))?;
    // Ã = J₁ L⁻ᵀ
    let a_tilde = j1 * l_inv.transpose();
    let range = linalg::pseudo_inverse(&a_tilde, T::lit(PINV_CUTOFF)) * &a_tilde;
    if range.iter().all(|x| x.is_zero()) {
        return Ok(Projection {
            matrix: DMatrix::identity(n, n),
            source_jacobian: j1.clone(),
        });
    }
    let kernel = DMatrix::identity(n, n) - range;
    Ok(Projection {
        matrix: &l * kernel * l_inv,
        source_jacobian: j1.clone(),
    })
}

/// The Euclidean-orthogonal projector `I − A⁺A` with `A = J₁ B_a⁻¹`.
///
/// Annihilated by `J₁ B_a⁻¹` like [`build_internal_projection`], but
/// `B_a⁻¹ Π` loses symmetry and definiteness once `B_a` is anisotropic.
pub fn orthogonal_projection<T: Real>(
    j1: &DMatrix<T>,
    damping: &DMatrix<T>,
) -> Result<Projection<T>> {
    check_dims(j1, damping)?;
    let n = damping.nrows();
    let a = spd(damping)?.solve_matrix(&j1.transpose()).transpose();
    let matrix = DMatrix::identity(n, n) - linalg::pseudo_inverse(&a, T::lit(PINV_CUTOFF)) * &a;
    Ok(Projection {
        matrix,
        source_jacobian: j1.clone(),
    })
}

/// `Γ_int = −α Π₁ᵀ ∂U/∂q`.
pub fn internal_torque<T: Real>(
    potential: &dyn InternalPotential<T>,
    projection: &Projection<T>,
    chain: &KinematicChain<T>,
    state: &SimState<T>,
) -> Result<TorqueVector<T>> {
    let g = potential.gradient(chain, state);
    if g.len() != projection.dim() {
        return Err(Error::config(
            "potential gradient and projection dimensions differ",
        ));
    }
    TorqueVector::new(
        -projection.apply(&g) * potential.alpha(),
        TorqueSource::Internal,
    )
}

/// `‖Π₁ᵀg − g‖ / max(‖g‖, 1e-15)` with `g = ∂U/∂q`; zero when the potential
/// is self-projective at `q`.
pub fn self_projectivity_residual<T: Real>(
    potential: &dyn InternalPotential<T>,
    projection: &Projection<T>,
    chain: &KinematicChain<T>,
    state: &SimState<T>,
) -> T {
    gradient_projectivity_residual(projection, &potential.gradient(chain, state))
}

/// [`self_projectivity_residual`] for an explicit gradient vector.
pub fn gradient_projectivity_residual<T: Real>(
    projection: &Projection<T>,
    gradient: &DVector<T>,
) -> T {
    (projection.apply(gradient) - gradient).norm() / gradient.norm().max(T::lit(1e-15))
}
