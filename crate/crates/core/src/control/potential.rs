use nalgebra::DVector;

use crate::chain::{KinematicChain, SimState};
use crate::{Error, Real, Result};

/// Scalar posture potential `U(q)` minimized by internal (null-space) control.
pub trait InternalPotential<T: Real> {
    fn value(&self, chain: &KinematicChain<T>, state: &SimState<T>) -> T;

    /// `∂U/∂q` in the velocity layout of the chain (zeros on the base twist).
    fn gradient(&self, chain: &KinematicChain<T>, state: &SimState<T>) -> DVector<T>;

    /// Gain `α ≥ 0`.
    fn alpha(&self) -> T;
}

/// `U(q) = ½ (q − q_ref)ᵀ diag(w) (q − q_ref)` over the scalar joints.
#[derive(Debug, Clone, PartialEq)]
pub struct PosturePotential<T: Real> {
    pub reference: DVector<T>,
    pub weights: DVector<T>,
    pub alpha: T,
}

impl<T: Real> PosturePotential<T> {
    pub fn new(reference: DVector<T>, weights: DVector<T>, alpha: T) -> Result<Self> {
        if reference.len() != weights.len() {
            return Err(Error::config(
                "posture reference and weights differ in length",
            ));
        }
        if alpha < T::zero() || weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::config(
                "posture gain and weights must be non-negative",
            ));
        }
        Ok(Self {
            reference,
            weights,
            alpha,
        })
    }
}

impl<T: Real> InternalPotential<T> for PosturePotential<T> {
    fn value(&self, _chain: &KinematicChain<T>, state: &SimState<T>) -> T {
        let d = &state.joints - &self.reference;
        d.component_mul(&self.weights).dot(&d) * T::lit(0.5)
    }

    fn gradient(&self, chain: &KinematicChain<T>, state: &SimState<T>) -> DVector<T> {
        let mut g = DVector::zeros(chain.dof());
        let offset = chain.dof() - chain.coordinate_count();
        let local = (&state.joints - &self.reference).component_mul(&self.weights);
        g.rows_mut(offset, local.len()).copy_from(&local);
        g
    }

    fn alpha(&self) -> T {
        self.alpha
    }
}
