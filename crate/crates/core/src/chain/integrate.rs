//! Runge-Kutta-Munthe-Kaas (RKMK4) time integration.
//!
//! The configuration space is SE(3) × Rⁿ: the floating base moves by right
//! multiplication with the SE(3) exponential of its body twist, scalar joints
//! move additively. Only the se(3) block has a non-trivial bracket.

use nalgebra::{DVector, Vector6};

use super::lie;
use super::model::{KinematicChain, SimState};
use crate::{Error, Real, Result};

fn check_velocity<T: Real>(chain: &KinematicChain<T>, qdot: &DVector<T>) -> Result<()> {
    if qdot.len() != chain.dof() {
        return Err(Error::config(format!(
            "velocity has {} entries, chain has {} DOF",
            qdot.len(),
            chain.dof()
        )));
    }
    if qdot.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite generalized velocity".into()));
    }
    Ok(())
}

fn base_part<T: Real>(u: &DVector<T>) -> Vector6<T> {
    Vector6::from_iterator(u.rows(0, 6).iter().copied())
}

/// `state · exp(u)` for an algebra element `u` laid out like a velocity.
pub fn retract<T: Real>(
    chain: &KinematicChain<T>,
    state: &SimState<T>,
    u: &DVector<T>,
) -> SimState<T> {
    let mut next = state.clone();
    let offset = if let Some(base) = &state.base {
        next.base = Some(base * lie::se3_exp(&base_part(u)));
        6
    } else {
        0
    };
    for c in 0..chain.coordinate_count() {
        next.joints[c] += u[offset + c];
    }
    next
}

/// Algebra rate `u̇` for a body velocity `v` at `y0 · exp(u)`, i.e.
/// `dexp⁻¹_{−u}(v)`; identity on the scalar joints.
fn dexpinv<T: Real>(chain: &KinematicChain<T>, u: &DVector<T>, v: &DVector<T>) -> DVector<T> {
    let mut out = v.clone();
    if chain.has_floating_base() {
        let corrected = lie::dexpinv(&-base_part(u), &base_part(v));
        out.rows_mut(0, 6).copy_from(&corrected);
    }
    out
}

/// One RKMK4 step of length `dt` along the velocity field `field`.
///
/// The field returns the generalized velocity (base body twist first) at a
/// given configuration.
pub fn integrate_field<T, F>(
    chain: &KinematicChain<T>,
    state: &SimState<T>,
    dt: T,
    mut field: F,
) -> Result<SimState<T>>
where
    T: Real,
    F: FnMut(&SimState<T>) -> Result<DVector<T>>,
{
    if !(dt > T::zero()) {
        return Err(Error::config(format!(
            "dt must be positive, got {}",
            dt.as_f64()
        )));
    }
    state.check(chain)?;
    let half = T::lit(0.5);

    let f1 = field(state)?;
    check_velocity(chain, &f1)?;
    let k1 = f1 * dt;

    let u2 = &k1 * half;
    let f2 = field(&retract(chain, state, &u2))?;
    check_velocity(chain, &f2)?;
    let k2 = dexpinv(chain, &u2, &f2) * dt;

    let u3 = &k2 * half;
    let f3 = field(&retract(chain, state, &u3))?;
    check_velocity(chain, &f3)?;
    let k3 = dexpinv(chain, &u3, &f3) * dt;

    let f4 = field(&retract(chain, state, &k3))?;
    check_velocity(chain, &f4)?;
    let k4 = dexpinv(chain, &k3, &f4) * dt;

    let u = (k1 + (k2 + k3) * T::lit(2.0) + k4) / T::lit(6.0);
    let mut next = retract(chain, state, &u);
    next.t = state.t + dt;
    Ok(next)
}

/// Advances `state` by `dt` under the constant generalized velocity `qdot`.
///
/// Scalar coordinates move by `qdot · dt`; the base follows the group
/// exponential so its orientation stays a unit quaternion.
pub fn integrate<T: Real>(
    chain: &KinematicChain<T>,
    state: &SimState<T>,
    qdot: &DVector<T>,
    dt: T,
) -> Result<SimState<T>> {
    check_velocity(chain, qdot)?;
    integrate_field(chain, state, dt, |_| Ok(qdot.clone()))
}
