//! Leak of a projected internal potential into a second port.
//!
//! With the internal projection built against port 1 only, the power at a
//! second port (`W₁ = 0`) is
//!
//! ```text
//! W₂ᵀV₂ = W₂ᵀJ₂B_a⁻¹J₂ᵀW₂ − α W₂ᵀJ₂B_a⁻¹Π₁ᵀ ∂Uᵀ/∂q
//! ```
//!
//! and the cross term has no sign.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

use crate::chain::{forward_kinematics, integrate, KinematicChain, SimState};
use crate::control::{build_internal_projection, InternalPotential, Projection, TaskFrame};
use crate::dynamics::SINGULAR_RATIO;
use crate::linalg::SpdSystem;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakSample<T: Real> {
    pub t: T,
    /// `W₂ᵀV₂`.
    pub power: T,
    /// `W₂ᵀJ₂B_a⁻¹J₂ᵀW₂`.
    pub direct: T,
    /// `−α W₂ᵀJ₂B_a⁻¹Π₁ᵀ∂Uᵀ/∂q`.
    pub cross: T,
}

/// `−α W₂ᵀJ₂B_a⁻¹Π₁ᵀ g`.
pub fn cross_term<T: Real>(
    j2: &DMatrix<T>,
    w2: &DVector<T>,
    damping: &DMatrix<T>,
    projection: &Projection<T>,
    gradient: &DVector<T>,
    alpha: T,
) -> Result<T> {
    let b = SpdSystem::new(damping, T::lit(SINGULAR_RATIO)).map_err(|(e, _)| e)?;
    let mobility = b.solve(&projection.apply(gradient));
    Ok(-alpha * w2.dot(&(j2 * mobility)))
}

/// Runs `W₁ = 0`, a constant wrench `W₂` on `contact_port` and projected
/// internal control against `task_port`, sampling the port-2 power.
#[allow(clippy::too_many_arguments)]
pub fn two_port_internal_leak_demo<T: Real>(
    chain: &KinematicChain<T>,
    initial: &SimState<T>,
    potential: &dyn InternalPotential<T>,
    task_port: &TaskFrame<T>,
    contact_port: &TaskFrame<T>,
    contact_wrench: &DVector<T>,
    dt: T,
    steps: usize,
) -> Result<Vec<LeakSample<T>>> {
    if contact_wrench.len() != 6 {
        return Err(Error::config("contact wrench must be a 6-vector"));
    }
    let b = SpdSystem::new(chain.damping(), T::lit(SINGULAR_RATIO)).map_err(|(e, _)| e)?;
    let alpha = potential.alpha();
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let frames = forward_kinematics(chain, &state)?;
        let j1 = task_port.jacobian(chain, &frames);
        let j2 = contact_port.jacobian(chain, &frames);
        let projection = build_internal_projection(&j1, chain.damping())?;
        let g = potential.gradient(chain, &state);
        let contact_torque = j2.transpose() * contact_wrench;
        let internal = projection.apply(&g) * -alpha;
        let qdot = b.solve(&(&contact_torque + &internal));
        let power = contact_wrench.dot(&(&j2 * &qdot));
        let direct = contact_torque.dot(&b.solve(&contact_torque));
        let cross = contact_wrench.dot(&(&j2 * b.solve(&internal)));
        state = integrate(chain, &state, &qdot, dt)?;
        out.push(LeakSample {
            t: state.t,
            power,
            direct,
            cross,
        });
    }
    Ok(out)
}

/// Worst configuration found by [`adversarial_leak_search`].
#[derive(Debug, Clone)]
pub struct LeakWitness<T: Real> {
    pub j2: DMatrix<T>,
    pub w2: DVector<T>,
    pub gradient: DVector<T>,
    pub cross: T,
}

/// Random search over port-2 Jacobians, wrenches and gradients for the most
/// negative cross term. Each trial also tries the gradient aligned with
/// `Π₁B_a⁻¹J₂ᵀW₂`, the direction that makes the cross term
/// `−α‖·‖²`-like.
pub fn adversarial_leak_search<T: Real, R: Rng>(
    j1: &DMatrix<T>,
    damping: &DMatrix<T>,
    alpha: T,
    rng: &mut R,
    trials: usize,
) -> Result<LeakWitness<T>> {
    let n = damping.nrows();
    let m = j1.nrows();
    let projection = build_internal_projection(j1, damping)?;
    let b = SpdSystem::new(damping, T::lit(SINGULAR_RATIO)).map_err(|(e, _)| e)?;
    let mut sample =
        |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| T::lit(rng.random::<f64>() * 2.0 - 1.0));

    let mut best: Option<LeakWitness<T>> = None;
    for _ in 0..trials {
        let j2 = sample(m, n);
        let w2 = sample(m, 1).column(0).into_owned();
        let random_g = sample(n, 1).column(0).into_owned();
        let mobility_t = b.solve(&(j2.transpose() * &w2));
        let aligned_g = projection.matrix().transpose() * mobility_t;
        for g in [random_g, aligned_g] {
            let cross = cross_term(&j2, &w2, damping, &projection, &g, alpha)?;
            if best.as_ref().is_none_or(|w| cross < w.cross) {
                best = Some(LeakWitness {
                    j2: j2.clone(),
                    w2: w2.clone(),
                    gradient: g,
                    cross,
                });
            }
        }
    }
    best.ok_or_else(|| Error::config("adversarial search needs at least one trial"))
}
