//! Constructive proof that prioritizing one external port over another by
//! projection can drain unbounded energy.

use nalgebra::{DMatrix, DVector};

use super::ledger::{passivity_verdict, LedgerVerdict, PassivityLedger};
use super::port::{Port, PortRole};
use crate::chain::{forward_kinematics, integrate, KinematicChain, SimState};
use crate::control::{build_internal_projection, Projection, TaskFrame, PINV_CUTOFF};
use crate::dynamics::SINGULAR_RATIO;
use crate::linalg::{self, SpdSystem};
use crate::{Error, Real, Result};

/// Two ports `(J₁, W₁)` and `(J₂, W₂)` with port 1 prioritized through `Π₁ᵀ`
/// such that
///
/// ```text
/// J₂ᵀW₂ ≠ 0,   J₁ᵀW₁ + ½J₂ᵀW₂ = 0,   J₂B_a⁻¹Π₁ᵀJ₂ᵀ = 0
/// ```
///
/// whence the two-port power is the constant `−¼ W₂ᵀJ₂B_a⁻¹J₂ᵀW₂ < 0`.
#[derive(Debug, Clone)]
pub struct Counterexample<T: Real> {
    pub j1: DMatrix<T>,
    pub j2: DMatrix<T>,
    pub w1: DVector<T>,
    pub w2: DVector<T>,
    pub damping: DMatrix<T>,
    pub predicted_power: T,
    pub projection: Projection<T>,
}

/// Residuals of the three defining conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleResiduals<T: Real> {
    /// `‖J₂ᵀW₂‖`, must stay away from zero.
    pub seed_torque: T,
    /// `‖J₁ᵀW₁ + ½J₂ᵀW₂‖`.
    pub balance: T,
    /// `max |J₂B_a⁻¹Π₁ᵀJ₂ᵀ|`.
    pub priority: T,
}

fn damping_system<T: Real>(damping: &DMatrix<T>) -> Result<SpdSystem<T>> {
    SpdSystem::new(damping, T::lit(SINGULAR_RATIO))
        .map_err(|(e, _)| Error::Singular(format!("B_a must be invertible: {e}")))
}

/// Builds the `J₂ = J₁` instance: `W₂ = seed`, `W₁` the least-squares
/// solution of `J₁ᵀW₁ = −½J₁ᵀW₂`.
pub fn build_counterexample<T: Real>(
    j1: &DMatrix<T>,
    damping: &DMatrix<T>,
    w2_seed: &DVector<T>,
) -> Result<Counterexample<T>> {
    if j1.nrows() != w2_seed.len() || j1.ncols() != damping.nrows() {
        return Err(Error::config("J1, B_a and W2 dimensions do not agree"));
    }
    let b = damping_system(damping)?;
    let seed_torque = j1.transpose() * w2_seed;
    if seed_torque.norm() <= T::lit(1e-12) * (T::one() + w2_seed.norm()) {
        return Err(Error::Construction(
            "J1ᵀ W2 = 0: degenerate seed wrench".into(),
        ));
    }
    let rhs = -&seed_torque * T::lit(0.5);
    let w1 = linalg::pseudo_inverse(&j1.transpose(), T::lit(PINV_CUTOFF)) * &rhs;
    let residual = (j1.transpose() * &w1 - &rhs).norm();
    if residual > T::lit(1e-8) {
        return Err(Error::Construction(format!(
            "balance condition residual {:e}",
            residual.as_f64()
        )));
    }
    let projection = build_internal_projection(j1, damping)?;
    let predicted_power = -seed_torque.dot(&b.solve(&seed_torque)) * T::lit(0.25);
    Ok(Counterexample {
        j1: j1.clone(),
        j2: j1.clone(),
        w1,
        w2: w2_seed.clone(),
        damping: damping.clone(),
        predicted_power,
        projection,
    })
}

impl<T: Real> Counterexample<T> {
    pub fn residuals(&self) -> Result<CounterexampleResiduals<T>> {
        let b = damping_system(&self.damping)?;
        let j2t_w2 = self.j2.transpose() * &self.w2;
        let balance = (self.j1.transpose() * &self.w1 + &j2t_w2 * T::lit(0.5)).norm();
        let mobility = b.solve_matrix(&(self.projection.matrix() * self.j2.transpose()));
        let priority = (&self.j2 * mobility).abs().max();
        Ok(CounterexampleResiduals {
            seed_torque: j2t_w2.norm(),
            balance,
            priority,
        })
    }

    /// Prioritized torques `Γ = J₁ᵀW₁ + Π₁ᵀJ₂ᵀW₂`.
    pub fn torque(&self) -> DVector<T> {
        self.j1.transpose() * &self.w1 + self.projection.apply(&(self.j2.transpose() * &self.w2))
    }

    /// `W₁ᵀV₁ + W₂ᵀV₂` for the prioritized torques.
    pub fn two_port_power(&self) -> Result<T> {
        let qdot = damping_system(&self.damping)?.solve(&self.torque());
        Ok(self.w1.dot(&(&self.j1 * &qdot)) + self.w2.dot(&(&self.j2 * &qdot)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrioritizedSample<T: Real> {
    pub t: T,
    pub power: T,
    pub predicted_power: T,
    pub total_energy: T,
}

#[derive(Debug, Clone)]
pub struct PrioritizedRun<T: Real> {
    pub samples: Vec<PrioritizedSample<T>>,
    pub ledger: PassivityLedger<T>,
    pub verdict: LedgerVerdict<T>,
    pub final_state: SimState<T>,
}

impl<T: Real> PrioritizedRun<T> {
    /// Mean measured two-port power.
    pub fn mean_power(&self) -> T {
        let n = T::from_usize(self.samples.len().max(1)).unwrap();
        self.samples.iter().fold(T::zero(), |acc, s| acc + s.power) / n
    }

    pub fn mean_predicted_power(&self) -> T {
        let n = T::from_usize(self.samples.len().max(1)).unwrap();
        self.samples
            .iter()
            .fold(T::zero(), |acc, s| acc + s.predicted_power)
            / n
    }
}

/// Simulates the prioritized two-port scheme on a chain: both constant
/// wrenches act on frames of the chain, port 2's torque is projected into
/// the kernel of `J₁B_a⁻¹` rebuilt at every step, and `B_a q̇ = Γ`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_prioritized<T: Real>(
    chain: &KinematicChain<T>,
    initial: &SimState<T>,
    port1: &TaskFrame<T>,
    port2: &TaskFrame<T>,
    w1: &DVector<T>,
    w2: &DVector<T>,
    beta_sq: T,
    dt: T,
    steps: usize,
) -> Result<PrioritizedRun<T>> {
    let b = damping_system(chain.damping())?;
    let mut ledger = PassivityLedger::new(beta_sq)?;
    let mut state = initial.clone();
    let mut samples = Vec::with_capacity(steps);
    for _ in 0..steps {
        let frames = forward_kinematics(chain, &state)?;
        let j1 = port1.jacobian(chain, &frames);
        let j2 = port2.jacobian(chain, &frames);
        let projection = build_internal_projection(&j1, chain.damping())?;
        let j2t_w2 = j2.transpose() * w2;
        let gamma = j1.transpose() * w1 + projection.apply(&j2t_w2);
        let qdot = b.solve(&gamma);
        let ports = [
            Port::measured("port1", PortRole::Task, j1, w1.clone(), &qdot),
            Port::measured("port2", PortRole::Task, j2, w2.clone(), &qdot),
        ];
        let power = ports[0].power() + ports[1].power();
        ledger.record_step(&ports, dt)?;
        samples.push(PrioritizedSample {
            t: ledger.time(),
            power,
            predicted_power: -j2t_w2.dot(&b.solve(&j2t_w2)) * T::lit(0.25),
            total_energy: ledger.total_energy(),
        });
        state = integrate(chain, &state, &qdot, dt)?;
    }
    let verdict = passivity_verdict(&ledger);
    Ok(PrioritizedRun {
        samples,
        ledger,
        verdict,
        final_state: state,
    })
}
