use std::collections::VecDeque;

use super::port::{Port, PortRole};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict<T: Real> {
    PassiveSoFar,
    /// Energy first dropped below `−β²` at this time.
    Violated(T),
}

impl<T: Real> Verdict<T> {
    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortAccount<T: Real> {
    pub id: String,
    pub role: PortRole,
    /// `∫ Wᵀ V dt`.
    pub energy: T,
    pub last_power: T,
    first_violation: Option<T>,
    previous_power: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerVerdict<T: Real> {
    pub total: Verdict<T>,
    pub per_port: Vec<(String, Verdict<T>)>,
}

/// Running per-port energy `E_p(t) = ∫₀ᵗ Wᵀ V dτ` against a storage bound
/// `β²`, integrated with the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct PassivityLedger<T: Real> {
    accounts: Vec<PortAccount<T>>,
    beta_sq: T,
    t: T,
    min_total: T,
    first_violation: Option<T>,
    history: VecDeque<(T, T)>,
    history_capacity: usize,
    rejected: usize,
}

impl<T: Real> PassivityLedger<T> {
    pub const DEFAULT_HISTORY: usize = 4096;

    pub fn new(beta_sq: T) -> Result<Self> {
        if !(beta_sq >= T::zero()) {
            return Err(Error::config("storage bound β² must be non-negative"));
        }
        Ok(Self {
            accounts: Vec::new(),
            beta_sq,
            t: T::zero(),
            min_total: T::zero(),
            first_violation: None,
            history: VecDeque::new(),
            history_capacity: Self::DEFAULT_HISTORY,
            rejected: 0,
        })
    }

    pub fn with_history_capacity(mut self, capacity: usize) -> Self {
        self.history_capacity = capacity;
        self
    }

    pub fn beta_sq(&self) -> T {
        self.beta_sq
    }

    pub fn time(&self) -> T {
        self.t
    }

    pub fn accounts(&self) -> &[PortAccount<T>] {
        &self.accounts
    }

    pub fn energy(&self, id: &str) -> Option<T> {
        self.accounts.iter().find(|a| a.id == id).map(|a| a.energy)
    }

    pub fn total_energy(&self) -> T {
        self.accounts
            .iter()
            .fold(T::zero(), |acc, a| acc + a.energy)
    }

    pub fn total_power(&self) -> T {
        self.accounts
            .iter()
            .fold(T::zero(), |acc, a| acc + a.last_power)
    }

    pub fn min_total_energy(&self) -> T {
        self.min_total
    }

    /// `(t, instantaneous total power)` samples, oldest first.
    pub fn history(&self) -> impl Iterator<Item = &(T, T)> {
        self.history.iter()
    }

    /// Samples refused because their power was not finite.
    pub fn rejected_samples(&self) -> usize {
        self.rejected
    }

    /// Forgets the previous power samples so the next step starts a new
    /// trapezoidal segment.
    pub fn begin_segment(&mut self) {
        for a in &mut self.accounts {
            a.previous_power = None;
        }
    }

    /// Advances time by `dt` and integrates each port's power over the step.
    /// Ports absent from `ports` contribute zero power.
    pub fn record_step(&mut self, ports: &[Port<T>], dt: T) -> Result<()> {
        if !(dt > T::zero()) {
            return Err(Error::config("ledger step must have dt > 0"));
        }
        let powers: Vec<T> = ports.iter().map(Port::power).collect();
        if let Some((p, _)) = ports.iter().zip(&powers).find(|(_, w)| !w.is_finite()) {
            self.rejected += 1;
            return Err(Error::Numerical(format!(
                "non-finite power at port {}",
                p.id
            )));
        }

        for port in ports {
            if !self.accounts.iter().any(|a| a.id == port.id) {
                self.accounts.push(PortAccount {
                    id: port.id.clone(),
                    role: port.role,
                    energy: T::zero(),
                    last_power: T::zero(),
                    first_violation: None,
                    previous_power: None,
                });
            }
        }

        self.t += dt;
        let half = T::lit(0.5);
        let mut total_power = T::zero();
        for account in &mut self.accounts {
            let now = ports
                .iter()
                .zip(&powers)
                .find(|(p, _)| p.id == account.id)
                .map(|(_, &w)| w)
                .unwrap_or_else(T::zero);
            let before = account.previous_power.unwrap_or(now);
            account.energy += (before + now) * half * dt;
            account.previous_power = Some(now);
            account.last_power = now;
            total_power += now;
            if account.first_violation.is_none() && account.energy < -self.beta_sq {
                account.first_violation = Some(self.t);
            }
        }

        let total = self.total_energy();
        self.min_total = self.min_total.min(total);
        if self.first_violation.is_none() && total < -self.beta_sq {
            self.first_violation = Some(self.t);
        }
        if self.history_capacity > 0 {
            if self.history.len() == self.history_capacity {
                self.history.pop_front();
            }
            self.history.push_back((self.t, total_power));
        }
        Ok(())
    }
}

/// Violated iff the total energy dropped below `−β²` at a recorded time;
/// per-port verdicts use the same bound.
pub fn passivity_verdict<T: Real>(ledger: &PassivityLedger<T>) -> LedgerVerdict<T> {
    let verdict = |v: Option<T>| v.map_or(Verdict::PassiveSoFar, Verdict::Violated);
    LedgerVerdict {
        total: verdict(ledger.first_violation),
        per_port: ledger
            .accounts
            .iter()
            .map(|a| (a.id.clone(), verdict(a.first_violation)))
            .collect(),
    }
}
