//! Port energy accounting, passivity verdicts, and the two constructive
//! passivity failures of projected control.

mod counterexample;
mod leak;
mod ledger;
mod port;

pub use counterexample::{
    build_counterexample, simulate_prioritized, Counterexample, CounterexampleResiduals,
    PrioritizedRun, PrioritizedSample,
};
pub use leak::{
    adversarial_leak_search, cross_term, two_port_internal_leak_demo, LeakSample, LeakWitness,
};
pub use ledger::{passivity_verdict, LedgerVerdict, PassivityLedger, PortAccount, Verdict};
pub use port::{Port, PortRole};
