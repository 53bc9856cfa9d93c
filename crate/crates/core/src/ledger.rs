//! Budget accounting shared by every optimizer.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Thread-safe monotone counters. Timings are tracked separately from
/// counts because they are not reproducible across runs.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    equilibrium_solves: AtomicU64,
    linear_solves: AtomicU64,
    objective_evaluations: AtomicU64,
    optimizer_updates: AtomicU64,
    execution_rollouts: AtomicU64,
    forward_nanos: AtomicU64,
    backward_nanos: AtomicU64,
    update_nanos: AtomicU64,
}

/// Point-in-time copy of the counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub equilibrium_solves: u64,
    pub linear_solves: u64,
    pub objective_evaluations: u64,
    pub optimizer_updates: u64,
    pub execution_rollouts: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTimings {
    pub forward_seconds: f64,
    pub backward_seconds: f64,
    pub update_seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Phase {
    Forward,
    Backward,
    Update,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_equilibrium_solves(&self, n: u64) {
        self.equilibrium_solves.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_linear_solves(&self, n: u64) {
        self.linear_solves.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_objective_evaluations(&self, n: u64) {
        self.objective_evaluations.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_optimizer_updates(&self, n: u64) {
        self.optimizer_updates.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_execution_rollouts(&self, n: u64) {
        self.execution_rollouts.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_time(&self, phase: Phase, elapsed: Duration) {
        let nanos = elapsed.as_nanos().min(u64::MAX as u128) as u64;
        let slot = match phase {
            Phase::Forward => &self.forward_nanos,
            Phase::Backward => &self.backward_nanos,
            Phase::Update => &self.update_nanos,
        };
        slot.fetch_add(nanos, Ordering::Relaxed);
    }

    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            equilibrium_solves: self.equilibrium_solves.load(Ordering::Relaxed),
            linear_solves: self.linear_solves.load(Ordering::Relaxed),
            objective_evaluations: self.objective_evaluations.load(Ordering::Relaxed),
            optimizer_updates: self.optimizer_updates.load(Ordering::Relaxed),
            execution_rollouts: self.execution_rollouts.load(Ordering::Relaxed),
        }
    }

    pub fn timings(&self) -> LedgerTimings {
        let s = |a: &AtomicU64| a.load(Ordering::Relaxed) as f64 * 1e-9;
        LedgerTimings {
            forward_seconds: s(&self.forward_nanos),
            backward_seconds: s(&self.backward_nanos),
            update_seconds: s(&self.update_nanos),
        }
    }
}

impl LedgerCounts {
    pub fn since(&self, earlier: &LedgerCounts) -> LedgerCounts {
        LedgerCounts {
            equilibrium_solves: self.equilibrium_solves - earlier.equilibrium_solves,
            linear_solves: self.linear_solves - earlier.linear_solves,
            objective_evaluations: self.objective_evaluations - earlier.objective_evaluations,
            optimizer_updates: self.optimizer_updates - earlier.optimizer_updates,
            execution_rollouts: self.execution_rollouts - earlier.execution_rollouts,
        }
    }
}
