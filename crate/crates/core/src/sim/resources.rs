use std::collections::BTreeMap;

use serde::Serialize;

/// Counters for one stage. All fields are additive under [`merge`].
///
/// [`merge`]: StageCounters::merge
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StageCounters {
    /// Query count per oracle name.
    pub oracle_queries: BTreeMap<String, u64>,
    /// Queries weighted by each oracle's access cost.
    pub oracle_cost: f64,
    pub gates: u64,
    pub ancilla_high_water: usize,
    pub amplification_rounds: u64,
    pub qpe_bits: u64,
    /// Applications of a controlled Hamiltonian-simulation unitary.
    pub controlled_unitaries: u64,
    /// Cost charged for Hamiltonian simulation and inversion in the units of
    /// the preparation costs.
    pub charged_cost: f64,
}

impl StageCounters {
    pub fn query(&mut self, oracle: &str, count: u64, access_cost: f64) {
        *self.oracle_queries.entry(oracle.to_string()).or_default() += count;
        self.oracle_cost += count as f64 * access_cost;
    }

    pub fn queries(&self, oracle: &str) -> u64 {
        self.oracle_queries.get(oracle).copied().unwrap_or(0)
    }

    pub fn total_queries(&self) -> u64 {
        self.oracle_queries.values().sum()
    }

    pub fn merge(&mut self, other: &StageCounters) {
        for (k, v) in &other.oracle_queries {
            *self.oracle_queries.entry(k.clone()).or_default() += v;
        }
        self.oracle_cost += other.oracle_cost;
        self.gates += other.gates;
        // high-water marks add: composed stages hold their ancillas side by side
        self.ancilla_high_water += other.ancilla_high_water;
        self.amplification_rounds += other.amplification_rounds;
        self.qpe_bits += other.qpe_bits;
        self.controlled_unitaries += other.controlled_unitaries;
        self.charged_cost += other.charged_cost;
    }

    pub fn note_ancillas(&mut self, qubits: usize) {
        self.ancilla_high_water = self.ancilla_high_water.max(qubits);
    }
}

/// Per-stage counters keyed by stage name.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResourceReport {
    pub stages: BTreeMap<String, StageCounters>,
}

impl ResourceReport {
    pub fn stage(&mut self, name: &str) -> &mut StageCounters {
        self.stages.entry(name.to_string()).or_default()
    }

    pub fn get(&self, name: &str) -> Option<&StageCounters> {
        self.stages.get(name)
    }

    pub fn merge(&mut self, other: &ResourceReport) {
        for (k, v) in &other.stages {
            self.stage(k).merge(v);
        }
    }

    pub fn total(&self) -> StageCounters {
        let mut t = StageCounters::default();
        for s in self.stages.values() {
            t.merge(s);
        }
        t
    }
}
