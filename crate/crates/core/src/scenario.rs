//! The planner's problem instance: network, behaviour weights and economics.

use crate::cost::BehaviourWeights;
use crate::error::{Error, Result};
use crate::network::{Network, NodeId};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub network: Network,
    pub weights: BehaviourWeights,
    /// Charges served per charger per unit time.
    pub mu: f64,
    /// Profitability factor, strictly above 1.
    pub pi: f64,
    pub budget: u32,
    /// Electricity cost per charge, indexed like the network's node list.
    pub e: Vec<f64>,
    /// Per-charger maintenance and rental cost, indexed like the node list.
    pub t: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.pi.is_finite() && self.pi > 1.0) {
            return Err(Error::Validation("pi must exceed 1".into()));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Validation("mu must be positive".into()));
        }
        let n = self.network.nodes().len();
        if self.e.len() != n || self.t.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} electricity / {} rental costs for {n} nodes",
                self.e.len(),
                self.t.len()
            )));
        }
        for (i, &id) in self.network.nodes().iter().enumerate() {
            if !(self.e[i].is_finite() && self.e[i] >= 0.0) {
                return Err(Error::Validation(format!("node {id}: e must be non-negative")));
            }
            if !(self.t[i].is_finite() && self.t[i] >= 0.0) {
                return Err(Error::Validation(format!("node {id}: t must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.network.nodes().len()
    }

    pub fn node_id(&self, i: usize) -> NodeId {
        self.network.nodes()[i]
    }

    pub fn with_budget(&self, budget: u32) -> Self {
        Self {
            budget,
            ..self.clone()
        }
    }
}
