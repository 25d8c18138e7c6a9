//! Multi-level clustering: registry, decentralized join/create formation,
//! head-driven maintenance and the three clustering rules.

mod formation;
mod maintenance;
mod registry;
mod rules;

use serde::{Deserialize, Serialize};

pub use formation::{neighbor_table, poll, seek_level, Neighbor, PollOutcome};
pub use maintenance::{
    despawn, maintain, maintain_assimilate, maintain_demote, maintain_reassign, maintain_split, maintain_transfer,
    repair_rules, transfer_is_rule3_safe, MaintenanceReport,
};
pub use registry::{AgentId, AgentState, ClusterToken, Phase, Registry, TokenId};
pub use rules::{check_rules, Rule, RuleViolation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub max_cluster_size: usize,
    pub maintenance_period: f64,
    pub max_escalation: u32,
    pub assimilation_threshold: usize,
    /// Member vicinity of a level-1 head in meters; doubles per level.
    pub level1_threshold: f64,
    pub join_period: f64,
    pub create_period: f64,
    pub poll_period: f64,
    /// Hello-message range in meters; `None` means every agent hears every other.
    pub discovery_range: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            max_cluster_size: 8,
            maintenance_period: 5.0,
            max_escalation: 1,
            assimilation_threshold: 2,
            level1_threshold: 100.0,
            join_period: 1.0,
            create_period: 2.0,
            poll_period: 0.5,
            discovery_range: None,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_cluster_size < 2 {
            return Err(format!(
                "max_cluster_size must be at least 2, got {}",
                self.max_cluster_size
            ));
        }
        for (name, v) in [
            ("maintenance_period", self.maintenance_period),
            ("level1_threshold", self.level1_threshold),
            ("join_period", self.join_period),
            ("create_period", self.create_period),
            ("poll_period", self.poll_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.assimilation_threshold == 0 {
            return Err("assimilation_threshold must be positive".into());
        }
        if let Some(r) = self.discovery_range {
            if !(r > 0.0) {
                return Err(format!("discovery_range must be positive, got {r}"));
            }
        }
        Ok(())
    }

    /// Vicinity radius of a level-`level` head.
    pub fn threshold(&self, level: u32) -> f64 {
        self.level1_threshold * 2f64.powi(level as i32 - 1)
    }

    pub fn in_range(&self, distance: f64) -> bool {
        self.discovery_range.is_none_or(|r| distance <= r)
    }
}
