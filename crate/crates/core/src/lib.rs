//! Autonomous hierarchical multi-level clustering with compressed belief
//! sharing, driven by a stochastic wildfire monitoring simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod belief_grid;
pub mod cluster;
pub mod config;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod motion;
pub mod propagation;
pub mod wildfire;

pub use belief_grid::{AggregationPolicy, BeliefGrid, GridShape, MetaCell};
pub use cluster::{AgentId, AgentState, ClusterToken, ProtocolConfig, Registry, TokenId};
pub use config::{CommMode, GridConfig, ScenarioConfig};
pub use engine::{run, run_direct_baseline, RunOutput, SimWorld};
pub use error::{BeliefError, ConfigError, ProtocolError, SimError};
pub use metrics::{Summary, TraceRecord};
pub use motion::{MotionConfig, MotionMode};
pub use propagation::{PropagationConfig, Propagator};
pub use wildfire::{FireGrid, FireParams};
