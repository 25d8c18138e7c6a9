use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief_grid::GridShape;
use crate::cluster::ProtocolConfig;
use crate::error::ConfigError;
use crate::motion::MotionConfig;
use crate::propagation::PropagationConfig;
use crate::wildfire::FireParams;

/// How agents share observations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommMode {
    /// Multi-level clustering with compressed dissemination.
    #[default]
    Mlc,
    /// Every agent receives every other agent's full observation.
    Direct,
    /// Agents only know what they observe themselves.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 200,
            height: 200,
            cell_size: 25.0,
        }
    }
}

impl GridConfig {
    pub fn shape(&self) -> GridShape {
        GridShape::new(self.width, self.height, self.cell_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sim_time: f64,
    pub env_size: [f64; 2],
    pub max_agents: usize,
    pub battery: f64,
    pub spawn_interval: [f64; 2],
    pub spawn_duration: f64,
    pub grid: GridConfig,
    /// Chebyshev radius of the camera footprint, in cells.
    pub fov_radius: usize,
    pub initial_fires: usize,
    pub fire: FireParams,
    pub protocol: ProtocolConfig,
    pub propagation: PropagationConfig,
    pub motion: MotionConfig,
    pub comm: CommMode,
    pub dt: f64,
    pub metrics_period: f64,
    pub seed: u64,
    /// Abort on a clustering-rule violation instead of counting it.
    pub strict: bool,
    /// Keep the cluster edge list of every metrics record.
    pub record_topology: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sim_time: 2000.0,
            env_size: [5000.0, 5000.0],
            max_agents: 50,
            battery: 500.0,
            spawn_interval: [5.0, 15.0],
            spawn_duration: 1500.0,
            grid: GridConfig::default(),
            fov_radius: 4,
            initial_fires: 1,
            fire: FireParams::default(),
            protocol: ProtocolConfig::default(),
            propagation: PropagationConfig::default(),
            motion: MotionConfig::default(),
            comm: CommMode::Mlc,
            dt: 0.5,
            metrics_period: 2.5,
            seed: 0,
            strict: false,
            record_topology: false,
        }
    }
}

fn is_multiple(value: f64, dt: f64) -> bool {
    let k = value / dt;
    (k - k.round()).abs() < 1e-9 && k.round() >= 1.0
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn shape(&self) -> GridShape {
        self.grid.shape()
    }

    pub fn ticks(&self) -> u64 {
        (self.sim_time / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.sim_time >= 0.0 && self.sim_time.is_finite()) {
            return bad(format!("sim_time must be non-negative, got {}", self.sim_time));
        }
        if self.grid.width == 0 || self.grid.height == 0 || !(self.grid.cell_size > 0.0) {
            return bad("grid must have positive dimensions".into());
        }
        for (k, (cells, env)) in [
            (self.grid.width, self.env_size[0]),
            (self.grid.height, self.env_size[1]),
        ]
        .into_iter()
        .enumerate()
        {
            if (cells as f64 * self.grid.cell_size - env).abs() > 1e-6 {
                return bad(format!(
                    "grid axis {k}: {cells} cells of {} m do not cover {env} m",
                    self.grid.cell_size
                ));
            }
        }
        let [lo, hi] = self.spawn_interval;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("spawn_interval must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
        if !(self.battery > 0.0) {
            return bad(format!("battery must be positive, got {}", self.battery));
        }
        if !(self.spawn_duration >= 0.0) {
            return bad(format!(
                "spawn_duration must be non-negative, got {}",
                self.spawn_duration
            ));
        }
        self.protocol.validate().map_err(ConfigError::Invalid)?;
        self.propagation.validate().map_err(ConfigError::Invalid)?;
        self.motion.validate().map_err(ConfigError::Invalid)?;
        self.fire.validate().map_err(ConfigError::Invalid)?;
        for (name, period) in [
            ("protocol.poll_period", self.protocol.poll_period),
            ("protocol.maintenance_period", self.protocol.maintenance_period),
            ("protocol.join_period", self.protocol.join_period),
            ("protocol.create_period", self.protocol.create_period),
            ("propagation.t_o", self.propagation.t_o),
            ("propagation.t_lambda", self.propagation.t_lambda),
            ("fire.update_period", self.fire.update_period),
            ("metrics_period", self.metrics_period),
        ] {
            if !is_multiple(period, self.dt) {
                return bad(format!("{name} = {period} is not a multiple of dt = {}", self.dt));
            }
        }
        Ok(())
    }
}
