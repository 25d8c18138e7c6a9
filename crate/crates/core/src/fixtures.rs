//! Six-agent, two-level scenario with a hand-checkable expansion.
//!
//! Agents 1-3 form a level-1 cluster headed by 3, agents 4-6 one headed by 5,
//! and {3, 5} form the level-2 cluster headed by 6. Each agent observes a
//! 2x2 patch on a 24x8 grid, four columns apart, so compression windows never
//! mix two agents.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use glam::DVec3;

use crate::belief_grid::{BeliefGrid, GridShape, MetaCell};
use crate::cluster::{AgentId, AgentState, Registry};
use crate::error::SimError;
use crate::propagation::{PropagationConfig, Propagator};

pub const SIX_AGENT_TIME: f64 = 1.0;

pub fn six_agent_shape() -> GridShape {
    GridShape::new(24, 8, 25.0)
}

/// Full-resolution observation of `agent` (1 to 6).
pub fn six_agent_observation(agent: u32) -> BeliefGrid {
    let shape = six_agent_shape();
    let x0 = (agent as usize - 1) * 4;
    let cells = [(0, 2), (1, 2), (0, 3), (1, 3)]
        .into_iter()
        .enumerate()
        .map(|(k, (dx, dy))| {
            let fire = ((agent as usize * 7 + k * 3) % 10) as f64 / 9.0;
            (shape.index(x0 + dx, 2 + dy), MetaCell::new(1.0, SIX_AGENT_TIME, fire))
        });
    BeliefGrid::from_cells(shape, cells)
}

pub fn six_agent_world(c_d: f64, c_t: f64) -> (Registry, Propagator) {
    let mut reg = Registry::new();
    for i in 1..=6u32 {
        let mut a = AgentState::new(
            AgentId(i),
            DVec3::new(i as f64 * 10.0, 0.0, 0.0),
            500.0,
            six_agent_shape(),
            0.0,
        );
        a.observation = six_agent_observation(i);
        a.total_belief = a.observation.clone();
        reg.insert_agent(a);
    }
    let id = AgentId;
    reg.create_token(1, id(3), vec![id(1), id(2), id(3)], None);
    reg.create_token(1, id(5), vec![id(4), id(5), id(6)], None);
    reg.create_token(2, id(6), vec![id(3), id(5)], None);
    let prop = Propagator::new(PropagationConfig {
        c_d,
        c_t,
        ..Default::default()
    });
    (reg, prop)
}

/// Every agent's belief after one upstream and one downstream pass.
pub fn six_agent_expansion(c_d: f64) -> Result<BTreeMap<AgentId, BeliefGrid>, SimError> {
    let (mut reg, mut prop) = six_agent_world(c_d, 1.0);
    prop.upstream(&mut reg, None, SIX_AGENT_TIME, 1.0)?;
    prop.downstream(&mut reg, SIX_AGENT_TIME, 1.0)?;
    Ok(reg.agents.iter().map(|(id, a)| (*id, a.total_belief.clone())).collect())
}

pub fn golden_file_name(c_d: f64) -> String {
    format!("golden_cd{c_d}.csv")
}

/// Writes agent 1's expanded belief for each `c_d` into `dir`.
pub fn write_golden_files(dir: &Path, c_ds: &[f64]) -> Result<Vec<PathBuf>, SimError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &c_d in c_ds {
        let beliefs = six_agent_expansion(c_d)?;
        let path = dir.join(golden_file_name(c_d));
        beliefs[&AgentId(1)].write_csv(BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}
