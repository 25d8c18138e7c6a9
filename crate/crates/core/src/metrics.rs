//! Evaluation metrics and trace export.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::cluster::{AgentId, Registry};
use crate::wildfire::FireGrid;

pub const TRACE_HEADER: &str =
    "t,n_agents,main_cluster_ratio,avg_links,max_links,avg_link_dist,max_link_dist,avg_data_rate,max_data_rate,miss_ratio";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub n_agents: usize,
    pub main_cluster_ratio: f64,
    pub avg_links: f64,
    pub max_links: usize,
    pub avg_link_dist: f64,
    pub max_link_dist: f64,
    pub avg_data_rate: f64,
    pub max_data_rate: f64,
    /// NaN while nothing burns.
    pub miss_ratio: f64,
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.n_agents,
            self.main_cluster_ratio,
            self.avg_links,
            self.max_links,
            self.avg_link_dist,
            self.max_link_dist,
            self.avg_data_rate,
            self.max_data_rate,
            self.miss_ratio
        )
    }
}

pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub avg_links: f64,
    pub max_links: usize,
    pub avg_dist: f64,
    pub max_dist: f64,
}

struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Largest connected component of `edges` over `agents`, as a fraction.
pub fn largest_component_ratio(agents: &[AgentId], edges: &[(AgentId, AgentId)]) -> f64 {
    if agents.is_empty() {
        return f64::NAN;
    }
    let index: BTreeMap<AgentId, usize> = agents.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut dsu = Dsu::new(agents.len());
    for (a, b) in edges {
        if let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) {
            dsu.union(i, j);
        }
    }
    let mut best = 0;
    for i in 0..agents.len() {
        let r = dsu.find(i);
        best = best.max(dsu.size[r]);
    }
    best as f64 / agents.len() as f64
}

pub fn main_cluster_ratio(reg: &Registry) -> f64 {
    let agents: Vec<AgentId> = reg.agents.keys().copied().collect();
    let edges: Vec<(AgentId, AgentId)> = reg.edges().into_iter().map(|(a, b, _)| (a, b)).collect();
    largest_component_ratio(&agents, &edges)
}

/// Distinct undirected head/member edges.
fn undirected(reg: &Registry) -> BTreeSet<(AgentId, AgentId)> {
    reg.edges()
        .into_iter()
        .map(|(a, b, _)| if a < b { (a, b) } else { (b, a) })
        .collect()
}

/// Per-agent link counts (both endpoints) and distances over distinct edges.
pub fn link_stats(reg: &Registry) -> LinkStats {
    let edges = undirected(reg);
    stats_from_edges(reg, &edges)
}

/// Link statistics of the complete graph used by direct communication.
pub fn complete_graph_stats(reg: &Registry) -> LinkStats {
    let ids: Vec<AgentId> = reg.agents.keys().copied().collect();
    let mut edges = BTreeSet::new();
    for (k, a) in ids.iter().enumerate() {
        for b in &ids[k + 1..] {
            edges.insert((*a, *b));
        }
    }
    stats_from_edges(reg, &edges)
}

fn stats_from_edges(reg: &Registry, edges: &BTreeSet<(AgentId, AgentId)>) -> LinkStats {
    let n = reg.agents.len();
    if n == 0 {
        return LinkStats::default();
    }
    let mut count: BTreeMap<AgentId, usize> = reg.agents.keys().map(|a| (*a, 0)).collect();
    let mut dist_sum = 0.0;
    let mut dist_max: f64 = 0.0;
    for (a, b) in edges {
        *count.get_mut(a).expect("agent") += 1;
        *count.get_mut(b).expect("agent") += 1;
        let pa = reg.position(*a);
        let pb = reg.position(*b);
        let d = DVec2::new(pa.x, pa.y).distance(DVec2::new(pb.x, pb.y));
        dist_sum += d;
        dist_max = dist_max.max(d);
    }
    let total: usize = count.values().sum();
    LinkStats {
        avg_links: total as f64 / n as f64,
        max_links: count.values().copied().max().unwrap_or(0),
        avg_dist: if edges.is_empty() {
            0.0
        } else {
            dist_sum / edges.len() as f64
        },
        max_dist: dist_max,
    }
}

/// Per-agent link count, both endpoints.
pub fn links_per_agent(reg: &Registry) -> BTreeMap<AgentId, usize> {
    let mut count: BTreeMap<AgentId, usize> = reg.agents.keys().map(|a| (*a, 0)).collect();
    for (a, b) in undirected(reg) {
        *count.entry(a).or_default() += 1;
        *count.entry(b).or_default() += 1;
    }
    count
}

/// Fraction of burning cells no agent currently sees; NaN without fire.
pub fn miss_ratio(fire: &FireGrid, seen: &[bool]) -> f64 {
    let mut burning = 0usize;
    let mut observed = 0usize;
    for i in fire.burning_cells() {
        burning += 1;
        if seen.get(i).copied().unwrap_or(false) {
            observed += 1;
        }
    }
    if burning == 0 {
        return f64::NAN;
    }
    1.0 - observed as f64 / burning as f64
}

/// Mean and max per-agent data rate over a window; silent agents count as zero.
pub fn data_rate(window: &BTreeMap<AgentId, f64>, agents: &[AgentId], length: f64) -> (f64, f64) {
    if agents.is_empty() || length <= 0.0 {
        return (0.0, 0.0);
    }
    let rates: Vec<f64> = agents
        .iter()
        .map(|a| window.get(a).copied().unwrap_or(0.0) / length)
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let max = rates.iter().copied().fold(0.0, f64::max);
    (mean, max)
}

/// Mean over non-NaN values; NaN when there are none.
pub fn nan_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        if !v.is_nan() {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// `m_mlc / m_perfect`, or `None` when the baseline never misses.
pub fn normalized_miss(mission_mlc: f64, mission_perfect: f64) -> Option<f64> {
    if mission_perfect > 0.0 && mission_perfect.is_finite() && mission_mlc.is_finite() {
        Some(mission_mlc / mission_perfect)
    } else {
        None
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub records: usize,
    pub spawned: u32,
    pub mean_agents: f64,
    pub main_cluster_ratio: f64,
    pub avg_links: f64,
    pub max_links: usize,
    pub avg_link_dist: f64,
    pub max_link_dist: f64,
    pub avg_data_rate: f64,
    pub max_data_rate: f64,
    /// Time-average of the instantaneous miss ratio over ticks with fire.
    pub mission_miss: f64,
    pub total_data: f64,
    pub rule_violations: usize,
    pub link_bound_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_miss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_rate_ratio: Option<f64>,
}

impl Summary {
    pub fn from_trace(records: &[TraceRecord]) -> Self {
        let active: Vec<&TraceRecord> = records.iter().filter(|r| r.n_agents > 0).collect();
        let mean = |f: &dyn Fn(&TraceRecord) -> f64| nan_mean(active.iter().map(|r| f(r)));
        Self {
            records: records.len(),
            mean_agents: nan_mean(records.iter().map(|r| r.n_agents as f64)),
            main_cluster_ratio: mean(&|r| r.main_cluster_ratio),
            avg_links: mean(&|r| r.avg_links),
            max_links: records.iter().map(|r| r.max_links).max().unwrap_or(0),
            avg_link_dist: mean(&|r| r.avg_link_dist),
            max_link_dist: records.iter().map(|r| r.max_link_dist).fold(0.0, f64::max),
            avg_data_rate: mean(&|r| r.avg_data_rate),
            max_data_rate: records.iter().map(|r| r.max_data_rate).fold(0.0, f64::max),
            mission_miss: nan_mean(records.iter().map(|r| r.miss_ratio)),
            ..Default::default()
        }
    }

    /// Attaches the paired-baseline comparisons.
    pub fn pair_with(&mut self, baseline: &Summary) {
        self.normalized_miss = normalized_miss(self.mission_miss, baseline.mission_miss);
        self.data_rate_ratio = (baseline.avg_data_rate > 0.0).then(|| self.avg_data_rate / baseline.avg_data_rate);
    }
}

#[cfg(test)]
mod tests {
    use glam::DVec3;

    use super::*;
    use crate::belief_grid::GridShape;
    use crate::cluster::AgentState;
    use crate::wildfire::FireParams;

    fn reg(n: u32) -> Registry {
        let mut r = Registry::new();
        for i in 1..=n {
            r.insert_agent(AgentState::new(
                AgentId(i),
                DVec3::new(i as f64 * 3.0, 4.0 * i as f64, 0.0),
                10.0,
                GridShape::new(2, 2, 1.0),
                0.0,
            ));
        }
        r
    }

    #[test]
    fn cluster_ratio_cases() {
        let mut r = reg(5);
        assert_eq!(main_cluster_ratio(&r), 0.2);
        let a = AgentId;
        r.create_token(1, a(1), vec![a(1), a(2), a(3)], None);
        r.create_token(1, a(4), vec![a(4), a(5)], None);
        assert_eq!(main_cluster_ratio(&r), 0.6);
        r.create_token(2, a(2), vec![a(1), a(4)], None);
        assert_eq!(main_cluster_ratio(&r), 1.0);
        assert!(main_cluster_ratio(&Registry::new()).is_nan());
    }

    #[test]
    fn tree_view_links() {
        // level-1 {1,2,3} headed by 3, {4,5,6} by 5, level-2 {3,5} by 6
        let mut r = reg(6);
        let a = AgentId;
        r.create_token(1, a(3), vec![a(1), a(2), a(3)], None);
        r.create_token(1, a(5), vec![a(4), a(5), a(6)], None);
        r.create_token(2, a(6), vec![a(3), a(5)], None);
        let links = links_per_agent(&r);
        assert_eq!(links[&a(3)], 3);
        assert_eq!(links[&a(1)], 1);
        let s = link_stats(&r);
        assert_eq!(s.max_links, 3);
        assert!(s.max_links <= 8 + 2);
        assert!(s.max_dist >= s.avg_dist);
    }

    #[test]
    fn miss_ratio_counts() {
        let mut f = FireGrid::new(GridShape::new(4, 4, 1.0), FireParams::default());
        assert!(miss_ratio(&f, &[false; 16]).is_nan());
        for i in [0, 1, 2, 3] {
            f.ignite(i);
        }
        let mut seen = vec![false; 16];
        assert_eq!(miss_ratio(&f, &seen), 1.0);
        seen[2] = true;
        assert_eq!(miss_ratio(&f, &seen), 0.75);
        assert_eq!(miss_ratio(&f, &[true; 16]), 0.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalized_miss(0.4, 0.4), Some(1.0));
        assert_eq!(normalized_miss(0.8, 0.4), Some(2.0));
        assert_eq!(normalized_miss(0.8, 0.0), None);
    }

    #[test]
    fn rates() {
        let agents = [AgentId(1), AgentId(2)];
        assert_eq!(data_rate(&BTreeMap::new(), &agents, 2.5), (0.0, 0.0));
        let w = BTreeMap::from([(AgentId(1), 10.0)]);
        assert_eq!(data_rate(&w, &agents, 2.5), (2.0, 4.0));
    }
}
