//! Belief dissemination over the cluster tree: compressed lower beliefs flow
//! up, time-gated aggregated beliefs flow down, and every directed link is
//! charged only for data the receiver is not already known to hold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::belief_grid::{AggregationPolicy, BeliefGrid, GridShape};
use crate::cluster::{AgentId, Registry, TokenId};
use crate::error::{BeliefError, ProtocolError, SimError};

const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub c_d: f64,
    pub c_t: f64,
    pub t_o: f64,
    pub t_lambda: f64,
    pub policy: AggregationPolicy,
    /// Charge links only for cells the receiver lacks.
    pub subtraction: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            c_d: 2.0,
            c_t: 2.0,
            t_o: 1.0,
            t_lambda: 1.0,
            policy: AggregationPolicy::AgePriority,
            subtraction: true,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c_d >= 1.0 && self.c_d.is_finite()) {
            return Err(format!("c_d must be at least 1, got {}", self.c_d));
        }
        if !(self.c_t >= 1.0 && self.c_t.is_finite()) {
            return Err(format!("c_t must be at least 1, got {}", self.c_t));
        }
        for (name, v) in [("t_o", self.t_o), ("t_lambda", self.t_lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        self.policy.validate()
    }

    /// Upstream send period of a level-`level` entity (level 0 for plain agents).
    pub fn upstream_period(&self, level: u32) -> f64 {
        self.t_lambda * self.c_t.powi(level as i32)
    }

    /// Minimum spacing of higher-level updates consumed by a level-`level` head.
    pub fn gate_period(&self, level: u32) -> f64 {
        self.t_lambda * self.c_t.powi(level as i32 + 1)
    }
}

/// Whether a multiple of `period` lies in `(now - step, now]`.
pub fn fires(now: f64, step: f64, period: f64) -> bool {
    let k_now = ((now + TIME_EPS) / period).floor();
    let k_prev = ((now - step + TIME_EPS) / period).floor();
    k_now > k_prev
}

/// The time-compression gate `u(j, x)`.
pub fn gate_open(has_higher: bool, now: f64, last_update: f64, period: f64) -> bool {
    has_higher && now - last_update >= period - TIME_EPS
}

/// Per directed link, the union of everything already delivered.
#[derive(Clone, Debug, Default)]
pub struct LinkCache {
    links: BTreeMap<(AgentId, AgentId), BeliefGrid>,
}

impl LinkCache {
    pub fn get(&self, from: AgentId, to: AgentId) -> Option<&BeliefGrid> {
        self.links.get(&(from, to))
    }

    /// Records the delivery of `payload` and returns the part that had to be sent.
    pub fn delta(
        &mut self,
        from: AgentId,
        to: AgentId,
        payload: &BeliefGrid,
        policy: AggregationPolicy,
        now: f64,
    ) -> Result<BeliefGrid, BeliefError> {
        let cache = self
            .links
            .entry((from, to))
            .or_insert_with(|| BeliefGrid::new(payload.shape()));
        let delta = payload.subtract(cache, policy, now)?;
        cache.merge(&delta, policy, now)?;
        Ok(delta)
    }

    pub fn forget(&mut self, agent: AgentId) {
        self.links.retain(|(a, b), _| *a != agent && *b != agent);
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Data units sent plus received per agent since the last reset.
#[derive(Clone, Debug, Default)]
pub struct DataMeter {
    pub window: BTreeMap<AgentId, f64>,
    pub total: f64,
}

impl DataMeter {
    pub fn charge(&mut self, from: AgentId, to: AgentId, amount: f64) {
        if amount <= 0.0 {
            return;
        }
        *self.window.entry(from).or_default() += amount;
        *self.window.entry(to).or_default() += amount;
        self.total += amount;
    }

    pub fn take(&mut self) -> BTreeMap<AgentId, f64> {
        std::mem::take(&mut self.window)
    }
}

/// `λ(j, x)` evaluated directly from the members' current observations.
pub fn lower_belief(
    reg: &Registry,
    agent: AgentId,
    level: u32,
    c_d: f64,
    policy: AggregationPolicy,
    now: f64,
) -> Result<BeliefGrid, SimError> {
    let state = reg.agent(agent).ok_or(ProtocolError::UnknownAgent(agent))?;
    if level == 0 {
        return Ok(state.observation.clone());
    }
    let token = reg
        .token_of(agent)
        .filter(|t| t.level == level)
        .ok_or(ProtocolError::NotAHead(agent, level))?;
    let mut out = BeliefGrid::new(state.observation.shape());
    for &m in &token.members {
        if reg.agent(m).is_none() {
            return Err(ProtocolError::DanglingMember { head: agent, member: m }.into());
        }
        let part = lower_belief(reg, m, level - 1, c_d, policy, now)?.compress(c_d)?;
        out.merge(&part, policy, now)?;
    }
    Ok(out)
}

/// Last level-1 update of a token and the members that took all of it.
#[derive(Clone, Debug)]
struct Delivery {
    head: AgentId,
    update: BeliefGrid,
    synced: Vec<AgentId>,
}

/// Message-level dissemination state: per-link caches and the data meter.
#[derive(Clone, Debug, Default)]
pub struct Propagator {
    pub config: PropagationConfig,
    pub caches: LinkCache,
    pub meter: DataMeter,
    deliveries: BTreeMap<TokenId, Delivery>,
    /// Link that delivered each token's current higher view.
    view_links: BTreeMap<TokenId, (AgentId, AgentId)>,
}

impl Propagator {
    pub fn new(config: PropagationConfig) -> Self {
        Self {
            config,
            caches: LinkCache::default(),
            meter: DataMeter::default(),
            deliveries: BTreeMap::new(),
            view_links: BTreeMap::new(),
        }
    }

    fn use_cache(&self) -> bool {
        self.config.subtraction && !self.time_dependent()
    }

    fn time_dependent(&self) -> bool {
        matches!(self.config.policy, AggregationPolicy::MetaScore { .. })
    }

    /// Charges one transmission and returns the charged amount.
    fn send(&mut self, from: AgentId, to: AgentId, payload: &BeliefGrid, now: f64) -> Result<f64, BeliefError> {
        if from == to {
            return Ok(0.0);
        }
        let policy = self.config.policy;
        let amount = if self.use_cache() {
            let delta = self.caches.delta(from, to, payload, policy, now)?;
            delta.data_amount()
        } else {
            payload.data_amount()
        };
        self.meter.charge(from, to, amount);
        Ok(amount)
    }

    /// `λ` of a token from the payloads in its inbox, in member order.
    pub fn token_lower_belief(
        &self,
        reg: &Registry,
        tid: TokenId,
        shape: GridShape,
        now: f64,
    ) -> Result<BeliefGrid, BeliefError> {
        let mut out = BeliefGrid::new(shape);
        if let Some(t) = reg.tokens.get(&tid) {
            for m in &t.members {
                if let Some(part) = t.inbox.get(m) {
                    out.merge(part, self.config.policy, now)?;
                }
            }
        }
        Ok(out)
    }

    /// Upward pass at `now` for every period boundary crossed since `now - step`.
    /// Bosses also refresh the base-station belief (uncharged).
    pub fn upstream(
        &mut self,
        reg: &mut Registry,
        mut base: Option<&mut BeliefGrid>,
        now: f64,
        step: f64,
    ) -> Result<(), SimError> {
        let policy = self.config.policy;
        let c_d = self.config.c_d;
        let Some(shape) = reg.agents.values().next().map(|a| a.observation.shape()) else {
            return Ok(());
        };

        if fires(now, step, self.config.upstream_period(0)) {
            let senders: Vec<(AgentId, AgentId)> = reg
                .agents
                .values()
                .filter_map(|a| a.level1_head.map(|h| (a.id, h)))
                .collect();
            for (m, h) in senders {
                let Some(tid) = reg.token_id_of(h) else {
                    continue;
                };
                let payload = reg.agents[&m].observation.compress(c_d)?;
                self.send(m, h, &payload, now)?;
                reg.tokens.get_mut(&tid).expect("token").inbox.insert(m, payload);
            }
        }

        let max_level = reg.tokens.values().map(|t| t.level).max().unwrap_or(0);
        for level in 1..=max_level {
            if !fires(now, step, self.config.upstream_period(level)) {
                continue;
            }
            let ids: Vec<TokenId> = reg.tokens.values().filter(|t| t.level == level).map(|t| t.id).collect();
            for tid in ids {
                let (head, higher) = {
                    let t = &reg.tokens[&tid];
                    (t.head, t.higher_head)
                };
                let payload = self.token_lower_belief(reg, tid, shape, now)?.compress(c_d)?;
                match higher {
                    Some(h) => {
                        let Some(ptid) = reg.token_id_of(h) else {
                            continue;
                        };
                        self.send(head, h, &payload, now)?;
                        reg.tokens.get_mut(&ptid).expect("parent").inbox.insert(head, payload);
                    }
                    None => {
                        if let Some(b) = base.as_deref_mut() {
                            b.merge(&payload, policy, now)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Downward pass: gated higher-level views, then level-1 delivery to members.
    pub fn downstream(&mut self, reg: &mut Registry, now: f64, step: f64) -> Result<(), SimError> {
        let policy = self.config.policy;
        let Some(shape) = reg.agents.values().next().map(|a| a.observation.shape()) else {
            return Ok(());
        };
        let max_level = reg.tokens.values().map(|t| t.level).max().unwrap_or(0);
        for level in (1..=max_level).rev() {
            let ids: Vec<TokenId> = reg.tokens.values().filter(|t| t.level == level).map(|t| t.id).collect();
            for tid in ids {
                let (head, higher, last) = {
                    let t = &reg.tokens[&tid];
                    (t.head, t.higher_head, t.last_higher_update)
                };
                let Some(h) = higher else {
                    continue;
                };
                let Some(ptid) = reg.token_id_of(h) else {
                    continue;
                };
                if !gate_open(true, now, last, self.config.gate_period(level)) {
                    continue;
                }
                let mut view = self.token_lower_belief(reg, ptid, shape, now)?;
                if let Some(hv) = &reg.tokens[&ptid].higher_view {
                    view.merge(hv, policy, now)?;
                }
                let previous = match (&reg.tokens[&tid].higher_view, self.view_links.get(&tid)) {
                    (Some(prev), Some(&link)) if link == (h, head) && self.use_cache() => Some(prev),
                    _ => None,
                };
                match previous {
                    Some(prev) => {
                        let diff = view.changes_from(prev)?;
                        self.send(h, head, &diff, now)?;
                    }
                    None => {
                        self.send(h, head, &view, now)?;
                    }
                }
                self.view_links.insert(tid, (h, head));
                let t = reg.tokens.get_mut(&tid).expect("token");
                t.higher_view = Some(view);
                t.last_higher_update = now;
            }
        }

        if !fires(now, step, self.config.t_lambda) {
            return Ok(());
        }
        self.deliveries.retain(|tid, _| reg.tokens.contains_key(tid));
        self.view_links.retain(|tid, _| reg.tokens.contains_key(tid));
        let incremental = !self.time_dependent();
        let level1: Vec<TokenId> = reg.tokens.values().filter(|t| t.level == 1).map(|t| t.id).collect();
        for tid in level1 {
            let mut update = self.token_lower_belief(reg, tid, shape, now)?;
            let (head, members) = {
                let t = &reg.tokens[&tid];
                if let Some(hv) = &t.higher_view {
                    update.merge(hv, policy, now)?;
                }
                (t.head, t.members.clone())
            };
            // members holding the previous update only need the cells that changed
            let changes = match self.deliveries.get(&tid) {
                Some(d) if incremental && d.head == head => Some((update.changes_from(&d.update)?, d.synced.clone())),
                _ => None,
            };
            for &m in &members {
                let part = match &changes {
                    Some((diff, synced)) if synced.contains(&m) => diff,
                    _ => &update,
                };
                if self.use_cache() {
                    self.send(head, m, part, now)?;
                } else {
                    self.send(head, m, &update, now)?;
                }
                if let Some(a) = reg.agents.get_mut(&m) {
                    a.absorb(part, policy, now)?;
                }
            }
            let synced = members.into_iter().filter(|m| reg.agents.contains_key(m)).collect();
            self.deliveries.insert(tid, Delivery { head, update, synced });
        }
        Ok(())
    }

    pub fn forget(&mut self, agent: AgentId) {
        self.caches.forget(agent);
        for d in self.deliveries.values_mut() {
            d.synced.retain(|m| *m != agent);
        }
        self.meter.window.remove(&agent);
    }
}
