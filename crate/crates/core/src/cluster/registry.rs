use std::collections::BTreeMap;
use std::fmt;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::belief_grid::{AggregationPolicy, BeliefError, BeliefGrid, GridShape};
use crate::motion::BeliefField;

/// Agent identifier. Ids start at 1 and are never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Join,
    Create,
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: AgentId,
    pub position: DVec3,
    pub velocity: DVec3,
    pub battery_remaining: f64,
    pub observation: BeliefGrid,
    pub total_belief: BeliefGrid,
    /// Level-1 cluster-head, `None` while unclustered.
    pub level1_head: Option<AgentId>,
    pub token: Option<TokenId>,
    pub phase: Phase,
    pub phase_deadline: f64,
    /// Whether the agent took part in join/create at the last poll.
    pub seeking: bool,
    pub returning: bool,
    pub target: DVec3,
    pub spawn_time: f64,
    /// Block statistics over `total_belief`, kept only when motion needs them.
    pub field: Option<BeliefField>,
}

impl AgentState {
    pub fn new(id: AgentId, position: DVec3, battery: f64, shape: GridShape, now: f64) -> Self {
        Self {
            id,
            position,
            velocity: DVec3::ZERO,
            battery_remaining: battery,
            observation: BeliefGrid::new(shape),
            total_belief: BeliefGrid::new(shape),
            level1_head: None,
            token: None,
            phase: Phase::Join,
            phase_deadline: now,
            seeking: false,
            returning: false,
            target: position,
            spawn_time: now,
            field: None,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.token.is_none()
    }

    /// `B_i <- B_i + grid`, keeping the block statistics in step.
    pub fn absorb(&mut self, grid: &BeliefGrid, policy: AggregationPolicy, now: f64) -> Result<(), BeliefError> {
        match &mut self.field {
            Some(field) => self
                .total_belief
                .merge_with(grid, policy, now, |i, old, new| field.replace(i, &old, &new)),
            None => self.total_belief.merge(grid, policy, now),
        }
    }

    /// Replaces the whole belief, e.g. with the base-station copy at spawn.
    pub fn reset_belief(&mut self, belief: BeliefGrid) {
        if let Some(field) = &mut self.field {
            field.rebuild(&belief);
        }
        self.total_belief = belief;
    }
}

/// Ownership record of one cluster plus the propagation state its head keeps.
#[derive(Clone, Debug)]
pub struct ClusterToken {
    pub id: TokenId,
    pub level: u32,
    pub head: AgentId,
    pub higher_head: Option<AgentId>,
    pub members: Vec<AgentId>,
    /// Last compressed lower belief received from each member.
    pub inbox: BTreeMap<AgentId, BeliefGrid>,
    /// Time the last higher-level view was consumed.
    pub last_higher_update: f64,
    /// Most recent aggregated view received from the higher head.
    pub higher_view: Option<BeliefGrid>,
}

impl ClusterToken {
    pub fn is_full(&self, max_size: usize) -> bool {
        self.members.len() >= max_size
    }
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    pub agents: BTreeMap<AgentId, AgentState>,
    pub tokens: BTreeMap<TokenId, ClusterToken>,
    next_token: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_agent(&mut self, agent: AgentState) {
        self.agents.insert(agent.id, agent);
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(&id)
    }

    pub fn position(&self, id: AgentId) -> DVec3 {
        self.agents[&id].position
    }

    pub fn distance(&self, a: AgentId, b: AgentId) -> f64 {
        self.position(a).distance(self.position(b))
    }

    pub fn token_of(&self, agent: AgentId) -> Option<&ClusterToken> {
        self.agents
            .get(&agent)
            .and_then(|a| a.token)
            .and_then(|t| self.tokens.get(&t))
    }

    pub fn token_id_of(&self, agent: AgentId) -> Option<TokenId> {
        self.agents.get(&agent).and_then(|a| a.token)
    }

    /// Token one level above `tid`, if it has a higher head.
    pub fn parent(&self, tid: TokenId) -> Option<TokenId> {
        let higher = self.tokens.get(&tid)?.higher_head?;
        self.token_id_of(higher)
    }

    /// `tid` followed by every token above it.
    pub fn ancestors(&self, tid: TokenId) -> Vec<TokenId> {
        let mut out = vec![tid];
        let mut cur = tid;
        while let Some(p) = self.parent(cur) {
            if out.contains(&p) {
                break;
            }
            out.push(p);
            cur = p;
        }
        out
    }

    /// Topmost token above `tid` (the token of its boss).
    pub fn root(&self, tid: TokenId) -> TokenId {
        *self.ancestors(tid).last().expect("non-empty")
    }

    /// Level-1 agents below a token.
    pub fn leaves(&self, tid: TokenId) -> Vec<AgentId> {
        let mut out = Vec::new();
        self.collect_leaves(tid, &mut out, 0);
        out
    }

    fn collect_leaves(&self, tid: TokenId, out: &mut Vec<AgentId>, depth: u32) {
        let Some(token) = self.tokens.get(&tid) else {
            return;
        };
        if token.level == 1 || depth > 64 {
            out.extend(token.members.iter().copied());
            return;
        }
        for m in &token.members {
            if let Some(child) = self.token_id_of(*m) {
                self.collect_leaves(child, out, depth + 1);
            }
        }
    }

    /// Every token in the sub-tree of `tid`, including itself.
    pub fn subtree_tokens(&self, tid: TokenId) -> Vec<TokenId> {
        let mut out = vec![tid];
        let mut i = 0;
        while i < out.len() {
            let t = out[i];
            i += 1;
            let Some(token) = self.tokens.get(&t) else {
                continue;
            };
            if token.level > 1 {
                for m in &token.members {
                    if let Some(child) = self.token_id_of(*m) {
                        if !out.contains(&child) {
                            out.push(child);
                        }
                    }
                }
            }
        }
        out
    }

    /// Idle level-1 agents of the sub-tree, ascending id.
    pub fn idle_leaves(&self, tid: TokenId) -> Vec<AgentId> {
        let mut v: Vec<AgentId> = self
            .leaves(tid)
            .into_iter()
            .filter(|a| self.agents.get(a).is_some_and(|s| s.is_idle()))
            .collect();
        v.sort();
        v
    }

    pub fn centroid(&self, ids: &[AgentId]) -> DVec3 {
        if ids.is_empty() {
            return DVec3::ZERO;
        }
        let sum = ids.iter().fold(DVec3::ZERO, |acc, id| acc + self.position(*id));
        sum / ids.len() as f64
    }

    /// The candidate closest to `point`; ties go to the lowest id.
    pub fn closest_to(&self, candidates: &[AgentId], point: DVec3) -> Option<AgentId> {
        let mut best: Option<(f64, AgentId)> = None;
        for &c in candidates {
            let d = self.position(c).distance(point);
            match best {
                Some((bd, bid)) if d > bd || (d == bd && c > bid) => {}
                _ => best = Some((d, c)),
            }
        }
        best.map(|(_, id)| id)
    }

    /// Issues a new token and links its members.
    pub fn create_token(
        &mut self,
        level: u32,
        head: AgentId,
        members: Vec<AgentId>,
        higher_head: Option<AgentId>,
    ) -> TokenId {
        self.next_token += 1;
        let id = TokenId(self.next_token);
        for m in &members {
            self.link_member(level, head, *m);
        }
        self.tokens.insert(
            id,
            ClusterToken {
                id,
                level,
                head,
                higher_head,
                members,
                inbox: BTreeMap::new(),
                last_higher_update: f64::NEG_INFINITY,
                higher_view: None,
            },
        );
        if let Some(a) = self.agents.get_mut(&head) {
            a.token = Some(id);
        }
        id
    }

    fn link_member(&mut self, level: u32, head: AgentId, member: AgentId) {
        if level == 1 {
            if let Some(a) = self.agents.get_mut(&member) {
                a.level1_head = Some(head);
            }
        } else if let Some(child) = self.token_id_of(member) {
            if let Some(t) = self.tokens.get_mut(&child) {
                t.higher_head = Some(head);
                t.last_higher_update = f64::NEG_INFINITY;
                t.higher_view = None;
            }
        }
    }

    fn unlink_member(&mut self, level: u32, head: AgentId, member: AgentId) {
        if level == 1 {
            if let Some(a) = self.agents.get_mut(&member) {
                if a.level1_head == Some(head) {
                    a.level1_head = None;
                }
            }
        } else if let Some(child) = self.token_id_of(member) {
            if let Some(t) = self.tokens.get_mut(&child) {
                if t.higher_head == Some(head) {
                    t.higher_head = None;
                    t.higher_view = None;
                }
            }
        }
    }

    pub fn add_member(&mut self, tid: TokenId, member: AgentId) {
        let (level, head) = {
            let t = self.tokens.get_mut(&tid).expect("token exists");
            if !t.members.contains(&member) {
                t.members.push(member);
            }
            (t.level, t.head)
        };
        self.link_member(level, head, member);
    }

    /// Removes a member; the token is destroyed when it becomes empty.
    pub fn remove_member(&mut self, tid: TokenId, member: AgentId) {
        let Some(t) = self.tokens.get_mut(&tid) else {
            return;
        };
        t.members.retain(|m| *m != member);
        t.inbox.remove(&member);
        let (level, head, empty) = (t.level, t.head, t.members.is_empty());
        self.unlink_member(level, head, member);
        if empty {
            self.destroy_token(tid);
        }
    }

    /// Moves a member between two tokens of the same level.
    pub fn move_member(&mut self, from: TokenId, to: TokenId, member: AgentId) {
        if let Some(t) = self.tokens.get_mut(&from) {
            t.members.retain(|m| *m != member);
            t.inbox.remove(&member);
        }
        self.add_member(to, member);
    }

    /// Destroys a token: level-1 members become unclustered, higher-level
    /// members become bosses of their sub-trees.
    pub fn destroy_token(&mut self, tid: TokenId) {
        let Some(token) = self.tokens.remove(&tid) else {
            return;
        };
        for m in &token.members {
            self.unlink_member(token.level, token.head, *m);
        }
        if let Some(a) = self.agents.get_mut(&token.head) {
            if a.token == Some(tid) {
                a.token = None;
            }
        }
        if let Some(higher) = token.higher_head {
            if let Some(ptid) = self.token_id_of(higher) {
                self.remove_member(ptid, token.head);
            }
        }
    }

    /// Hands a token to `new_head`, relinking members and the higher head.
    pub fn pass_token(&mut self, tid: TokenId, new_head: AgentId) {
        let Some(token) = self.tokens.get_mut(&tid) else {
            return;
        };
        let old = token.head;
        if old == new_head {
            return;
        }
        token.head = new_head;
        let level = token.level;
        let members = token.members.clone();
        let higher = token.higher_head;
        // inbox entries stay keyed by member; the inbox moves with the token
        if let Some(a) = self.agents.get_mut(&old) {
            if a.token == Some(tid) {
                a.token = None;
            }
        }
        if let Some(a) = self.agents.get_mut(&new_head) {
            a.token = Some(tid);
        }
        for m in members {
            self.link_member(level, new_head, m);
        }
        if let Some(h) = higher {
            if let Some(ptid) = self.token_id_of(h) {
                let p = self.tokens.get_mut(&ptid).expect("parent exists");
                for m in p.members.iter_mut() {
                    if *m == old {
                        *m = new_head;
                    }
                }
                if let Some(entry) = p.inbox.remove(&old) {
                    p.inbox.insert(new_head, entry);
                }
            }
        }
    }

    /// The member of `tid` whose sub-tree contains `leaf`.
    pub fn home_member(&self, tid: TokenId, leaf: AgentId) -> Option<AgentId> {
        let token = self.tokens.get(&tid)?;
        if token.level == 1 {
            return token.members.contains(&leaf).then_some(leaf);
        }
        token.members.iter().copied().find(|m| {
            self.token_id_of(*m)
                .is_some_and(|child| self.leaves(child).contains(&leaf))
        })
    }

    /// Active tokens sorted by head id.
    pub fn tokens_by_head(&self) -> Vec<TokenId> {
        let mut v: Vec<(AgentId, TokenId)> = self.tokens.values().map(|t| (t.head, t.id)).collect();
        v.sort();
        v.into_iter().map(|(_, t)| t).collect()
    }

    /// Undirected head-member edges `(a, b, level)` with `a` the member.
    pub fn edges(&self) -> Vec<(AgentId, AgentId, u32)> {
        let mut out = Vec::new();
        for t in self.tokens.values() {
            for m in &t.members {
                if *m != t.head {
                    out.push((*m, t.head, t.level));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}
