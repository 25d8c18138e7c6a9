//! Locally centralized maintenance run by cluster-heads.

use super::registry::{AgentId, Registry, TokenId};
use super::ProtocolConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MaintenanceReport {
    pub reassigned: usize,
    pub transferred: usize,
    pub split: usize,
    pub deferred_splits: usize,
    pub assimilated: usize,
    pub demoted: usize,
    pub repaired: usize,
}

/// One maintenance round over every token, ordered by head id.
pub fn maintain(reg: &mut Registry, cfg: &ProtocolConfig) -> MaintenanceReport {
    let mut report = MaintenanceReport {
        repaired: repair_rules(reg, cfg),
        ..Default::default()
    };
    for tid in reg.tokens_by_head() {
        if !reg.tokens.contains_key(&tid) {
            continue;
        }
        if maintain_reassign(reg, tid, false) {
            report.reassigned += 1;
        }
        report.transferred += maintain_transfer(reg, tid, cfg);
        if reg
            .tokens
            .get(&tid)
            .is_some_and(|t| t.members.len() >= cfg.max_cluster_size)
        {
            if maintain_split(reg, tid, cfg).is_some() {
                report.split += 1;
            } else {
                report.deferred_splits += 1;
            }
        }
        if maintain_assimilate(reg, tid, cfg) {
            report.assimilated += 1;
        }
        if maintain_demote(reg, tid) {
            report.demoted += 1;
        }
    }
    report.repaired += repair_rules(reg, cfg);
    report
}

/// Passes the token to the idle sub-tree agent closest to the member centroid
/// when it is strictly closer than the current head, or unconditionally when
/// `force` is set (despawn). A forced pass without candidates destroys the
/// token. Returns whether the head changed.
pub fn maintain_reassign(reg: &mut Registry, tid: TokenId, force: bool) -> bool {
    let Some(token) = reg.tokens.get(&tid) else {
        return false;
    };
    let head = token.head;
    let members: Vec<AgentId> = token.members.iter().copied().filter(|m| *m != head || !force).collect();
    let centroid = reg.centroid(if members.is_empty() { &token.members } else { &members });
    let idle: Vec<AgentId> = reg.idle_leaves(tid).into_iter().filter(|a| *a != head).collect();
    let best = reg.closest_to(&idle, centroid);
    match best {
        Some(b) if force => {
            reg.pass_token(tid, b);
            true
        }
        Some(b) => {
            let head_d = reg.position(head).distance(centroid);
            if reg.position(b).distance(centroid) < head_d {
                reg.pass_token(tid, b);
                true
            } else {
                false
            }
        }
        None => {
            if force {
                reg.destroy_token(tid);
            }
            false
        }
    }
}

/// Leaf agents carried along when `member` of a level-`level` token moves.
fn moved_leaves(reg: &Registry, level: u32, member: AgentId) -> Vec<AgentId> {
    if level == 1 {
        vec![member]
    } else {
        reg.token_id_of(member).map(|t| reg.leaves(t)).unwrap_or_default()
    }
}

/// Whether moving `member` from `from` to `to` keeps every head a level-1
/// member of its own sub-tree. Tokens in `ignore` are about to disappear.
pub fn transfer_is_rule3_safe(
    reg: &Registry,
    member: AgentId,
    from: TokenId,
    to: TokenId,
    ignore: Option<TokenId>,
) -> bool {
    let Some(level) = reg.tokens.get(&from).map(|t| t.level) else {
        return false;
    };
    let moved = moved_leaves(reg, level, member);
    let to_anc = reg.ancestors(to);
    if to_anc.contains(&from) {
        return false;
    }
    reg.ancestors(from)
        .into_iter()
        .filter(|t| !to_anc.contains(t) && Some(*t) != ignore)
        .all(|t| !moved.contains(&reg.tokens[&t].head))
}

/// Moves members that left the head's vicinity to a better-suited sibling,
/// escalating up to `max_escalation` extra levels. Returns the move count.
pub fn maintain_transfer(reg: &mut Registry, tid: TokenId, cfg: &ProtocolConfig) -> usize {
    let Some(token) = reg.tokens.get(&tid) else {
        return 0;
    };
    if token.higher_head.is_none() {
        return 0;
    }
    let level = token.level;
    let head = token.head;
    let limit = cfg.threshold(level);
    let members = token.members.clone();
    let mut moved = 0;
    for m in members {
        if m == head || !reg.tokens.contains_key(&tid) {
            continue;
        }
        let current = reg.distance(m, head);
        if current <= limit {
            continue;
        }
        let mut scope = reg.parent(tid);
        for _ in 0..=cfg.max_escalation {
            let Some(s) = scope else {
                break;
            };
            if let Some(target) = best_sibling(reg, m, tid, s, level, current, cfg) {
                reg.move_member(tid, target, m);
                moved += 1;
                break;
            }
            scope = reg.parent(s);
        }
    }
    moved
}

/// Closest non-full level-`level` token in the sub-tree of `scope`, nearer to
/// `member` than `current`.
fn best_sibling(
    reg: &Registry,
    member: AgentId,
    from: TokenId,
    scope: TokenId,
    level: u32,
    current: f64,
    cfg: &ProtocolConfig,
) -> Option<TokenId> {
    let mut best: Option<(f64, AgentId, TokenId)> = None;
    for t in reg.subtree_tokens(scope) {
        let tok = &reg.tokens[&t];
        if t == from || tok.level != level || tok.is_full(cfg.max_cluster_size) {
            continue;
        }
        let d = reg.distance(member, tok.head);
        if d >= current || !transfer_is_rule3_safe(reg, member, from, t, None) {
            continue;
        }
        if best.is_none_or(|(bd, bh, _)| d < bd || (d == bd && tok.head < bh)) {
            best = Some((d, tok.head, t));
        }
    }
    best.map(|(_, _, t)| t)
}

/// Splits a full cluster in two. Returns the new same-level token, or `None`
/// when no idle agent can head it.
///
/// Under a full parent the new cluster starts detached and has to join
/// elsewhere. A boss without a second idle agent splits into two trees.
pub fn maintain_split(reg: &mut Registry, tid: TokenId, cfg: &ProtocolConfig) -> Option<TokenId> {
    let token = reg.tokens.get(&tid)?;
    if token.members.len() < cfg.max_cluster_size {
        return None;
    }
    let level = token.level;
    let head = token.head;
    let members = token.members.clone();
    let higher = token.higher_head;
    let parent = reg.parent(tid);
    let centroid = reg.centroid(&members);
    let home_h = reg.home_member(tid, head)?;
    let idle = reg.idle_leaves(tid);
    let eligible: Vec<AgentId> = idle
        .iter()
        .copied()
        .filter(|a| reg.home_member(tid, *a).is_some_and(|h| h != home_h))
        .collect();
    let new_head = reg.closest_to(&eligible, centroid)?;
    let home_y = reg.home_member(tid, new_head)?;
    let lift_head = if parent.is_none() {
        let rest: Vec<AgentId> = idle.into_iter().filter(|a| *a != new_head).collect();
        reg.closest_to(&rest, centroid)
    } else {
        None
    };

    let ph = reg.position(head);
    let py = reg.position(new_head);
    let to_b: Vec<AgentId> = members
        .iter()
        .copied()
        .filter(|m| {
            if *m == home_h {
                false
            } else if *m == home_y {
                true
            } else {
                let p = reg.position(*m);
                p.distance(py) < p.distance(ph)
            }
        })
        .collect();
    {
        let t = reg.tokens.get_mut(&tid).expect("token exists");
        t.members.retain(|m| !to_b.contains(m));
        for m in &to_b {
            t.inbox.remove(m);
        }
    }
    let parent_full = parent.is_some_and(|p| reg.tokens[&p].is_full(cfg.max_cluster_size));
    let new_tid = reg.create_token(level, new_head, to_b, if parent_full { None } else { higher });
    match (parent, lift_head) {
        (Some(p), _) if !parent_full => reg.add_member(p, new_head),
        (None, Some(z)) => {
            reg.create_token(level + 1, z, vec![head, new_head], None);
        }
        _ => {}
    }
    Some(new_tid)
}

/// Dissolves a small cluster into its siblings when all members fit without
/// filling any sibling. Returns whether the token was destroyed.
pub fn maintain_assimilate(reg: &mut Registry, tid: TokenId, cfg: &ProtocolConfig) -> bool {
    let Some(token) = reg.tokens.get(&tid) else {
        return false;
    };
    if token.members.len() > cfg.assimilation_threshold {
        return false;
    }
    let Some(parent) = reg.parent(tid) else {
        return false;
    };
    let members = token.members.clone();
    let siblings: Vec<TokenId> = reg.tokens[&parent]
        .members
        .iter()
        .filter_map(|m| reg.token_id_of(*m))
        .filter(|t| *t != tid)
        .collect();
    let mut load: Vec<usize> = siblings.iter().map(|t| reg.tokens[t].members.len()).collect();
    let mut plan = Vec::with_capacity(members.len());
    for m in &members {
        let mut best: Option<(f64, AgentId, usize)> = None;
        for (k, s) in siblings.iter().enumerate() {
            if load[k] + 1 >= cfg.max_cluster_size {
                continue;
            }
            if !transfer_is_rule3_safe(reg, *m, tid, *s, Some(tid)) {
                continue;
            }
            let h = reg.tokens[s].head;
            let d = reg.distance(*m, h);
            if best.is_none_or(|(bd, bh, _)| d < bd || (d == bd && h < bh)) {
                best = Some((d, h, k));
            }
        }
        match best {
            Some((_, _, k)) => {
                load[k] += 1;
                plan.push((*m, siblings[k]));
            }
            None => return false,
        }
    }
    for (m, s) in plan {
        reg.move_member(tid, s, m);
    }
    reg.destroy_token(tid);
    true
}

/// A boss with a single member gives up its token.
pub fn maintain_demote(reg: &mut Registry, tid: TokenId) -> bool {
    match reg.tokens.get(&tid) {
        Some(t) if t.higher_head.is_none() && t.members.len() == 1 => {
            reg.destroy_token(tid);
            true
        }
        _ => false,
    }
}

/// Restores rules 2 and 3 by forced head changes; returns the number of fixes.
pub fn repair_rules(reg: &mut Registry, cfg: &ProtocolConfig) -> usize {
    let mut fixes = 0;
    for _ in 0..4 * reg.tokens.len().max(1) {
        let mut changed = false;
        for tid in reg.tokens_by_head() {
            let Some(t) = reg.tokens.get(&tid) else {
                continue;
            };
            if t.members.is_empty() {
                reg.destroy_token(tid);
                changed = true;
                continue;
            }
            let head = t.head;
            let ok = if t.level == 1 {
                t.members.contains(&head)
            } else {
                reg.agents[&head].level1_head.is_some() && reg.leaves(tid).contains(&head)
            };
            if ok {
                continue;
            }
            changed = true;
            fixes += 1;
            if t.level == 1 && t.members.len() < cfg.max_cluster_size && reg.agents[&head].level1_head.is_none() {
                reg.add_member(tid, head);
                continue;
            }
            let centroid = reg.centroid(&t.members);
            let idle = reg.idle_leaves(tid);
            match reg.closest_to(&idle, centroid) {
                Some(b) => reg.pass_token(tid, b),
                None => reg.destroy_token(tid),
            }
        }
        if !changed {
            break;
        }
    }
    fixes
}

/// Removes an agent: its token passes on (or is destroyed) and it leaves its
/// level-1 cluster. Returns the agent state.
pub fn despawn(reg: &mut Registry, id: AgentId, cfg: &ProtocolConfig) -> Option<super::AgentState> {
    if let Some(tid) = reg.token_id_of(id) {
        maintain_reassign(reg, tid, true);
    }
    if let Some(h) = reg.agents.get(&id).and_then(|a| a.level1_head) {
        if let Some(tid) = reg.token_id_of(h) {
            reg.remove_member(tid, id);
        }
    }
    let state = reg.agents.remove(&id);
    for t in reg.tokens.values_mut() {
        t.inbox.remove(&id);
    }
    repair_rules(reg, cfg);
    state
}
