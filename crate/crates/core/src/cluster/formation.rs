//! Decentralized join/create formation.

use glam::DVec3;

use super::registry::{AgentId, Phase, Registry, TokenId};
use super::ProtocolConfig;

/// One row of an agent's neighbor table, built from hello messages.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: AgentId,
    pub position: DVec3,
    pub distance: f64,
    /// Level of the token the neighbor heads, if any.
    pub head_level: Option<u32>,
    pub full: bool,
}

/// Neighbors within discovery range, ascending id.
pub fn neighbor_table(reg: &Registry, id: AgentId, cfg: &ProtocolConfig) -> Vec<Neighbor> {
    let Some(me) = reg.agents.get(&id) else {
        return Vec::new();
    };
    reg.agents
        .values()
        .filter(|a| a.id != id)
        .filter_map(|a| {
            let distance = a.position.distance(me.position);
            if !cfg.in_range(distance) {
                return None;
            }
            let token = a.token.and_then(|t| reg.tokens.get(&t));
            Some(Neighbor {
                id: a.id,
                position: a.position,
                distance,
                head_level: token.map(|t| t.level),
                full: token.is_some_and(|t| t.is_full(cfg.max_cluster_size)),
            })
        })
        .collect()
}

/// Level of cluster an agent is looking for, if any: 1 for unclustered idle
/// agents, `L + 1` for a level-`L` head without a higher head.
pub fn seek_level(reg: &Registry, id: AgentId) -> Option<u32> {
    let a = reg.agents.get(&id)?;
    match a.token.and_then(|t| reg.tokens.get(&t)) {
        None if a.level1_head.is_none() => Some(1),
        None => None,
        Some(t) if t.higher_head.is_none() => Some(t.level + 1),
        Some(_) => None,
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PollOutcome {
    /// `(agent, head)` pairs for every accepted join request.
    pub joins: Vec<(AgentId, AgentId)>,
    pub created: Vec<TokenId>,
}

/// One join/create polling round.
pub fn poll(reg: &mut Registry, cfg: &ProtocolConfig, now: f64) -> PollOutcome {
    let ids: Vec<AgentId> = reg.agents.keys().copied().collect();
    for &id in &ids {
        let seeking = seek_level(reg, id).is_some();
        let a = reg.agents.get_mut(&id).expect("listed");
        if seeking && !a.seeking {
            a.phase = Phase::Join;
            a.phase_deadline = now + cfg.join_period;
        } else if seeking && now + 1e-9 >= a.phase_deadline {
            let (phase, period) = match a.phase {
                Phase::Join => (Phase::Create, cfg.create_period),
                Phase::Create => (Phase::Join, cfg.join_period),
            };
            a.phase = phase;
            a.phase_deadline += period;
            if a.phase_deadline <= now {
                a.phase_deadline = now + period;
            }
        }
        a.seeking = seeking;
    }

    let mut outcome = PollOutcome::default();
    for &id in &ids {
        if reg.agents[&id].phase != Phase::Join {
            continue;
        }
        let Some(level) = seek_level(reg, id) else {
            continue;
        };
        if let Some(head) = choose_join(reg, id, level, cfg) {
            let tid = reg.token_id_of(head).expect("head owns token");
            reg.add_member(tid, id);
            outcome.joins.push((id, head));
        }
    }

    let mut by_level: Vec<(u32, AgentId)> = ids
        .iter()
        .filter(|id| reg.agents[id].phase == Phase::Create)
        .filter_map(|&id| seek_level(reg, id).map(|l| (l, id)))
        .collect();
    by_level.sort();
    let mut start = 0;
    while start < by_level.len() {
        let level = by_level[start].0;
        let end = by_level[start..]
            .iter()
            .position(|(l, _)| *l != level)
            .map_or(by_level.len(), |p| start + p);
        let candidates: Vec<AgentId> = by_level[start..end].iter().map(|(_, id)| *id).collect();
        outcome.created.extend(create_round(reg, level, candidates, cfg));
        start = end;
    }
    outcome
}

/// Nearest non-full head of `level` within range; ties go to the lowest id.
fn choose_join(reg: &Registry, id: AgentId, level: u32, cfg: &ProtocolConfig) -> Option<AgentId> {
    let mut best: Option<(f64, AgentId)> = None;
    for n in neighbor_table(reg, id, cfg) {
        if n.head_level != Some(level) || n.full {
            continue;
        }
        if best.is_none_or(|(d, _)| n.distance < d) {
            best = Some((n.distance, n.id));
        }
    }
    best.map(|(_, h)| h)
}

/// Greedy create among same-level candidates in their create phase. The
/// lowest id initiates and gathers its nearest mutually-in-range peers.
fn create_round(reg: &mut Registry, level: u32, mut candidates: Vec<AgentId>, cfg: &ProtocolConfig) -> Vec<TokenId> {
    let mut created = Vec::new();
    candidates.sort();
    while candidates.len() >= 2 {
        let initiator = candidates[0];
        let origin = reg.position(initiator);
        let mut others: Vec<(f64, AgentId)> = candidates[1..]
            .iter()
            .map(|&c| (reg.position(c).distance(origin), c))
            .filter(|(d, _)| cfg.in_range(*d))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut group = vec![initiator];
        for (_, c) in others {
            if group.len() >= cfg.max_cluster_size {
                break;
            }
            let p = reg.position(c);
            if group.iter().all(|g| cfg.in_range(reg.position(*g).distance(p))) {
                group.push(c);
            }
        }
        if group.len() < 2 {
            candidates.remove(0);
            continue;
        }
        group.sort();
        let centroid = reg.centroid(&group);
        let head = if level == 1 {
            reg.closest_to(&group, centroid)
        } else {
            // the head of a higher cluster must be an idle agent of the union
            let mut idle: Vec<AgentId> = group
                .iter()
                .filter_map(|g| reg.token_id_of(*g))
                .flat_map(|t| reg.idle_leaves(t))
                .collect();
            idle.sort();
            reg.closest_to(&idle, centroid)
        };
        match head {
            Some(head) => {
                created.push(reg.create_token(level, head, group.clone(), None));
                candidates.retain(|c| !group.contains(c));
            }
            None => {
                candidates.remove(0);
            }
        }
    }
    created
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief_grid::GridShape;
    use crate::cluster::{check_rules, AgentState};

    fn place(reg: &mut Registry, id: u32, x: f64, y: f64) -> AgentId {
        let a = AgentId(id);
        reg.insert_agent(AgentState::new(
            a,
            DVec3::new(x, y, 0.0),
            500.0,
            GridShape::new(4, 4, 25.0),
            0.0,
        ));
        a
    }

    fn force_phase(reg: &mut Registry, id: AgentId, phase: Phase) {
        let a = reg.agents.get_mut(&id).unwrap();
        a.seeking = true;
        a.phase = phase;
        a.phase_deadline = 100.0;
    }

    #[test]
    fn lone_agent_has_no_neighbors() {
        let mut reg = Registry::new();
        let a = place(&mut reg, 1, 0.0, 0.0);
        assert!(neighbor_table(&reg, a, &ProtocolConfig::default()).is_empty());
    }

    #[test]
    fn neighbors_within_range_see_each_other() {
        let mut reg = Registry::new();
        let a = place(&mut reg, 1, 0.0, 0.0);
        let b = place(&mut reg, 2, 50.0, 0.0);
        let far = place(&mut reg, 3, 500.0, 0.0);
        let cfg = ProtocolConfig {
            discovery_range: Some(100.0),
            ..Default::default()
        };
        let ids = |x: AgentId| neighbor_table(&reg, x, &cfg).iter().map(|n| n.id).collect::<Vec<_>>();
        assert_eq!(ids(a), vec![b]);
        assert_eq!(ids(b), vec![a]);
        assert!(ids(far).is_empty());
    }

    #[test]
    fn full_cluster_is_advertised_and_skipped() {
        let mut reg = Registry::new();
        let h = place(&mut reg, 1, 0.0, 0.0);
        let m = place(&mut reg, 2, 10.0, 0.0);
        let j = place(&mut reg, 3, 20.0, 0.0);
        reg.create_token(1, h, vec![h, m], None);
        let cfg = ProtocolConfig {
            max_cluster_size: 2,
            ..Default::default()
        };
        let table = neighbor_table(&reg, j, &cfg);
        assert!(table.iter().find(|n| n.id == h).unwrap().full);
        force_phase(&mut reg, j, Phase::Join);
        let out = poll(&mut reg, &cfg, 0.5);
        assert!(out.joins.is_empty());
        assert_eq!(reg.agents[&j].level1_head, None);
    }

    #[test]
    fn unclustered_agent_joins_nearby_head() {
        let mut reg = Registry::new();
        let h = place(&mut reg, 4, 0.0, 0.0);
        let j = place(&mut reg, 3, 30.0, 0.0);
        reg.create_token(1, h, vec![h], None);
        force_phase(&mut reg, j, Phase::Join);
        let out = poll(&mut reg, &ProtocolConfig::default(), 0.5);
        assert_eq!(out.joins, vec![(j, h)]);
        assert_eq!(reg.agents[&j].level1_head, Some(h));
        assert!(check_rules(&reg, 8).is_empty());
    }

    #[test]
    fn level_one_head_joins_level_two_cluster() {
        let mut reg = Registry::new();
        let a: Vec<_> = (1..=5).map(|i| place(&mut reg, i, i as f64 * 10.0, 0.0)).collect();
        reg.create_token(1, a[0], vec![a[0], a[1]], None);
        reg.create_token(1, a[2], vec![a[2]], None);
        let top = reg.create_token(2, a[1], vec![a[0]], None);
        reg.create_token(1, a[3], vec![a[3], a[4]], None);
        force_phase(&mut reg, a[3], Phase::Join);
        poll(&mut reg, &ProtocolConfig::default(), 0.5);
        assert!(reg.tokens[&top].members.contains(&a[3]));
        assert_eq!(reg.token_of(a[3]).unwrap().higher_head, Some(a[1]));
    }

    #[test]
    fn two_creators_form_a_cluster_headed_by_lowest_id() {
        let mut reg = Registry::new();
        let a = place(&mut reg, 1, 0.0, 0.0);
        let b = place(&mut reg, 2, 40.0, 0.0);
        force_phase(&mut reg, a, Phase::Create);
        force_phase(&mut reg, b, Phase::Create);
        let out = poll(&mut reg, &ProtocolConfig::default(), 0.5);
        assert_eq!(out.created.len(), 1);
        let t = &reg.tokens[&out.created[0]];
        // centroid equidistant: lowest id wins
        assert_eq!(t.head, a);
        assert_eq!(t.members, vec![a, b]);
        assert_eq!(reg.agents[&b].level1_head, Some(a));
    }

    #[test]
    fn lone_creator_does_nothing() {
        let mut reg = Registry::new();
        let a = place(&mut reg, 1, 0.0, 0.0);
        force_phase(&mut reg, a, Phase::Create);
        let out = poll(&mut reg, &ProtocolConfig::default(), 0.5);
        assert!(out.created.is_empty());
        assert!(reg.tokens.is_empty());
    }

    #[test]
    fn central_candidate_becomes_head() {
        let mut reg = Registry::new();
        let a = place(&mut reg, 1, 0.0, 0.0);
        let b = place(&mut reg, 2, 100.0, 0.0);
        let c = place(&mut reg, 3, 50.0, 10.0);
        for x in [a, b, c] {
            force_phase(&mut reg, x, Phase::Create);
        }
        let out = poll(&mut reg, &ProtocolConfig::default(), 0.5);
        assert_eq!(reg.tokens[&out.created[0]].head, c);
    }

    #[test]
    fn phases_alternate_join_and_create() {
        let mut reg = Registry::new();
        let a = place(&mut reg, 1, 0.0, 0.0);
        let cfg = ProtocolConfig::default();
        let mut seen = Vec::new();
        for k in 0..12 {
            let t = k as f64 * 0.5;
            poll(&mut reg, &cfg, t);
            seen.push(reg.agents[&a].phase);
        }
        use Phase::*;
        // join for 1 s, create for 2 s, repeating
        assert_eq!(
            seen,
            vec![Join, Join, Create, Create, Create, Create, Join, Join, Create, Create, Create, Create]
        );
    }

    #[test]
    fn level_two_create_uses_idle_head() {
        let mut reg = Registry::new();
        let a: Vec<_> = (1..=4).map(|i| place(&mut reg, i, i as f64 * 10.0, 0.0)).collect();
        reg.create_token(1, a[0], vec![a[0], a[1]], None);
        reg.create_token(1, a[2], vec![a[2], a[3]], None);
        force_phase(&mut reg, a[0], Phase::Create);
        force_phase(&mut reg, a[2], Phase::Create);
        let out = poll(&mut reg, &ProtocolConfig::default(), 0.5);
        assert_eq!(out.created.len(), 1);
        let top = &reg.tokens[&out.created[0]];
        assert_eq!(top.level, 2);
        assert!(top.head == a[1] || top.head == a[3]);
        assert!(check_rules(&reg, 8).is_empty());
    }
}
