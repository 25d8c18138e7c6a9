use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::registry::{AgentId, Registry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Rule {
    /// An agent heads more than one cluster.
    SingleToken,
    /// A cluster-head is not a member of a level-1 cluster.
    Level1Membership,
    /// A cluster-head sits outside its own sub-tree.
    SubtreeMembership,
    /// Member count outside `1..=max_cluster_size`.
    MemberBound,
    /// Dangling ids, broken back-links or level mismatches.
    Structure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleViolation {
    pub rule: Rule,
    pub agent: AgentId,
    pub detail: String,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at agent {}: {}", self.rule, self.agent, self.detail)
    }
}

/// Every rule violation in the registry.
pub fn check_rules(reg: &Registry, max_cluster_size: usize) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    let mut push = |rule, agent, detail: String| out.push(RuleViolation { rule, agent, detail });

    let mut owned: BTreeMap<AgentId, usize> = BTreeMap::new();
    for t in reg.tokens.values() {
        *owned.entry(t.head).or_default() += 1;
    }
    for (&agent, &n) in &owned {
        if n > 1 {
            push(Rule::SingleToken, agent, format!("owns {n} tokens"));
        }
    }

    for t in reg.tokens.values() {
        let Some(head) = reg.agents.get(&t.head) else {
            push(Rule::Structure, t.head, "token head is not registered".into());
            continue;
        };
        if head.token != Some(t.id) {
            push(Rule::Structure, t.head, "head does not reference its token".into());
        }
        if t.members.is_empty() || t.members.len() > max_cluster_size {
            push(
                Rule::MemberBound,
                t.head,
                format!("level-{} cluster has {} members", t.level, t.members.len()),
            );
        }
        for m in &t.members {
            let Some(member) = reg.agents.get(m) else {
                push(Rule::Structure, t.head, format!("dangling member {m}"));
                continue;
            };
            if t.level == 1 {
                if member.level1_head != Some(t.head) {
                    push(Rule::Structure, *m, format!("member of {} but links elsewhere", t.head));
                }
            } else {
                match reg.token_of(*m) {
                    Some(child) if child.level + 1 == t.level && child.higher_head == Some(t.head) => {}
                    _ => push(
                        Rule::Structure,
                        *m,
                        format!("not a level-{} head under {}", t.level - 1, t.head),
                    ),
                }
            }
        }

        match head.level1_head {
            None => push(Rule::Level1Membership, t.head, "cluster-head is unclustered".into()),
            Some(h1) => {
                let listed = reg
                    .token_of(h1)
                    .is_some_and(|l1| l1.level == 1 && l1.members.contains(&t.head));
                if !listed {
                    push(
                        Rule::Level1Membership,
                        t.head,
                        format!("level-1 head {h1} does not list it"),
                    );
                }
            }
        }

        let inside = if t.level == 1 {
            t.members.contains(&t.head)
        } else {
            reg.leaves(t.id).contains(&t.head)
        };
        if !inside {
            push(
                Rule::SubtreeMembership,
                t.head,
                format!("level-{} head outside its sub-tree", t.level),
            );
        }
    }

    for a in reg.agents.values() {
        if let Some(h) = a.level1_head {
            let ok = reg
                .token_of(h)
                .is_some_and(|t| t.level == 1 && t.members.contains(&a.id));
            if !ok {
                push(Rule::Structure, a.id, format!("links to {h} which does not list it"));
            }
        }
        if let Some(tid) = a.token {
            if reg.tokens.get(&tid).is_none_or(|t| t.head != a.id) {
                push(Rule::Structure, a.id, "references a token it does not head".into());
            }
        }
    }
    out
}
