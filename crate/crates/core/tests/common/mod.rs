//! Six-agent two-level fixture shared by the golden tests and the acceptance
//! run: agents 1-3 under head 3, agents 4-6 under head 5, and a level-2
//! cluster {3, 5} headed by 6. Every agent observes its own patch; patches are
//! far enough apart that no compression window spans two.

#![allow(dead_code)]

use mlc_core::fixtures;
use mlc_core::propagation::lower_belief;
use mlc_core::{AgentId, AggregationPolicy, BeliefGrid, GridShape, MetaCell, Propagator, Registry};

pub const W: usize = 24;
pub const H: usize = 8;
pub const NOW: f64 = 1.0;

pub fn shape() -> GridShape {
    GridShape::new(W, H, 25.0)
}

/// Plain dense copy of a grid, `None` for unobserved cells.
pub type Dense = Vec<Option<(f64, f64, f64)>>;

pub fn patch(agent: u32) -> Dense {
    let mut d = vec![None; W * H];
    let x0 = (agent as usize - 1) * 4;
    for (k, (dx, dy)) in [(0, 2), (1, 2), (0, 3), (1, 3)].into_iter().enumerate() {
        let fire = ((agent as usize * 7 + k * 3) % 10) as f64 / 9.0;
        d[(2 + dy) * W + x0 + dx] = Some((1.0, NOW, fire));
    }
    d
}

pub fn to_grid(d: &Dense) -> BeliefGrid {
    BeliefGrid::from_cells(
        shape(),
        d.iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|(r, t, f)| (i, MetaCell::new(r, t, f)))),
    )
}

pub fn side(resolution: f64) -> usize {
    ((1.0 / resolution).sqrt().round() as usize).max(1)
}

/// Resolution divided by `c`, fire replaced by the mean over the footprint window.
pub fn naive_compress(d: &Dense, c: f64) -> Dense {
    let mut out = vec![None; W * H];
    for y in 0..H {
        for x in 0..W {
            let Some((r, t, f)) = d[y * W + x] else { continue };
            let r2 = r / c;
            let s = side(r2);
            let fire = if s == 1 {
                f
            } else {
                let (lo, hi) = ((s - 1) / 2, s / 2);
                let (mut sum, mut n) = (0.0, 0usize);
                for wy in y.saturating_sub(lo)..=(y + hi).min(H - 1) {
                    for wx in x.saturating_sub(lo)..=(x + hi).min(W - 1) {
                        if let Some((_, _, v)) = d[wy * W + wx] {
                            sum += v;
                            n += 1;
                        }
                    }
                }
                sum / n as f64
            };
            out[y * W + x] = Some((r2, t, fire));
        }
    }
    out
}

/// Cell-wise union keeping the higher resolution; all timestamps are equal here.
pub fn naive_union(parts: &[Dense]) -> Dense {
    let mut out = vec![None; W * H];
    for p in parts {
        for (i, c) in p.iter().enumerate() {
            if let Some(cell) = c {
                match out[i] {
                    Some((r, _, _)) if r >= cell.0 => {}
                    _ => out[i] = Some(*cell),
                }
            }
        }
    }
    out
}

pub fn fixture(c_d: f64, c_t: f64) -> (Registry, Propagator) {
    let (reg, prop) = fixtures::six_agent_world(c_d, c_t);
    assert!(mlc_core::cluster::check_rules(&reg, 8).is_empty());
    for i in 1..=6 {
        assert_eq!(reg.agents[&AgentId(i)].observation, to_grid(&patch(i)), "agent {i}");
    }
    (reg, prop)
}

pub fn expected_belief_of_agent1(c: f64) -> Dense {
    let o: Vec<Dense> = (1..=6).map(patch).collect();
    let low_a: Vec<Dense> = o[..3].iter().map(|p| naive_compress(p, c)).collect();
    let low_b: Vec<Dense> = o[3..].iter().map(|p| naive_compress(p, c)).collect();
    let lambda_a = naive_union(&low_a);
    let lambda_b = naive_union(&low_b);
    let top = naive_union(&[naive_compress(&lambda_a, c), naive_compress(&lambda_b, c)]);
    naive_union(&[o[0].clone(), lambda_a, top])
}

/// Runs one synchronized upstream and downstream pass and returns agent 1's belief.
pub fn belief_of_agent1_after_one_pass(c_d: f64) -> BeliefGrid {
    let (mut reg, mut prop) = fixture(c_d, 1.0);
    prop.upstream(&mut reg, None, NOW, 1.0).unwrap();
    prop.downstream(&mut reg, NOW, 1.0).unwrap();
    reg.agents[&AgentId(1)].total_belief.clone()
}

/// How often the level-1 head 3 takes a new higher-level view over `periods` steps.
pub fn gate_openings(c_t: f64, periods: u32) -> u32 {
    let (mut reg, mut prop) = fixture(2.0, c_t);
    let tid = reg.token_id_of(AgentId(3)).unwrap();
    let mut consumed = 0;
    let mut last = f64::NEG_INFINITY;
    for k in 1..=periods {
        let now = k as f64;
        prop.upstream(&mut reg, None, now, 1.0).unwrap();
        prop.downstream(&mut reg, now, 1.0).unwrap();
        let t = reg.tokens[&tid].last_higher_update;
        if t != last {
            consumed += 1;
            last = t;
        }
    }
    consumed
}

/// Recursive lower belief of `head` at `level`, for cross-checking the inboxes.
pub fn recursive_lower(reg: &Registry, head: u32, level: u32, c_d: f64) -> BeliefGrid {
    lower_belief(reg, AgentId(head), level, c_d, AggregationPolicy::AgePriority, NOW).unwrap()
}
