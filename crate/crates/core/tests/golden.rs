mod common;

use common::*;
use mlc_core::{AgentId, BeliefGrid};

fn check_expansion(c_d: f64) {
    let got = belief_of_agent1_after_one_pass(c_d);
    let want = to_grid(&expected_belief_of_agent1(c_d));
    assert_eq!(got, want, "c_d = {c_d}");

    // resolution strata: own patch 1, siblings 1/c, the other branch 1/c^2
    for (agent, r) in [
        (1, 1.0),
        (2, 1.0 / c_d),
        (3, 1.0 / c_d),
        (4, 1.0 / (c_d * c_d)),
        (6, 1.0 / (c_d * c_d)),
    ] {
        let cell = patch(agent).iter().position(|c| c.is_some()).unwrap();
        assert_eq!(got.get_index(cell).resolution, r, "agent {agent}");
    }
}

#[test]
fn agent1_update_matches_hand_expansion_cd2() {
    check_expansion(2.0);
}

#[test]
fn agent1_update_matches_hand_expansion_cd3() {
    check_expansion(3.0);
}

#[test]
fn message_passing_agrees_with_recursive_lower_belief() {
    for c_d in [2.0, 3.0] {
        let (mut reg, mut prop) = fixture(c_d, 1.0);
        prop.upstream(&mut reg, None, NOW, 1.0).unwrap();
        for (head, level) in [(3, 1), (5, 1), (6, 2)] {
            let tid = reg.token_id_of(AgentId(head)).unwrap();
            let from_inbox = prop.token_lower_belief(&reg, tid, shape(), NOW).unwrap();
            assert_eq!(
                from_inbox,
                recursive_lower(&reg, head, level, c_d),
                "head {head}, c_d {c_d}"
            );
        }
    }
}

#[test]
fn every_member_sees_both_branches() {
    let (mut reg, mut prop) = fixture(2.0, 1.0);
    prop.upstream(&mut reg, None, NOW, 1.0).unwrap();
    prop.downstream(&mut reg, NOW, 1.0).unwrap();
    let everything = (1..=6)
        .map(|i| patch(i).iter().filter(|c| c.is_some()).count())
        .sum::<usize>();
    for a in reg.agents.values() {
        assert_eq!(a.total_belief.observed_count(), everything, "{}", a.id);
    }
}

#[test]
fn boss_feeds_the_base_station() {
    let (mut reg, mut prop) = fixture(2.0, 1.0);
    let mut base = BeliefGrid::new(shape());
    prop.upstream(&mut reg, Some(&mut base), NOW, 1.0).unwrap();
    let top = recursive_lower(&reg, 6, 2, 2.0).compress(2.0).unwrap();
    assert_eq!(base, top);
}

#[test]
fn gate_with_ct2_opens_every_fourth_period() {
    let consumed = gate_openings(2.0, 100);
    assert!((24..=26).contains(&consumed), "{consumed}");
}

#[test]
fn gate_with_unit_ct_opens_every_period() {
    assert_eq!(gate_openings(1.0, 50), 50);
}

#[test]
fn checked_in_golden_files_match_oracle() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for c_d in [2.0, 3.0] {
        let path = dir.join(mlc_core::fixtures::golden_file_name(c_d));
        let text = std::fs::read(&path).unwrap_or_else(|e| {
            panic!(
                "{}: {e} (regenerate with `mlc-sim fixtures --out {}`)",
                path.display(),
                dir.display()
            )
        });
        let stored = BeliefGrid::read_csv(shape(), text.as_slice()).unwrap();
        assert_eq!(stored, to_grid(&expected_belief_of_agent1(c_d)), "c_d = {c_d}");
    }
}
