//! Inputs shared by the benchmarks.

use mlc_core::{BeliefGrid, GridShape, MetaCell, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random belief with roughly `density` of the cells observed.
pub fn random_belief(shape: GridShape, density: f64, seed: u64) -> BeliefGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::new();
    for i in 0..shape.cell_count() {
        if rng.gen_bool(density) {
            let r = [1.0, 0.5, 0.25][rng.gen_range(0..3)];
            cells.push((
                i,
                MetaCell::new(r, rng.gen_range(0..100) as f64, rng.gen_range(0..2) as f64),
            ));
        }
    }
    BeliefGrid::from_cells(shape, cells)
}

/// Twenty agents over sixty simulated seconds.
pub fn short_scenario(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        sim_time: 60.0,
        max_agents: 20,
        spawn_interval: [1.0, 3.0],
        spawn_duration: 40.0,
        seed,
        ..Default::default()
    }
}
