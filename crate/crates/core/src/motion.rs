//! Motion controllers: random targets, exploration-only and fire tracking
//! potential fields.

use glam::{DVec2, DVec3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief_grid::{BeliefGrid, GridShape, MetaCell};

/// Side of the square cell blocks summarised by [`BeliefField`].
pub const BLOCK: usize = 4;

/// Blocks within this Chebyshev block distance of the agent are summed cell by cell.
const NEAR_BLOCKS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    #[serde(alias = "random")]
    RandomTargets,
    #[serde(alias = "explore")]
    ExploreOnly,
    #[default]
    #[serde(alias = "track")]
    FireTracking,
}

impl std::str::FromStr for MotionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" | "random_targets" => Ok(Self::RandomTargets),
            "explore" | "explore_only" => Ok(Self::ExploreOnly),
            "track" | "fire_tracking" => Ok(Self::FireTracking),
            other => Err(format!("unknown motion mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub v_0: f64,
    pub w_r: f64,
    pub w_a: f64,
    pub w_f: f64,
    pub mode: MotionMode,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            v_0: 20.0,
            w_r: 1e8,
            w_a: 1.0,
            w_f: 5000.0,
            mode: MotionMode::FireTracking,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_0 > 0.0 && self.v_0.is_finite()) {
            return Err(format!("v_0 must be positive, got {}", self.v_0));
        }
        for (name, w) in [("w_r", self.w_r), ("w_a", self.w_a), ("w_f", self.w_f)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("{name} must be non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

/// Per-block sums over a belief grid, kept in step with the grid so far-field
/// forces cost one term per block.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefField {
    shape: GridShape,
    bw: usize,
    bh: usize,
    n_obs: Vec<u32>,
    sum_time: Vec<f64>,
    sum_fire: Vec<f64>,
}

impl BeliefField {
    pub fn new(shape: GridShape) -> Self {
        let bw = shape.width.div_ceil(BLOCK);
        let bh = shape.height.div_ceil(BLOCK);
        Self {
            shape,
            bw,
            bh,
            n_obs: vec![0; bw * bh],
            sum_time: vec![0.0; bw * bh],
            sum_fire: vec![0.0; bw * bh],
        }
    }

    pub fn from_grid(grid: &BeliefGrid) -> Self {
        let mut f = Self::new(grid.shape());
        f.rebuild(grid);
        f
    }

    fn block_of(&self, index: usize) -> usize {
        let (x, y) = self.shape.coords(index);
        (y / BLOCK) * self.bw + x / BLOCK
    }

    fn add(&mut self, index: usize, cell: &MetaCell, sign: f64) {
        if !cell.is_observed() {
            return;
        }
        let b = self.block_of(index);
        if sign > 0.0 {
            self.n_obs[b] += 1;
        } else {
            self.n_obs[b] -= 1;
        }
        self.sum_time[b] += sign * cell.obs_time;
        self.sum_fire[b] += sign * cell.fire;
    }

    /// Accounts for cell `index` changing from `old` to `new`.
    pub fn replace(&mut self, index: usize, old: &MetaCell, new: &MetaCell) {
        self.add(index, old, -1.0);
        self.add(index, new, 1.0);
    }

    pub fn rebuild(&mut self, grid: &BeliefGrid) {
        self.n_obs.iter_mut().for_each(|v| *v = 0);
        self.sum_time.iter_mut().for_each(|v| *v = 0.0);
        self.sum_fire.iter_mut().for_each(|v| *v = 0.0);
        for (i, c) in grid.observed() {
            self.add(i, &c, 1.0);
        }
    }

    fn block_cells(&self, bx: usize, by: usize) -> (usize, usize, usize, usize) {
        let x0 = bx * BLOCK;
        let y0 = by * BLOCK;
        (
            x0,
            y0,
            (x0 + BLOCK).min(self.shape.width),
            (y0 + BLOCK).min(self.shape.height),
        )
    }

    /// Mean cell center of a block.
    fn block_center(&self, bx: usize, by: usize) -> DVec2 {
        let (x0, y0, x1, y1) = self.block_cells(bx, by);
        let s = self.shape.cell_size;
        DVec2::new((x0 + x1) as f64 * 0.5 * s, (y0 + y1) as f64 * 0.5 * s)
    }
}

fn cell_pos(shape: &GridShape, index: usize) -> DVec2 {
    let (x, y) = shape.cell_center(index);
    DVec2::new(x, y)
}

pub fn flat(p: DVec3) -> DVec2 {
    DVec2::new(p.x, p.y)
}

/// Age used for the attraction of one cell; unobserved cells get `cap`.
fn cell_age(cell: &MetaCell, now: f64, cap: f64) -> f64 {
    if cell.is_observed() {
        now - cell.obs_time
    } else {
        cap
    }
}

/// Reciprocal repulsion from other agents plus the four environment walls.
pub fn force_repel(p: DVec2, others: &[DVec2], env: DVec2, w_r: f64) -> DVec2 {
    let term = |q: DVec2| {
        let d = p - q;
        d / (d.length().powi(3) + 1.0)
    };
    let mut f = DVec2::ZERO;
    for &q in others {
        f += term(q);
    }
    f += term(DVec2::new(0.0, p.y));
    f += term(DVec2::new(env.x, p.y));
    f += term(DVec2::new(p.x, 0.0));
    f += term(DVec2::new(p.x, env.y));
    w_r * f
}

/// Attraction toward old data. With a field, blocks beyond the near zone are
/// collapsed onto their centers.
pub fn force_age(
    p: DVec2,
    belief: &BeliefGrid,
    field: Option<&BeliefField>,
    now: f64,
    age_cap: f64,
    w_a: f64,
) -> DVec2 {
    let shape = belief.shape();
    let term = |q: DVec2, a: f64| {
        let d = q - p;
        a * d / (d.length().powi(3) + 1.0)
    };
    let f = match field {
        None => (0..shape.cell_count())
            .map(|i| term(cell_pos(&shape, i), cell_age(&belief.get_index(i), now, age_cap)))
            .sum(),
        Some(field) => blockwise(
            p,
            field,
            belief,
            |i, c| term(cell_pos(&shape, i), cell_age(c, now, age_cap)),
            |b, n_cells, center| {
                let n = field.n_obs[b] as f64;
                let total = n * now - field.sum_time[b] + (n_cells - n) * age_cap;
                term(center, total)
            },
        ),
    };
    w_a * f
}

/// Attraction toward believed fire; inverse-square rather than inverse-cube.
pub fn force_fire(p: DVec2, belief: &BeliefGrid, field: Option<&BeliefField>, w_f: f64) -> DVec2 {
    let shape = belief.shape();
    let term = |q: DVec2, beta: f64| {
        let d = q - p;
        beta * d / (d.length_squared() + 1.0)
    };
    let f = match field {
        None => belief
            .observed()
            .filter(|(_, c)| c.fire != 0.0)
            .map(|(i, c)| term(cell_pos(&shape, i), c.fire))
            .sum(),
        Some(field) => blockwise(
            p,
            field,
            belief,
            |i, c| {
                if c.fire != 0.0 {
                    term(cell_pos(&shape, i), c.fire)
                } else {
                    DVec2::ZERO
                }
            },
            |b, _, center| {
                let s = field.sum_fire[b];
                if s.abs() < 1e-12 {
                    DVec2::ZERO
                } else {
                    term(center, s)
                }
            },
        ),
    };
    w_f * f
}

fn blockwise(
    p: DVec2,
    field: &BeliefField,
    belief: &BeliefGrid,
    exact: impl Fn(usize, &MetaCell) -> DVec2,
    far: impl Fn(usize, f64, DVec2) -> DVec2,
) -> DVec2 {
    let shape = belief.shape();
    let s = shape.cell_size * BLOCK as f64;
    let pbx = ((p.x / s).floor().max(0.0) as usize).min(field.bw - 1);
    let pby = ((p.y / s).floor().max(0.0) as usize).min(field.bh - 1);
    let mut f = DVec2::ZERO;
    for by in 0..field.bh {
        for bx in 0..field.bw {
            let near = bx.abs_diff(pbx) <= NEAR_BLOCKS && by.abs_diff(pby) <= NEAR_BLOCKS;
            let (x0, y0, x1, y1) = field.block_cells(bx, by);
            if near {
                for y in y0..y1 {
                    for x in x0..x1 {
                        let i = shape.index(x, y);
                        f += exact(i, &belief.get_index(i));
                    }
                }
            } else {
                let n_cells = ((x1 - x0) * (y1 - y0)) as f64;
                f += far(by * field.bw + bx, n_cells, field.block_center(bx, by));
            }
        }
    }
    f
}

/// Constant-speed velocity along `force`; a vanishing force keeps the heading.
pub fn step_velocity(force: DVec2, previous: DVec3, v_0: f64) -> DVec3 {
    let n = force.length();
    if n < 1e-12 || !n.is_finite() {
        let prev = flat(previous);
        return if prev.length() > 1e-12 {
            (prev.normalize() * v_0).extend(0.0)
        } else {
            previous
        };
    }
    (force / n * v_0).extend(0.0)
}

/// Seconds of flight needed to reach `home` plus one tick of slack.
pub fn return_margin(p: DVec2, home: DVec2, v_0: f64, dt: f64) -> f64 {
    p.distance(home) / v_0 + dt
}

/// Random-target pursuit. Draws a new uniform target once the current one is
/// within one step.
pub fn step_random_targets<R: Rng>(
    position: DVec3,
    target: &mut DVec3,
    env: DVec2,
    v_0: f64,
    dt: f64,
    rng: &mut R,
) -> DVec3 {
    let p = flat(position);
    if p.distance(flat(*target)) <= v_0 * dt {
        *target = DVec3::new(rng.gen_range(0.0..env.x), rng.gen_range(0.0..env.y), 0.0);
    }
    let d = flat(*target) - p;
    if d.length() < 1e-12 {
        DVec3::ZERO
    } else {
        (d.normalize() * v_0).extend(0.0)
    }
}
