//! Ground-truth stochastic fire: fuel burn-down, neighborhood ignition and
//! extinction.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief_grid::{BeliefGrid, GridShape, MetaCell};

/// Fuel below this is treated as exhausted.
const FUEL_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FireParams {
    pub k_b: f64,
    pub k_s: f64,
    pub p_s: f64,
    pub update_period: f64,
    /// Chebyshev radius, in cells, of the spreading neighborhood.
    pub neighborhood_radius: usize,
}

impl Default for FireParams {
    fn default() -> Self {
        Self {
            k_b: 0.02,
            k_s: 0.02,
            p_s: 1e-7,
            update_period: 5.0,
            neighborhood_radius: 2,
        }
    }
}

impl FireParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k_b > 0.0 && self.k_b <= 1.0) {
            return Err(format!("k_b must lie in (0, 1], got {}", self.k_b));
        }
        if !(self.k_s >= 0.0 && self.k_s.is_finite()) {
            return Err(format!("k_s must be non-negative, got {}", self.k_s));
        }
        if !(0.0..=1.0).contains(&self.p_s) {
            return Err(format!("p_s must lie in [0, 1], got {}", self.p_s));
        }
        if !(self.update_period > 0.0 && self.update_period.is_finite()) {
            return Err(format!(
                "fire update_period must be positive, got {}",
                self.update_period
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FireGrid {
    shape: GridShape,
    pub params: FireParams,
    burning: Vec<bool>,
    fuel: Vec<f64>,
    extinct: Vec<bool>,
    updates: u64,
}

impl FireGrid {
    /// Full fuel everywhere, nothing burning.
    pub fn new(shape: GridShape, params: FireParams) -> Self {
        let n = shape.cell_count();
        Self {
            shape,
            params,
            burning: vec![false; n],
            fuel: vec![1.0; n],
            extinct: vec![false; n],
            updates: 0,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn is_burning(&self, index: usize) -> bool {
        self.burning[index]
    }

    pub fn fuel(&self, index: usize) -> f64 {
        self.fuel[index]
    }

    pub fn is_extinct(&self, index: usize) -> bool {
        self.extinct[index]
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn burning_count(&self) -> usize {
        self.burning.iter().filter(|b| **b).count()
    }

    pub fn burning_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.burning.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn total_fuel(&self) -> f64 {
        self.fuel.iter().sum()
    }

    /// Sets a cell on fire if it still has fuel.
    pub fn ignite(&mut self, index: usize) -> bool {
        if self.extinct[index] || self.fuel[index] <= 0.0 {
            return false;
        }
        self.burning[index] = true;
        true
    }

    /// One uniformly drawn seed fire.
    pub fn ignite_random<R: Rng>(&mut self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.shape.cell_count());
        self.ignite(i);
        i
    }

    /// Spreading probability into `index` from the currently burning cells.
    pub fn ignition_probability(&self, index: usize) -> f64 {
        let (x, y) = self.shape.coords(index);
        let mut product = 1.0;
        let mut any = false;
        for (j, d2) in self.neighbors(x, y) {
            if self.burning[j] {
                any = true;
                product *= (self.params.k_s / d2).clamp(0.0, 1.0);
            }
        }
        let spread = if any { product } else { 0.0 };
        1.0 - (1.0 - self.params.p_s) * (1.0 - spread)
    }

    fn neighbors(&self, x: usize, y: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.params.neighborhood_radius as isize;
        let (w, h) = (self.shape.width as isize, self.shape.height as isize);
        let s = self.shape.cell_size;
        (-r..=r).flat_map(move |dy| {
            (-r..=r).filter_map(move |dx| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                    return None;
                }
                let d2 = ((dx * dx + dy * dy) as f64) * s * s;
                Some((ny as usize * w as usize + nx as usize, d2))
            })
        })
    }

    /// One fire update: burn fuel, draw ignitions against the burning set from
    /// before the update, then extinguish exhausted cells.
    pub fn step<R: Rng>(&mut self, rng: &mut R) {
        let n = self.shape.cell_count();
        let was_burning: Vec<usize> = self.burning_cells().collect();

        for &i in &was_burning {
            let f = self.fuel[i] - self.params.k_b;
            self.fuel[i] = if f < FUEL_EPS { 0.0 } else { f };
        }

        // spread product per cell, accumulated from each burning source
        let mut product = vec![1.0f64; n];
        let mut exposed = vec![false; n];
        for &i in &was_burning {
            let (x, y) = self.shape.coords(i);
            let near: Vec<(usize, f64)> = self.neighbors(x, y).collect();
            for (j, d2) in near {
                exposed[j] = true;
                product[j] *= (self.params.k_s / d2).clamp(0.0, 1.0);
            }
        }
        let p_s = self.params.p_s;
        for i in 0..n {
            if self.burning[i] || self.extinct[i] || self.fuel[i] <= 0.0 {
                continue;
            }
            let spread = if exposed[i] { product[i] } else { 0.0 };
            let p = 1.0 - (1.0 - p_s) * (1.0 - spread);
            let u: f64 = rng.gen();
            if u < p {
                self.burning[i] = true;
            }
        }

        for &i in &was_burning {
            if self.fuel[i] <= 0.0 {
                self.burning[i] = false;
                self.extinct[i] = true;
            }
        }
        self.updates += 1;
    }

    /// Full-resolution fire indicator for each in-range cell.
    pub fn observe(&self, cells: &[usize]) -> Vec<(usize, f64)> {
        cells
            .iter()
            .filter(|i| **i < self.burning.len())
            .map(|&i| (i, if self.burning[i] { 1.0 } else { 0.0 }))
            .collect()
    }

    /// Observation grid `O_i` for the given field of view.
    pub fn observation(&self, cells: &[usize], now: f64) -> BeliefGrid {
        BeliefGrid::from_cells(
            self.shape,
            self.observe(cells)
                .into_iter()
                .map(|(i, fire)| (i, MetaCell::new(1.0, now, fire))),
        )
    }

    /// Snapshot rows `tick,x,y,burning,fuel`, without header.
    pub fn write_csv<W: Write>(&self, tick: u64, mut out: W) -> std::io::Result<()> {
        for i in 0..self.shape.cell_count() {
            let (x, y) = self.shape.coords(i);
            writeln!(out, "{tick},{x},{y},{},{}", self.burning[i] as u8, self.fuel[i])?;
        }
        Ok(())
    }
}

/// Cells within Chebyshev radius `radius` of the cell under `(px, py)`,
/// clipped to the grid.
pub fn fov_cells(shape: &GridShape, px: f64, py: f64, radius: usize) -> Vec<usize> {
    let cx = ((px / shape.cell_size).floor().max(0.0) as usize).min(shape.width - 1);
    let cy = ((py / shape.cell_size).floor().max(0.0) as usize).min(shape.height - 1);
    let x0 = cx.saturating_sub(radius);
    let y0 = cy.saturating_sub(radius);
    let x1 = (cx + radius).min(shape.width - 1);
    let y1 = (cy + radius).min(shape.height - 1);
    let mut out = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            out.push(shape.index(x, y));
        }
    }
    out
}
