//! Meta-belief grids and their algebra.
//!
//! Every cell carries a resolution in `[0, 1]`, the timestamp of the data it
//! holds and the believed amount of fire. Unobserved cells are represented by
//! [`MetaCell::UNOBSERVED`] and are never stored explicitly: a grid keeps its
//! observed cells either in a sorted sparse list or, once occupancy grows, in
//! a dense array. Both backings are indistinguishable through the public API.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

pub use crate::error::BeliefError;

/// Timestamp of a cell that was never observed. Compares older than any real
/// observation time.
pub const NEVER: f64 = f64::NEG_INFINITY;

/// A sparse grid switches to dense storage above `cells / DENSE_DIVISOR`
/// observed cells.
const DENSE_DIVISOR: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaCell {
    pub resolution: f64,
    pub obs_time: f64,
    pub fire: f64,
}

impl MetaCell {
    pub const UNOBSERVED: MetaCell = MetaCell {
        resolution: 0.0,
        obs_time: NEVER,
        fire: 0.0,
    };

    pub fn new(resolution: f64, obs_time: f64, fire: f64) -> Self {
        Self {
            resolution,
            obs_time,
            fire,
        }
    }

    pub fn is_observed(&self) -> bool {
        self.obs_time != NEVER
    }

    /// Data age at `now`; infinite for unobserved cells.
    pub fn age(&self, now: f64) -> f64 {
        if self.is_observed() {
            now - self.obs_time
        } else {
            f64::INFINITY
        }
    }

    fn bits_eq(&self, other: &MetaCell) -> bool {
        self.resolution.to_bits() == other.resolution.to_bits()
            && self.obs_time.to_bits() == other.obs_time.to_bits()
            && self.fire.to_bits() == other.fire.to_bits()
    }
}

impl Default for MetaCell {
    fn default() -> Self {
        Self::UNOBSERVED
    }
}

/// Cell-wise selection rule used by [`aggregate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationPolicy {
    /// Younger data wins, then higher resolution.
    #[default]
    AgePriority,
    /// Higher resolution wins, then younger data.
    ResolutionPriority,
    /// Higher `resolution + score_weight / (age + 1)` wins.
    MetaScore { score_weight: f64 },
}

impl AggregationPolicy {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            AggregationPolicy::MetaScore { score_weight } if !(score_weight > 0.0) => {
                Err(format!("meta score weight must be positive, got {score_weight}"))
            }
            _ => Ok(()),
        }
    }

    /// Whether `b` replaces `a`. Full ties keep `a`.
    pub fn second_wins(&self, a: &MetaCell, b: &MetaCell, now: f64) -> bool {
        match *self {
            AggregationPolicy::AgePriority => {
                if b.obs_time != a.obs_time {
                    b.obs_time > a.obs_time
                } else {
                    b.resolution > a.resolution
                }
            }
            AggregationPolicy::ResolutionPriority => {
                if b.resolution != a.resolution {
                    b.resolution > a.resolution
                } else {
                    b.obs_time > a.obs_time
                }
            }
            AggregationPolicy::MetaScore { score_weight } => {
                meta_score(b, score_weight, now) > meta_score(a, score_weight, now)
            }
        }
    }
}

/// `r + w / (age + 1)`; unobserved cells score zero.
pub fn meta_score(cell: &MetaCell, weight: f64, now: f64) -> f64 {
    if !cell.is_observed() {
        return 0.0;
    }
    cell.resolution + weight / (cell.age(now) + 1.0)
}

/// Selects one of the two cells, never blending them.
pub fn aggregate_cell(a: MetaCell, b: MetaCell, policy: AggregationPolicy, now: f64) -> MetaCell {
    if policy.second_wins(&a, &b, now) {
        b
    } else {
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    /// Edge length of one square cell in meters.
    pub cell_size: f64,
}

impl GridShape {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Self {
        Self {
            width,
            height,
            cell_size,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    /// Center of a cell in world coordinates (meters, origin at the grid corner).
    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        let (x, y) = self.coords(index);
        ((x as f64 + 0.5) * self.cell_size, (y as f64 + 0.5) * self.cell_size)
    }

    /// Cell containing a world position, if inside the grid.
    pub fn cell_at(&self, px: f64, py: f64) -> Option<(usize, usize)> {
        if !(px >= 0.0 && py >= 0.0) {
            return None;
        }
        let x = (px / self.cell_size).floor() as usize;
        let y = (py / self.cell_size).floor() as usize;
        // positions exactly on the far wall belong to the last cell
        let x = if x == self.width && px <= self.width as f64 * self.cell_size {
            x - 1
        } else {
            x
        };
        let y = if y == self.height && py <= self.height as f64 * self.cell_size {
            y - 1
        } else {
            y
        };
        (x < self.width && y < self.height).then_some((x, y))
    }

    fn same_dims(&self, other: &GridShape) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[derive(Clone, Debug)]
enum Storage {
    Sparse(Vec<(u32, MetaCell)>),
    Dense(Vec<MetaCell>),
}

#[derive(Clone, Debug)]
pub struct BeliefGrid {
    shape: GridShape,
    storage: Storage,
}

impl PartialEq for BeliefGrid {
    /// Bit-level equality of every cell; storage layout is irrelevant.
    fn eq(&self, other: &Self) -> bool {
        if !self.shape.same_dims(&other.shape) {
            return false;
        }
        let mut a = self.observed();
        let mut b = other.observed();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return true,
                (Some((ia, ca)), Some((ib, cb))) => {
                    if ia != ib || !ca.bits_eq(&cb) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
    }
}

pub struct Observed<'a> {
    inner: ObservedInner<'a>,
}

enum ObservedInner<'a> {
    Sparse(std::slice::Iter<'a, (u32, MetaCell)>),
    Dense(std::iter::Enumerate<std::slice::Iter<'a, MetaCell>>),
}

impl Iterator for Observed<'_> {
    type Item = (usize, MetaCell);

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            ObservedInner::Sparse(it) => it.next().map(|&(i, c)| (i as usize, c)),
            ObservedInner::Dense(it) => it.find(|(_, c)| c.is_observed()).map(|(i, c)| (i, *c)),
        }
    }
}

impl BeliefGrid {
    /// A grid with every cell unobserved.
    pub fn new(shape: GridShape) -> Self {
        Self {
            shape,
            storage: Storage::Sparse(Vec::new()),
        }
    }

    /// Builds a grid from `(index, cell)` pairs; later duplicates win and
    /// unobserved cells are skipped.
    pub fn from_cells(shape: GridShape, cells: impl IntoIterator<Item = (usize, MetaCell)>) -> Self {
        let mut list: Vec<(u32, MetaCell)> = cells
            .into_iter()
            .map(|(i, c)| {
                assert!(i < shape.cell_count(), "cell index {i} out of range");
                (i as u32, c)
            })
            .collect();
        list.sort_by_key(|&(i, _)| i);
        // keep the last occurrence of each index
        let mut dedup: Vec<(u32, MetaCell)> = Vec::with_capacity(list.len());
        for (i, c) in list {
            match dedup.last_mut() {
                Some(last) if last.0 == i => last.1 = c,
                _ => dedup.push((i, c)),
            }
        }
        dedup.retain(|(_, c)| c.is_observed());
        let mut grid = Self {
            shape,
            storage: Storage::Sparse(dedup),
        };
        grid.maybe_densify();
        grid
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn get(&self, x: usize, y: usize) -> MetaCell {
        self.get_index(self.shape.index(x, y))
    }

    pub fn get_index(&self, index: usize) -> MetaCell {
        match &self.storage {
            Storage::Sparse(list) => match list.binary_search_by_key(&(index as u32), |&(i, _)| i) {
                Ok(pos) => list[pos].1,
                Err(_) => MetaCell::UNOBSERVED,
            },
            Storage::Dense(cells) => cells[index],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, cell: MetaCell) {
        let index = self.shape.index(x, y);
        self.set_index(index, cell);
    }

    pub fn set_index(&mut self, index: usize, cell: MetaCell) {
        assert!(index < self.shape.cell_count());
        match &mut self.storage {
            Storage::Sparse(list) => {
                match list.binary_search_by_key(&(index as u32), |&(i, _)| i) {
                    Ok(pos) if cell.is_observed() => list[pos].1 = cell,
                    Ok(pos) => {
                        list.remove(pos);
                    }
                    Err(pos) if cell.is_observed() => list.insert(pos, (index as u32, cell)),
                    Err(_) => {}
                }
                self.maybe_densify();
            }
            Storage::Dense(cells) => cells[index] = if cell.is_observed() { cell } else { MetaCell::UNOBSERVED },
        }
    }

    /// Observed cells in ascending index order.
    pub fn observed(&self) -> Observed<'_> {
        Observed {
            inner: match &self.storage {
                Storage::Sparse(list) => ObservedInner::Sparse(list.iter()),
                Storage::Dense(cells) => ObservedInner::Dense(cells.iter().enumerate()),
            },
        }
    }

    pub fn observed_count(&self) -> usize {
        match &self.storage {
            Storage::Sparse(list) => list.len(),
            Storage::Dense(cells) => cells.iter().filter(|c| c.is_observed()).count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.observed().next().is_none()
    }

    /// Total data held by the grid: the sum of all resolutions.
    pub fn data_amount(&self) -> f64 {
        self.observed().map(|(_, c)| c.resolution).sum()
    }

    fn check_shape(&self, other: &BeliefGrid) -> Result<(), BeliefError> {
        if self.shape.same_dims(&other.shape) {
            Ok(())
        } else {
            Err(BeliefError::ShapeMismatch {
                left: (self.shape.width, self.shape.height),
                right: (other.shape.width, other.shape.height),
            })
        }
    }

    fn maybe_densify(&mut self) {
        let limit = self.shape.cell_count() / DENSE_DIVISOR;
        if let Storage::Sparse(list) = &self.storage {
            if list.len() > limit {
                let mut cells = vec![MetaCell::UNOBSERVED; self.shape.cell_count()];
                for &(i, c) in list {
                    cells[i as usize] = c;
                }
                self.storage = Storage::Dense(cells);
            }
        }
    }

    /// In-place `self <- self + other`. `on_change(index, old, new)` fires for
    /// every cell that `other` replaces.
    pub fn merge_with(
        &mut self,
        other: &BeliefGrid,
        policy: AggregationPolicy,
        now: f64,
        mut on_change: impl FnMut(usize, MetaCell, MetaCell),
    ) -> Result<(), BeliefError> {
        self.check_shape(other)?;
        match &mut self.storage {
            Storage::Dense(cells) => {
                for (i, cell) in other.observed() {
                    let current = cells[i];
                    if policy.second_wins(&current, &cell, now) {
                        on_change(i, current, cell);
                        cells[i] = cell;
                    }
                }
            }
            Storage::Sparse(list) => {
                let mut merged = Vec::with_capacity(list.len() + other.observed_count());
                let mut mine = list.iter().peekable();
                for (i, cell) in other.observed() {
                    while let Some(&&(j, c)) = mine.peek() {
                        if (j as usize) < i {
                            merged.push((j, c));
                            mine.next();
                        } else {
                            break;
                        }
                    }
                    let current = match mine.peek() {
                        Some(&&(j, c)) if j as usize == i => {
                            mine.next();
                            c
                        }
                        _ => MetaCell::UNOBSERVED,
                    };
                    if policy.second_wins(&current, &cell, now) {
                        on_change(i, current, cell);
                        merged.push((i as u32, cell));
                    } else {
                        merged.push((i as u32, current));
                    }
                }
                merged.extend(mine.copied());
                merged.retain(|(_, c)| c.is_observed());
                *list = merged;
                self.maybe_densify();
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &BeliefGrid, policy: AggregationPolicy, now: f64) -> Result<(), BeliefError> {
        self.merge_with(other, policy, now, |_, _, _| {})
    }

    /// Divides every resolution by `factor` and replaces each cell's fire value
    /// with the mean over its footprint window in this grid.
    pub fn compress(&self, factor: f64) -> Result<BeliefGrid, BeliefError> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(BeliefError::InvalidCompression(factor));
        }
        if factor == 1.0 {
            return Ok(self.clone());
        }
        let shape = self.shape;
        let mut out: Vec<(u32, MetaCell)> = Vec::with_capacity(self.observed_count());
        for (i, cell) in self.observed() {
            let resolution = cell.resolution / factor;
            let side = footprint_side(resolution);
            let fire = if side == 1 {
                cell.fire
            } else {
                let (x, y) = shape.coords(i);
                self.window_mean(x, y, side)
            };
            out.push((
                i as u32,
                MetaCell {
                    resolution,
                    obs_time: cell.obs_time,
                    fire,
                },
            ));
        }
        let mut grid = BeliefGrid {
            shape,
            storage: Storage::Sparse(out),
        };
        grid.maybe_densify();
        Ok(grid)
    }

    /// Mean fire over observed cells in the `side`-wide window around (x, y),
    /// summed in row-major order.
    fn window_mean(&self, x: usize, y: usize, side: usize) -> f64 {
        let w = self.shape.width;
        let h = self.shape.height;
        let lo = (side - 1) / 2;
        let hi = side / 2;
        let x0 = x.saturating_sub(lo);
        let x1 = (x + hi).min(w - 1);
        let y0 = y.saturating_sub(lo);
        let y1 = (y + hi).min(h - 1);
        let mut sum = 0.0;
        let mut count = 0usize;
        match &self.storage {
            Storage::Dense(cells) => {
                for wy in y0..=y1 {
                    for c in &cells[wy * w + x0..=wy * w + x1] {
                        if c.is_observed() {
                            sum += c.fire;
                            count += 1;
                        }
                    }
                }
            }
            Storage::Sparse(list) => {
                for wy in y0..=y1 {
                    let start = (wy * w + x0) as u32;
                    let end = (wy * w + x1) as u32;
                    let from = list.partition_point(|&(i, _)| i < start);
                    for &(i, c) in &list[from..] {
                        if i > end {
                            break;
                        }
                        sum += c.fire;
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// `self - other`: drops every cell where aggregating `other` first would
    /// keep `other`'s cell.
    pub fn subtract(&self, other: &BeliefGrid, policy: AggregationPolicy, now: f64) -> Result<BeliefGrid, BeliefError> {
        self.check_shape(other)?;
        let kept: Vec<(u32, MetaCell)> = self
            .observed()
            .filter(|(i, cell)| policy.second_wins(&other.get_index(*i), cell, now))
            .map(|(i, c)| (i as u32, c))
            .collect();
        let mut grid = BeliefGrid {
            shape: self.shape,
            storage: Storage::Sparse(kept),
        };
        grid.maybe_densify();
        Ok(grid)
    }

    /// Cells of `self` that are not bit-identical in `earlier`.
    pub fn changes_from(&self, earlier: &BeliefGrid) -> Result<BeliefGrid, BeliefError> {
        self.check_shape(earlier)?;
        let kept: Vec<(u32, MetaCell)> = self
            .observed()
            .filter(|(i, cell)| !earlier.get_index(*i).bits_eq(cell))
            .map(|(i, c)| (i as u32, c))
            .collect();
        let mut grid = BeliefGrid {
            shape: self.shape,
            storage: Storage::Sparse(kept),
        };
        grid.maybe_densify();
        Ok(grid)
    }

    /// Dense CSV snapshot with header `x,y,resolution,obs_time,fire`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), BeliefError> {
        writeln!(out, "x,y,resolution,obs_time,fire")?;
        for y in 0..self.shape.height {
            for x in 0..self.shape.width {
                let c = self.get(x, y);
                writeln!(out, "{x},{y},{},{},{}", c.resolution, c.obs_time, c.fire)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(shape: GridShape, input: R) -> Result<BeliefGrid, BeliefError> {
        let mut cells = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 5 {
                return Err(BeliefError::Malformed(format!("line {}: expected 5 fields", n + 1)));
            }
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| BeliefError::Malformed(format!("line {}: {e}", n + 1)))
            };
            let parse_f64 = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| BeliefError::Malformed(format!("line {}: {e}", n + 1)))
            };
            let (x, y) = (parse_usize(fields[0])?, parse_usize(fields[1])?);
            if x >= shape.width || y >= shape.height {
                return Err(BeliefError::Malformed(format!("line {}: cell out of range", n + 1)));
            }
            let cell = MetaCell::new(parse_f64(fields[2])?, parse_f64(fields[3])?, parse_f64(fields[4])?);
            cells.push((shape.index(x, y), cell));
        }
        Ok(BeliefGrid::from_cells(shape, cells))
    }

    /// Row-major little-endian `(resolution, obs_time, fire)` f64 triples.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), BeliefError> {
        for i in 0..self.shape.cell_count() {
            let c = self.get_index(i);
            out.write_all(&c.resolution.to_le_bytes())?;
            out.write_all(&c.obs_time.to_le_bytes())?;
            out.write_all(&c.fire.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(shape: GridShape, mut input: R) -> Result<BeliefGrid, BeliefError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let expected = shape.cell_count() * 24;
        if bytes.len() != expected {
            return Err(BeliefError::Malformed(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let f = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
        let cells = (0..shape.cell_count()).map(|i| {
            let base = i * 24;
            (i, MetaCell::new(f(base), f(base + 8), f(base + 16)))
        });
        Ok(BeliefGrid::from_cells(shape, cells))
    }
}

/// Side length, in cells, of the square averaging window for a resolution.
pub fn footprint_side(resolution: f64) -> usize {
    if !(resolution > 0.0) {
        return 1;
    }
    let side = (1.0 / resolution).sqrt().round();
    if side < 1.0 {
        1
    } else {
        side as usize
    }
}

/// `a + b`: cell-wise [`aggregate_cell`] with `a` as first argument.
pub fn aggregate(
    a: &BeliefGrid,
    b: &BeliefGrid,
    policy: AggregationPolicy,
    now: f64,
) -> Result<BeliefGrid, BeliefError> {
    let mut out = a.clone();
    out.merge(b, policy, now)?;
    Ok(out)
}

pub fn compress(b: &BeliefGrid, factor: f64) -> Result<BeliefGrid, BeliefError> {
    b.compress(factor)
}

/// `b_j - b_i`.
pub fn subtract(
    b_j: &BeliefGrid,
    b_i: &BeliefGrid,
    policy: AggregationPolicy,
    now: f64,
) -> Result<BeliefGrid, BeliefError> {
    b_j.subtract(b_i, policy, now)
}

pub fn data_amount(b: &BeliefGrid) -> f64 {
    b.data_amount()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(w: usize, h: usize) -> GridShape {
        GridShape::new(w, h, 25.0)
    }

    fn at(now: f64, r: f64, age: f64, fire: f64) -> MetaCell {
        MetaCell::new(r, now - age, fire)
    }

    #[test]
    fn younger_cell_wins_under_age_priority() {
        let now = 10.0;
        let a = at(now, 0.5, 3.0, 0.2);
        let b = at(now, 1.0, 5.0, 0.9);
        assert_eq!(aggregate_cell(a, b, AggregationPolicy::AgePriority, now), a);
    }

    #[test]
    fn equal_age_falls_back_to_resolution() {
        let now = 10.0;
        let a = at(now, 0.5, 3.0, 0.0);
        let b = at(now, 1.0, 3.0, 0.0);
        assert_eq!(aggregate_cell(a, b, AggregationPolicy::AgePriority, now), b);
    }

    #[test]
    fn unobserved_loses_under_every_policy() {
        let b = MetaCell::new(0.01, 1.0, 0.3);
        for policy in [
            AggregationPolicy::AgePriority,
            AggregationPolicy::ResolutionPriority,
            AggregationPolicy::MetaScore { score_weight: 1.0 },
        ] {
            assert_eq!(aggregate_cell(MetaCell::UNOBSERVED, b, policy, 100.0), b);
            assert_eq!(aggregate_cell(b, MetaCell::UNOBSERVED, policy, 100.0), b);
        }
    }

    #[test]
    fn meta_score_prefers_higher_score() {
        // s = 1 + 1/1 = 2.0 versus 0.5 + 1/1 = 1.5
        let a = at(0.0, 1.0, 0.0, 0.0);
        let b = at(0.0, 0.5, 0.0, 0.0);
        let policy = AggregationPolicy::MetaScore { score_weight: 1.0 };
        assert_eq!(aggregate_cell(a, b, policy, 0.0), a);
        assert_eq!(aggregate_cell(b, a, policy, 0.0), a);
    }

    #[test]
    fn resolution_priority_breaks_ties_by_age() {
        let now = 5.0;
        let a = at(now, 0.5, 3.0, 0.0);
        let b = at(now, 0.5, 1.0, 0.0);
        let c = at(now, 1.0, 9.0, 0.0);
        let p = AggregationPolicy::ResolutionPriority;
        assert_eq!(aggregate_cell(a, b, p, now), b);
        assert_eq!(aggregate_cell(b, c, p, now), c);
        assert_eq!(aggregate_cell(a, a, p, now), a);
    }

    #[test]
    fn meta_score_requires_positive_weight() {
        assert!(AggregationPolicy::MetaScore { score_weight: 0.0 }.validate().is_err());
        assert!(AggregationPolicy::MetaScore { score_weight: 2.0 }.validate().is_ok());
    }

    #[test]
    fn empty_grid_is_identity() {
        let s = shape(4, 4);
        let mut b = BeliefGrid::new(s);
        b.set(1, 2, MetaCell::new(1.0, 3.0, 1.0));
        let out = aggregate(&b, &BeliefGrid::new(s), AggregationPolicy::AgePriority, 5.0).unwrap();
        assert_eq!(out, b);
        let out = aggregate(&BeliefGrid::new(s), &b, AggregationPolicy::AgePriority, 5.0).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = BeliefGrid::new(shape(4, 4));
        let b = BeliefGrid::new(shape(4, 5));
        assert!(matches!(
            aggregate(&a, &b, AggregationPolicy::AgePriority, 0.0),
            Err(BeliefError::ShapeMismatch { .. })
        ));
        assert!(subtract(&a, &b, AggregationPolicy::AgePriority, 0.0).is_err());
    }

    #[test]
    fn compress_by_one_is_identity() {
        let s = shape(6, 6);
        let cells = (0..36).map(|i| (i, MetaCell::new(0.25, i as f64, (i % 3) as f64 / 2.0)));
        let b = BeliefGrid::from_cells(s, cells);
        assert_eq!(compress(&b, 1.0).unwrap(), b);
    }

    #[test]
    fn compress_rejects_factor_below_one() {
        let b = BeliefGrid::new(shape(2, 2));
        assert!(matches!(compress(&b, 0.5), Err(BeliefError::InvalidCompression(_))));
        assert!(compress(&b, f64::NAN).is_err());
    }

    #[test]
    fn footprint_side_matches_hand_values() {
        // round(sqrt(1/r))
        assert_eq!(footprint_side(1.0), 1);
        assert_eq!(footprint_side(0.5), 1); // sqrt 2 = 1.414
        assert_eq!(footprint_side(0.25), 2);
        assert_eq!(footprint_side(1.0 / 3.0), 2); // 1.732
        assert_eq!(footprint_side(1.0 / 9.0), 3);
        assert_eq!(footprint_side(1.0 / 16.0), 4);
    }

    #[test]
    fn compress_by_four_averages_two_by_two_window() {
        let s = shape(4, 4);
        let mut b = BeliefGrid::new(s);
        b.set(1, 1, MetaCell::new(1.0, 0.0, 1.0));
        b.set(2, 1, MetaCell::new(1.0, 0.0, 0.0));
        b.set(1, 2, MetaCell::new(1.0, 0.0, 0.0));
        // (2,2) unobserved and excluded from the mean
        let c = compress(&b, 4.0).unwrap();
        let cell = c.get(1, 1);
        assert_eq!(cell.resolution, 0.25);
        assert_eq!(cell.obs_time, 0.0);
        // window of side 2 at (1,1) covers x,y in 1..=2
        assert_eq!(cell.fire, 1.0 / 3.0);
        assert!(!c.get(2, 2).is_observed());
    }

    #[test]
    fn compress_halves_data() {
        let s = shape(5, 5);
        let b = BeliefGrid::from_cells(s, (0..25).step_by(2).map(|i| (i, MetaCell::new(1.0, 1.0, 0.0))));
        assert_eq!(compress(&b, 2.0).unwrap().data_amount(), b.data_amount() / 2.0);
    }

    #[test]
    fn data_amount_sums_resolutions() {
        let s = shape(3, 3);
        assert_eq!(BeliefGrid::new(s).data_amount(), 0.0);
        let b = BeliefGrid::from_cells(s, (0..3).map(|i| (i, MetaCell::new(1.0, 0.0, 0.0))));
        assert_eq!(b.data_amount(), 3.0);
    }

    #[test]
    fn subtract_self_is_empty_and_subtract_empty_is_identity() {
        let s = shape(4, 4);
        let b = BeliefGrid::from_cells(s, (0..10).map(|i| (i, MetaCell::new(0.5, i as f64, 0.0))));
        assert!(subtract(&b, &b, AggregationPolicy::AgePriority, 20.0)
            .unwrap()
            .is_empty());
        assert_eq!(
            subtract(&b, &BeliefGrid::new(s), AggregationPolicy::AgePriority, 20.0).unwrap(),
            b
        );
    }

    #[test]
    fn cancellation_holds_on_small_grid() {
        let s = shape(3, 3);
        let b = BeliefGrid::from_cells(s, (0..9).map(|i| (i, MetaCell::new(1.0, i as f64, (i % 2) as f64))));
        for c in [1.0, 2.0, 3.0, 7.5] {
            let cb = compress(&b, c).unwrap();
            assert_eq!(aggregate(&b, &cb, AggregationPolicy::AgePriority, 10.0).unwrap(), b);
        }
    }

    #[test]
    fn dense_and_sparse_backings_agree() {
        let s = shape(8, 8);
        let cells: Vec<_> = (0..64)
            .map(|i| (i, MetaCell::new(1.0, (i % 7) as f64, (i % 2) as f64)))
            .collect();
        let dense = BeliefGrid::from_cells(s, cells.clone());
        assert!(matches!(dense.storage, Storage::Dense(_)));
        let few: Vec<_> = cells.iter().copied().filter(|(i, _)| i % 9 == 0).collect();
        let sparse = BeliefGrid::from_cells(s, few.clone());
        assert!(matches!(sparse.storage, Storage::Sparse(_)));

        let mut d2 = BeliefGrid::from_cells(s, few);
        d2.maybe_densify();
        let c_dense = compress(&dense, 9.0).unwrap();
        // compress through a sparse copy of the same content
        let mut sparse_copy = BeliefGrid {
            shape: s,
            storage: Storage::Sparse(dense.observed().map(|(i, c)| (i as u32, c)).collect()),
        };
        assert_eq!(sparse_copy, dense);
        assert_eq!(compress(&sparse_copy, 9.0).unwrap(), c_dense);
        sparse_copy
            .merge(&sparse, AggregationPolicy::AgePriority, 10.0)
            .unwrap();
        let mut dense_copy = dense.clone();
        dense_copy.merge(&sparse, AggregationPolicy::AgePriority, 10.0).unwrap();
        assert_eq!(sparse_copy, dense_copy);
    }

    #[test]
    fn set_and_get_round_trip_through_unobserved() {
        let mut b = BeliefGrid::new(shape(3, 2));
        b.set(2, 1, MetaCell::new(1.0, 4.0, 1.0));
        assert_eq!(b.get(2, 1).obs_time, 4.0);
        b.set(2, 1, MetaCell::UNOBSERVED);
        assert!(b.is_empty());
    }

    #[test]
    fn csv_and_binary_snapshots_round_trip() {
        let s = shape(3, 2);
        let b = BeliefGrid::from_cells(
            s,
            [(1, MetaCell::new(0.5, 2.5, 0.25)), (4, MetaCell::new(1.0, 0.0, 1.0))],
        );
        let mut csv = Vec::new();
        b.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.starts_with("x,y,resolution,obs_time,fire\n0,0,0,-inf,0\n"));
        assert_eq!(BeliefGrid::read_csv(s, csv.as_slice()).unwrap(), b);

        let mut bin = Vec::new();
        b.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 6 * 24);
        assert_eq!(&bin[24..32], &0.5f64.to_le_bytes());
        assert_eq!(BeliefGrid::read_binary(s, bin.as_slice()).unwrap(), b);
        assert!(BeliefGrid::read_binary(shape(2, 2), bin.as_slice()).is_err());
    }

    #[test]
    fn cell_lookup_clips_to_grid() {
        let s = shape(4, 4);
        assert_eq!(s.cell_at(0.0, 0.0), Some((0, 0)));
        assert_eq!(s.cell_at(100.0, 100.0), Some((3, 3)));
        assert_eq!(s.cell_at(-1.0, 3.0), None);
        assert_eq!(s.cell_at(101.0, 3.0), None);
        assert_eq!(s.cell_center(5), (37.5, 37.5));
    }
}
