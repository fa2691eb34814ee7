//! Occupancy-grid worlds: floor plans, poses, episodes and geodesic queries.
//!
//! Coordinates are metric with the origin at the south-west corner of the
//! grid, `x` east and `y` north. Cell `(col, row)` covers
//! `[col·s, (col+1)·s) × [row·s, (row+1)·s)` for cell size `s`.

mod episode;
mod gen;
mod geodesic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, WorldError};

pub use episode::{build_split, make_episode, sample_episodes, target_field, Episode, EpisodeSet, EPISODE_VERSION, MIN_START_DISTANCE};
pub use gen::{generate_floorplan, RoomType, WorldSpec};
pub use geodesic::{geodesic_distance, DistanceField};
pub(crate) use geodesic::for_each_move;

pub const FLOORPLAN_VERSION: u32 = 1;

/// Continuous world position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Agent pose. Heading is in degrees, 0 along +x, counter-clockwise positive,
/// always normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_heading(heading) }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn with_heading(&self, heading: f64) -> Self {
        Self::new(self.x, self.y, heading)
    }

    pub fn rotated(&self, delta: f64) -> Self {
        self.with_heading(self.heading + delta)
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Signed angle difference `to - from` wrapped into `(-180, 180]`.
pub fn angle_diff(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Free,
    Occupied,
}

/// A semantic object placed in the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    pub category: String,
    pub footprint: Vec<Cell>,
    /// Footprint centroid.
    pub anchor: Point,
}

/// Occupancy grid plus object instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FloorPlanDoc", into = "FloorPlanDoc")]
pub struct FloorPlan {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<CellState>,
    objects: Vec<ObjectInstance>,
    rng_seed: u64,
    // index into `objects` for every cell covered by a footprint
    object_index: Vec<Option<u32>>,
}

impl FloorPlan {
    /// Builds a plan from raw parts, validating object ids and footprints.
    pub fn from_parts(
        width: usize,
        height: usize,
        cell_size: f64,
        cells: Vec<CellState>,
        objects: Vec<ObjectInstance>,
        rng_seed: u64,
    ) -> Result<Self, WorldError> {
        if width < 3 || height < 3 || cells.len() != width * height {
            return Err(WorldError::SpecInfeasible(format!(
                "grid {width}x{height} does not match {} cells",
                cells.len()
            )));
        }
        if !(cell_size > 0.0) {
            return Err(WorldError::SpecInfeasible(format!("cell size {cell_size}")));
        }
        let mut object_index = vec![None; width * height];
        let mut ids = BTreeSet::new();
        for (i, obj) in objects.iter().enumerate() {
            if obj.category.is_empty() {
                return Err(WorldError::SpecInfeasible(format!("object {} has no category", obj.id)));
            }
            if !ids.insert(obj.id) {
                return Err(WorldError::SpecInfeasible(format!("duplicate object id {}", obj.id)));
            }
            for c in &obj.footprint {
                if c.col >= width || c.row >= height {
                    return Err(WorldError::SpecInfeasible(format!(
                        "object {} footprint outside grid",
                        obj.id
                    )));
                }
                object_index[c.row * width + c.col] = Some(i as u32);
            }
        }
        Ok(Self { width, height, cell_size, cells, objects, rng_seed, object_index })
    }

    /// Parses an ASCII map. `rows[r]` is grid row `r` (south first). `#` is a
    /// wall, `.` is free, and any character listed in `legend` is an occupied
    /// object cell; each legend character forms one instance.
    pub fn from_ascii(
        rows: &[&str],
        cell_size: f64,
        legend: &[(char, &str)],
    ) -> Result<Self, WorldError> {
        let height = rows.len();
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
        let mut cells = Vec::with_capacity(width * height);
        let mut footprints: Vec<Vec<Cell>> = vec![Vec::new(); legend.len()];
        for (row, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(WorldError::SpecInfeasible(format!("ragged row {row}")));
            }
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '.' => cells.push(CellState::Free),
                    '#' => cells.push(CellState::Occupied),
                    other => {
                        let Some(k) = legend.iter().position(|(c, _)| *c == other) else {
                            return Err(WorldError::SpecInfeasible(format!("unknown glyph {other:?}")));
                        };
                        footprints[k].push(Cell::new(col, row));
                        cells.push(CellState::Occupied);
                    }
                }
            }
        }
        let objects = legend
            .iter()
            .zip(footprints)
            .enumerate()
            .filter(|(_, (_, fp))| !fp.is_empty())
            .map(|(k, ((_, cat), fp))| {
                let anchor = footprint_centroid(&fp, cell_size);
                ObjectInstance { id: k as u32, category: (*cat).to_string(), footprint: fp, anchor }
            })
            .collect();
        Self::from_parts(width, height, cell_size, cells, objects, 0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn id(&self) -> String {
        format!("world-{:06}", self.rng_seed)
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_at_index(&self, idx: usize) -> Cell {
        Cell::new(idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn state(&self, cell: Cell) -> CellState {
        self.cells[self.index(cell)]
    }

    #[inline]
    pub fn is_free(&self, cell: Cell) -> bool {
        self.state(cell) == CellState::Free
    }

    /// Signed-coordinate variant; anything outside the grid is occupied.
    #[inline]
    pub fn is_free_signed(&self, col: i64, row: i64) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.cells[row as usize * self.width + col as usize] == CellState::Free
    }

    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let col = (p.x / self.cell_size).floor() as usize;
        let row = (p.y / self.cell_size).floor() as usize;
        (col < self.width && row < self.height).then_some(Cell::new(col, row))
    }

    pub fn center(&self, cell: Cell) -> Point {
        Point::new((cell.col as f64 + 0.5) * self.cell_size, (cell.row as f64 + 0.5) * self.cell_size)
    }

    pub fn is_free_point(&self, p: Point) -> bool {
        self.cell_of(p).is_some_and(|c| self.is_free(c))
    }

    pub fn object_at(&self, cell: Cell) -> Option<&ObjectInstance> {
        self.object_index[self.index(cell)].map(|i| &self.objects[i as usize])
    }

    pub fn instances<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.objects.iter().filter(move |o| o.category == category)
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.category.as_str()).collect()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cells.len()).filter(|&i| self.cells[i] == CellState::Free).map(|i| self.cell_at_index(i))
    }

    /// Free cells 8-adjacent to an object's footprint: where an agent can stand
    /// next to it.
    pub fn approach_cells(&self, obj: &ObjectInstance) -> Vec<Cell> {
        let mut out = BTreeSet::new();
        for c in &obj.footprint {
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                    if self.is_free_signed(col, row) {
                        out.insert(Cell::new(col as usize, row as usize));
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Nearest free cell center within `radius` of `p` (the cell containing
    /// `p` wins if free). Ties break by row then column.
    pub fn snap_to_free(&self, p: Point, radius: f64) -> Result<Point, WorldError> {
        if self.is_free_point(p) {
            return Ok(p);
        }
        let s = self.cell_size;
        let reach = (radius / s).ceil() as i64 + 1;
        let (pc, pr) = ((p.x / s).floor() as i64, (p.y / s).floor() as i64);
        let mut best: Option<(f64, Cell)> = None;
        for row in pr - reach..=pr + reach {
            for col in pc - reach..=pc + reach {
                if !self.is_free_signed(col, row) {
                    continue;
                }
                let cell = Cell::new(col as usize, row as usize);
                let d = self.center(cell).distance(&p);
                if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, cell));
                }
            }
        }
        best.map(|(_, c)| self.center(c)).ok_or(WorldError::NoFreeCell { x: p.x, y: p.y, radius })
    }

    /// Number of 4-connected components of free cells.
    pub fn free_components(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.cells.len() {
            if seen[start] || self.cells[start] != CellState::Free {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (c, r) = (i % self.width, i / self.width);
                let neighbours = [
                    (c > 0).then(|| i - 1),
                    (c + 1 < self.width).then(|| i + 1),
                    (r > 0).then(|| i - self.width),
                    (r + 1 < self.height).then(|| i + self.width),
                ];
                for j in neighbours.into_iter().flatten() {
                    if !seen[j] && self.cells[j] == CellState::Free {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }

    pub fn boundary_closed(&self) -> bool {
        (0..self.width).all(|c| {
            !self.is_free(Cell::new(c, 0)) && !self.is_free(Cell::new(c, self.height - 1))
        }) && (0..self.height).all(|r| {
            !self.is_free(Cell::new(0, r)) && !self.is_free(Cell::new(self.width - 1, r))
        })
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let doc: FloorPlanDoc = serde_json::from_str(s)?;
        if doc.version != FLOORPLAN_VERSION {
            return Err(Error::Version { kind: "floorplan", found: doc.version, expected: FLOORPLAN_VERSION });
        }
        Ok(FloorPlan::try_from(doc)?)
    }
}

pub(crate) fn footprint_centroid(fp: &[Cell], cell_size: f64) -> Point {
    let n = fp.len().max(1) as f64;
    let (sx, sy) = fp.iter().fold((0.0, 0.0), |(sx, sy), c| {
        (sx + (c.col as f64 + 0.5) * cell_size, sy + (c.row as f64 + 0.5) * cell_size)
    });
    Point::new(sx / n, sy / n)
}

/// On-disk form: rows of `#`/`.` so documents stay diffable.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FloorPlanDoc {
    version: u32,
    seed: u64,
    cell_size: f64,
    width: usize,
    height: usize,
    rows: Vec<String>,
    objects: Vec<ObjectInstance>,
}

impl From<FloorPlan> for FloorPlanDoc {
    fn from(plan: FloorPlan) -> Self {
        let rows = plan
            .cells
            .chunks(plan.width)
            .map(|row| row.iter().map(|c| if *c == CellState::Free { '.' } else { '#' }).collect())
            .collect();
        FloorPlanDoc {
            version: FLOORPLAN_VERSION,
            seed: plan.rng_seed,
            cell_size: plan.cell_size,
            width: plan.width,
            height: plan.height,
            rows,
            objects: plan.objects,
        }
    }
}

impl TryFrom<FloorPlanDoc> for FloorPlan {
    type Error = WorldError;

    fn try_from(doc: FloorPlanDoc) -> Result<Self, WorldError> {
        if doc.rows.len() != doc.height {
            return Err(WorldError::SpecInfeasible(format!(
                "expected {} rows, found {}",
                doc.height,
                doc.rows.len()
            )));
        }
        let mut cells = Vec::with_capacity(doc.width * doc.height);
        for row in &doc.rows {
            if row.len() != doc.width {
                return Err(WorldError::SpecInfeasible("ragged row".into()));
            }
            cells.extend(row.bytes().map(|b| if b == b'.' { CellState::Free } else { CellState::Occupied }));
        }
        FloorPlan::from_parts(doc.width, doc.height, doc.cell_size, cells, doc.objects, doc.seed)
    }
}
