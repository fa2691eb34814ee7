//! Procedural floor plans: binary space partition into rooms, one door per
//! partition wall, furniture placed against room walls.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{footprint_centroid, Cell, CellState, FloorPlan, ObjectInstance};
use crate::error::WorldError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomType {
    pub name: String,
    /// Categories that may be placed in this room type.
    pub palette: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Inclusive range of leaf rooms.
    pub rooms: (usize, usize),
    /// Smallest room side, in cells, including neither wall.
    pub min_room_side: usize,
    /// Inclusive range of door widths, in cells.
    pub door_width: (usize, usize),
    pub objects_per_room: (usize, usize),
    pub room_types: Vec<RoomType>,
    /// Footprint size in cells (along the wall, away from the wall).
    pub sizes: Vec<(String, (usize, usize))>,
    pub max_retries: usize,
}

fn room(name: &str, palette: &[&str]) -> RoomType {
    RoomType { name: name.into(), palette: palette.iter().map(|s| s.to_string()).collect() }
}

impl Default for WorldSpec {
    fn default() -> Self {
        let sizes = [
            ("couch", (6, 3)),
            ("tv", (4, 1)),
            ("armchair", (3, 3)),
            ("plant", (2, 2)),
            ("bookshelf", (5, 2)),
            ("bed", (6, 8)),
            ("wardrobe", (5, 2)),
            ("nightstand", (2, 2)),
            ("fridge", (3, 3)),
            ("oven", (3, 3)),
            ("table", (5, 3)),
            ("chair", (2, 2)),
            ("sink", (3, 2)),
            ("toilet", (2, 3)),
            ("bathtub", (7, 3)),
            ("desk", (5, 3)),
        ];
        WorldSpec {
            width: 64,
            height: 64,
            cell_size: 0.25,
            rooms: (5, 8),
            min_room_side: 10,
            door_width: (4, 5),
            objects_per_room: (2, 3),
            room_types: vec![
                room("living_room", &["couch", "tv", "armchair", "plant", "bookshelf"]),
                room("bedroom", &["bed", "wardrobe", "nightstand", "plant"]),
                room("kitchen", &["fridge", "oven", "table", "chair", "sink"]),
                room("bathroom", &["toilet", "bathtub", "sink"]),
                room("office", &["desk", "chair", "bookshelf", "plant"]),
            ],
            sizes: sizes.iter().map(|(n, s)| (n.to_string(), *s)).collect(),
            max_retries: 64,
        }
    }
}

impl WorldSpec {
    /// Every category that can appear, sorted and deduplicated.
    pub fn palette(&self) -> Vec<String> {
        let mut all: Vec<String> = self.room_types.iter().flat_map(|r| r.palette.iter().cloned()).collect();
        all.sort();
        all.dedup();
        all
    }

    fn size_of(&self, category: &str) -> (usize, usize) {
        self.sizes.iter().find(|(n, _)| n == category).map(|(_, s)| *s).unwrap_or((2, 2))
    }

    fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::SpecInfeasible(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return bad("grid must be at least 8x8");
        }
        if !(self.cell_size > 0.0) {
            return bad("cell size must be positive");
        }
        if self.rooms.0 == 0 || self.rooms.0 > self.rooms.1 {
            return bad("room range must be non-empty and start at 1 or more");
        }
        if self.door_width.0 < 2 || self.door_width.0 > self.door_width.1 {
            return bad("doors must be at least 2 cells wide");
        }
        if self.objects_per_room.0 > self.objects_per_room.1 {
            return bad("empty object range");
        }
        if self.min_room_side < self.door_width.1 + 2 {
            return bad("rooms too small for doors");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    // inclusive interior bounds
    c0: usize,
    r0: usize,
    c1: usize,
    r1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.c1 - self.c0 + 1
    }
    fn h(&self) -> usize {
        self.r1 - self.r0 + 1
    }
}

struct Canvas {
    w: usize,
    h: usize,
    cells: Vec<CellState>,
    // door cells and their clearance margin
    reserved: Vec<bool>,
    doors: Vec<Cell>,
}

impl Canvas {
    fn idx(&self, c: usize, r: usize) -> usize {
        r * self.w + c
    }
    fn set(&mut self, c: usize, r: usize, s: CellState) {
        let i = self.idx(c, r);
        self.cells[i] = s;
    }
    fn free(&self, c: usize, r: usize) -> bool {
        self.cells[self.idx(c, r)] == CellState::Free
    }
    fn is_door(&self, c: usize, r: usize) -> bool {
        self.doors.contains(&Cell::new(c, r))
    }
}

/// Generates a floor plan; a pure function of `(seed, spec)`.
pub fn generate_floorplan(seed: u64, spec: &WorldSpec) -> Result<FloorPlan, WorldError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..spec.max_retries.max(1) {
        if let Some(plan) = try_generate(&mut rng, seed, spec)? {
            return Ok(plan);
        }
    }
    Err(WorldError::SpecInfeasible(format!(
        "could not partition a {}x{} grid into {:?} rooms after {} attempts",
        spec.width, spec.height, spec.rooms, spec.max_retries
    )))
}

fn try_generate(rng: &mut ChaCha8Rng, seed: u64, spec: &WorldSpec) -> Result<Option<FloorPlan>, WorldError> {
    let (w, h) = (spec.width, spec.height);
    let mut canvas = Canvas {
        w,
        h,
        cells: vec![CellState::Free; w * h],
        reserved: vec![false; w * h],
        doors: Vec::new(),
    };
    for c in 0..w {
        canvas.set(c, 0, CellState::Occupied);
        canvas.set(c, h - 1, CellState::Occupied);
    }
    for r in 0..h {
        canvas.set(0, r, CellState::Occupied);
        canvas.set(w - 1, r, CellState::Occupied);
    }

    let target_rooms = rng.random_range(spec.rooms.0..=spec.rooms.1);
    let mut rooms = vec![Rect { c0: 1, r0: 1, c1: w - 2, r1: h - 2 }];
    let min = spec.min_room_side;
    while rooms.len() < target_rooms {
        // split the largest splittable room
        let mut order: Vec<usize> = (0..rooms.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse((rooms[i].w() * rooms[i].h(), i)));
        let mut split = None;
        for i in order {
            if let Some(parts) = split_room(rng, &mut canvas, rooms[i], spec) {
                split = Some((i, parts));
                break;
            }
        }
        let Some((i, (a, b))) = split else {
            return Ok(None);
        };
        rooms.swap_remove(i);
        rooms.push(a);
        rooms.push(b);
        if rooms.iter().any(|r| r.w() < min || r.h() < min) {
            return Ok(None);
        }
    }
    rooms.sort_by_key(|r| (r.r0, r.c0));

    // door clearance: keep a margin around each door cell free of furniture
    for d in canvas.doors.clone() {
        for dr in -2i64..=2 {
            for dc in -2i64..=2 {
                let (c, r) = (d.col as i64 + dc, d.row as i64 + dr);
                if c >= 0 && r >= 0 && (c as usize) < w && (r as usize) < h {
                    let i = canvas.idx(c as usize, r as usize);
                    canvas.reserved[i] = true;
                }
            }
        }
    }

    // room types: cycle through a shuffled list so small houses stay varied
    let mut types: Vec<usize> = (0..spec.room_types.len()).collect();
    let mut objects = Vec::new();
    for (k, room) in rooms.iter().enumerate() {
        if spec.room_types.is_empty() {
            break;
        }
        if k % types.len() == 0 {
            types.shuffle(rng);
        }
        let rt = &spec.room_types[types[k % types.len()]];
        let mut palette = rt.palette.clone();
        palette.shuffle(rng);
        let count = rng.random_range(spec.objects_per_room.0..=spec.objects_per_room.1).min(palette.len());
        for category in palette.into_iter().take(count) {
            let size = spec.size_of(&category);
            for _ in 0..spec.max_retries.max(1) {
                if let Some(fp) = place_object(rng, &mut canvas, room, size) {
                    let anchor = footprint_centroid(&fp, spec.cell_size);
                    objects.push(ObjectInstance { id: objects.len() as u32, category, footprint: fp, anchor });
                    break;
                }
            }
        }
    }

    let plan = FloorPlan::from_parts(w, h, spec.cell_size, canvas.cells, objects, seed)?;
    debug_assert_eq!(plan.free_components(), 1);
    Ok(Some(plan))
}

/// Splits `room` with a one-cell wall along its longer axis and carves a door.
fn split_room(
    rng: &mut ChaCha8Rng,
    canvas: &mut Canvas,
    room: Rect,
    spec: &WorldSpec,
) -> Option<(Rect, Rect)> {
    let min = spec.min_room_side;
    let vertical = if room.w() == room.h() { rng.random_bool(0.5) } else { room.w() > room.h() };
    let (lo, hi, len) = if vertical { (room.c0, room.c1, room.w()) } else { (room.r0, room.r1, room.h()) };
    if len < 2 * min + 1 {
        return None;
    }
    // candidate wall positions that keep both sides at least `min` wide and do
    // not end in front of an existing door
    let candidates: Vec<usize> = (lo + min..=hi - min)
        .filter(|&p| {
            if vertical {
                !canvas.is_door(p, room.r0 - 1) && !canvas.is_door(p, room.r1 + 1)
                    && !(p > 0 && (canvas.is_door(p - 1, room.r0 - 1) || canvas.is_door(p - 1, room.r1 + 1)))
                    && !(canvas.is_door(p + 1, room.r0 - 1) || canvas.is_door(p + 1, room.r1 + 1))
            } else {
                !canvas.is_door(room.c0 - 1, p) && !canvas.is_door(room.c1 + 1, p)
                    && !(p > 0 && (canvas.is_door(room.c0 - 1, p - 1) || canvas.is_door(room.c1 + 1, p - 1)))
                    && !(canvas.is_door(room.c0 - 1, p + 1) || canvas.is_door(room.c1 + 1, p + 1))
            }
        })
        .collect();
    let &pos = candidates.get(rng.random_range(0..candidates.len().max(1)))?;
    let (span_lo, span_hi) = if vertical { (room.r0, room.r1) } else { (room.c0, room.c1) };
    let door_w = rng.random_range(spec.door_width.0..=spec.door_width.1);
    let span = span_hi - span_lo + 1;
    if span < door_w + 2 {
        return None;
    }
    let door_start = rng.random_range(span_lo + 1..=span_hi - door_w);
    for t in span_lo..=span_hi {
        let (c, r) = if vertical { (pos, t) } else { (t, pos) };
        if t >= door_start && t < door_start + door_w {
            canvas.doors.push(Cell::new(c, r));
        } else {
            canvas.set(c, r, CellState::Occupied);
        }
    }
    Some(if vertical {
        (Rect { c1: pos - 1, ..room }, Rect { c0: pos + 1, ..room })
    } else {
        (Rect { r1: pos - 1, ..room }, Rect { r0: pos + 1, ..room })
    })
}

/// Tries one random placement flush against a wall of `room`. The footprint
/// must avoid door clearance, keep a free margin of one cell to other
/// furniture and leave the free space connected.
fn place_object(rng: &mut ChaCha8Rng, canvas: &mut Canvas, room: &Rect, size: (usize, usize)) -> Option<Vec<Cell>> {
    let (along, away) = size;
    let side = rng.random_range(0..4u8);
    let (fw, fh) = if side < 2 { (along, away) } else { (away, along) };
    if fw + 2 > room.w() || fh + 2 > room.h() {
        return None;
    }
    // side 0: south wall, 1: north wall, 2: west wall, 3: east wall
    let (c0, r0) = match side {
        0 => (rng.random_range(room.c0..=room.c1 + 1 - fw), room.r0),
        1 => (rng.random_range(room.c0..=room.c1 + 1 - fw), room.r1 + 1 - fh),
        2 => (room.c0, rng.random_range(room.r0..=room.r1 + 1 - fh)),
        _ => (room.c1 + 1 - fw, rng.random_range(room.r0..=room.r1 + 1 - fh)),
    };
    let footprint: Vec<Cell> =
        (r0..r0 + fh).flat_map(|r| (c0..c0 + fw).map(move |c| Cell::new(c, r))).collect();
    for cell in &footprint {
        if !canvas.free(cell.col, cell.row) || canvas.reserved[canvas.idx(cell.col, cell.row)] {
            return None;
        }
    }
    // one-cell margin to existing furniture (walls are fine)
    for r in r0.saturating_sub(1)..=(r0 + fh).min(canvas.h - 1) {
        for c in c0.saturating_sub(1)..=(c0 + fw).min(canvas.w - 1) {
            let inside = r >= r0 && r < r0 + fh && c >= c0 && c < c0 + fw;
            if !inside && !canvas.free(c, r) && is_furniture(c, r, room) {
                return None;
            }
        }
    }
    let before = free_count_and_components(canvas);
    for cell in &footprint {
        canvas.set(cell.col, cell.row, CellState::Occupied);
    }
    let after = free_count_and_components(canvas);
    if after.1 != 1 || after.0 + footprint.len() != before.0 {
        for cell in &footprint {
            canvas.set(cell.col, cell.row, CellState::Free);
        }
        return None;
    }
    Some(footprint)
}

// Occupied cells strictly inside the room interior can only be furniture.
fn is_furniture(c: usize, r: usize, room: &Rect) -> bool {
    c >= room.c0 && c <= room.c1 && r >= room.r0 && r <= room.r1
}

fn free_count_and_components(canvas: &Canvas) -> (usize, usize) {
    let n = canvas.cells.len();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let (mut count, mut comps) = (0, 0);
    for s in 0..n {
        if seen[s] || canvas.cells[s] != CellState::Free {
            continue;
        }
        comps += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            count += 1;
            let (c, r) = (i % canvas.w, i / canvas.w);
            let ns = [
                (c > 0).then(|| i - 1),
                (c + 1 < canvas.w).then(|| i + 1),
                (r > 0).then(|| i - canvas.w),
                (r + 1 < canvas.h).then(|| i + canvas.w),
            ];
            for j in ns.into_iter().flatten() {
                if !seen[j] && canvas.cells[j] == CellState::Free {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    (count, comps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_plan() {
        let spec = WorldSpec::default();
        let a = generate_floorplan(7, &spec).unwrap();
        let b = generate_floorplan(7, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a, generate_floorplan(8, &spec).unwrap());
    }

    #[test]
    fn plans_satisfy_invariants() {
        let spec = WorldSpec::default();
        for seed in 0..20 {
            let plan = generate_floorplan(seed, &spec).unwrap();
            assert!(plan.boundary_closed(), "seed {seed}");
            assert_eq!(plan.free_components(), 1, "seed {seed}");
            assert!(!plan.objects().is_empty(), "seed {seed}");
            for obj in plan.objects() {
                assert!(obj.footprint.iter().all(|c| !plan.is_free(*c)));
                assert!(!plan.approach_cells(obj).is_empty());
            }
        }
    }

    #[test]
    fn zero_objects_is_allowed() {
        let spec = WorldSpec { objects_per_room: (0, 0), ..WorldSpec::default() };
        let plan = generate_floorplan(3, &spec).unwrap();
        assert!(plan.objects().is_empty());
    }

    #[test]
    fn impossible_room_count_is_infeasible() {
        let spec = WorldSpec { rooms: (40, 40), max_retries: 3, ..WorldSpec::default() };
        assert!(matches!(generate_floorplan(1, &spec), Err(WorldError::SpecInfeasible(_))));
    }
}
