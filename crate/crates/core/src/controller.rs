//! Discrete-action point-goal navigation over an occupancy memory built from
//! the agent's own forward views.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::sensor::{render_view, walk_ray, SensorParams, View};
use crate::world::{angle_diff, Cell, FloorPlan, Point, Pose};

pub const MOVE_STEP: f64 = 0.25;
pub const TURN_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stop,
    MoveAhead,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
}

/// Outcome of a forward move: the new pose, or the first blocking cell.
fn move_ahead(plan: &FloorPlan, pose: &Pose) -> Result<Pose, Option<Cell>> {
    let mut blocked: Option<Option<Cell>> = None;
    walk_ray(pose.position(), pose.heading, plan.cell_size(), MOVE_STEP, |c, r, _| {
        if !plan.is_free_signed(c, r) {
            let inside = c >= 0 && r >= 0 && (c as usize) < plan.width() && (r as usize) < plan.height();
            blocked = Some(inside.then(|| Cell::new(c as usize, r as usize)));
            return true;
        }
        false
    });
    if let Some(cell) = blocked {
        return Err(cell);
    }
    let a = pose.heading.to_radians();
    let next = Pose::new(pose.x + MOVE_STEP * a.cos(), pose.y + MOVE_STEP * a.sin(), pose.heading);
    if plan.is_free_point(next.position()) {
        Ok(next)
    } else {
        Err(plan.cell_of(next.position()))
    }
}

/// Applies one action. A blocked `MoveAhead` leaves the pose unchanged and
/// reports a collision.
pub fn step(plan: &FloorPlan, pose: &Pose, action: Action) -> (Pose, bool) {
    match action {
        Action::MoveAhead => match move_ahead(plan, pose) {
            Ok(next) => (next, false),
            Err(_) => (*pose, true),
        },
        Action::TurnLeft => (pose.rotated(TURN_DEG), false),
        Action::TurnRight => (pose.rotated(-TURN_DEG), false),
        Action::Stop | Action::LookUp | Action::LookDown => (*pose, false),
    }
}

/// Turn toward `target` unless already within half a turn increment of it.
pub fn steer(pose: &Pose, target: Point) -> Action {
    let bearing = (target.y - pose.y).atan2(target.x - pose.x).to_degrees();
    let diff = angle_diff(pose.heading, bearing);
    if diff.abs() <= TURN_DEG / 2.0 + 1e-9 {
        Action::MoveAhead
    } else if diff > 0.0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryCell {
    Unknown,
    SeenFree,
    SeenOccupied,
}

/// Per-episode map accumulated from observed rays.
#[derive(Debug, Clone)]
pub struct OccupancyMemory {
    width: usize,
    height: usize,
    cell_size: f64,
    cells: Vec<MemoryCell>,
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    idx: usize,
}
impl Eq for Entry {}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.idx.cmp(&self.idx))
    }
}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost multiplier for planning through cells never observed.
pub const UNKNOWN_COST: f64 = 1.5;

impl OccupancyMemory {
    pub fn new(plan: &FloorPlan) -> Self {
        Self {
            width: plan.width(),
            height: plan.height(),
            cell_size: plan.cell_size(),
            cells: vec![MemoryCell::Unknown; plan.num_cells()],
        }
    }

    pub fn get(&self, cell: Cell) -> MemoryCell {
        self.cells[cell.row * self.width + cell.col]
    }

    fn set(&mut self, col: i64, row: i64, state: MemoryCell) {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return;
        }
        let i = row as usize * self.width + col as usize;
        // Unknown -> Seen*, and an obstacle is never forgotten
        match (self.cells[i], state) {
            (MemoryCell::Unknown, s) => self.cells[i] = s,
            (MemoryCell::SeenFree, MemoryCell::SeenOccupied) => self.cells[i] = state,
            _ => {}
        }
    }

    /// Marks cells pierced by each ray free and the cell it ends on occupied.
    pub fn update(&mut self, view: &View) {
        let origin = view.pose.position();
        for (j, ray) in view.rays.iter().enumerate() {
            let hit = ray.depth < view.max_range;
            let heading = view.column_heading(j);
            let depth = ray.depth;
            let mut cells = Vec::new();
            walk_ray(origin, heading, self.cell_size, depth, |c, r, t| {
                if t + 1e-9 < depth {
                    cells.push((c, r, MemoryCell::SeenFree));
                    false
                } else {
                    if hit {
                        cells.push((c, r, MemoryCell::SeenOccupied));
                    }
                    true
                }
            });
            for (c, r, s) in cells {
                self.set(c, r, s);
            }
        }
    }

    pub fn mark_occupied(&mut self, cell: Cell) {
        self.set(cell.col as i64, cell.row as i64, MemoryCell::SeenOccupied);
    }

    pub fn count(&self, state: MemoryCell) -> usize {
        self.cells.iter().filter(|c| **c == state).count()
    }

    fn passable(&self, idx: usize) -> bool {
        self.cells[idx] != MemoryCell::SeenOccupied
    }

    /// Dijkstra from `source` over cells not known to be occupied; entering an
    /// unknown cell costs [`UNKNOWN_COST`] times the step length. `source`
    /// itself is always passable. Stops early once `stop` is settled.
    fn search(&self, source: usize, stop: Option<usize>) -> (Vec<f64>, Vec<usize>) {
        let n = self.cells.len();
        let mut cost = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        cost[source] = 0.0;
        heap.push(Entry { cost: 0.0, idx: source });
        let passable = |i: usize| i == source || self.passable(i);
        while let Some(Entry { cost: c, idx }) = heap.pop() {
            if c > cost[idx] {
                continue;
            }
            if Some(idx) == stop {
                break;
            }
            crate::world::for_each_move(self.width, self.height, idx, passable, |next, diagonal| {
                let base = if diagonal { SQRT_2 } else { 1.0 };
                let mult = if self.cells[next] == MemoryCell::Unknown { UNKNOWN_COST } else { 1.0 };
                let nc = c + base * mult;
                if nc < cost[next] {
                    cost[next] = nc;
                    prev[next] = idx;
                    heap.push(Entry { cost: nc, idx: next });
                }
            });
        }
        (cost, prev)
    }

    /// Cheapest path treating unknown cells as traversable at
    /// [`UNKNOWN_COST`] times the step length. Inclusive of both ends.
    pub fn plan_path(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        let start = from.row * self.width + from.col;
        let goal = to.row * self.width + to.col;
        if !self.passable(goal) {
            return None;
        }
        let (cost, prev) = self.search(start, Some(goal));
        if !cost[goal].is_finite() {
            return None;
        }
        let mut path = vec![goal];
        let mut at = goal;
        while at != start {
            at = prev[at];
            path.push(at);
        }
        path.reverse();
        Some(path.into_iter().map(|i| Cell::new(i % self.width, i / self.width)).collect())
    }

    fn cell_index(&self, p: Point) -> Option<usize> {
        let (c, r) = ((p.x / self.cell_size).floor(), (p.y / self.cell_size).floor());
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some(r as usize * self.width + c as usize)
    }

    /// True when no remembered obstacle lies within a small margin of the
    /// straight segment, so a path grazing a wall corner does not count.
    fn segment_clear(&self, from: Point, to: Point) -> bool {
        const MARGIN: f64 = 0.02;
        let len = from.distance(&to);
        let samples = (len / 0.05).ceil().max(1.0) as usize;
        (0..=samples).all(|k| {
            let t = k as f64 / samples as f64;
            let p = Point::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y));
            [(-MARGIN, -MARGIN), (-MARGIN, MARGIN), (MARGIN, -MARGIN), (MARGIN, MARGIN)]
                .iter()
                .all(|(dx, dy)| match self.cell_index(Point::new(p.x + dx, p.y + dy)) {
                    Some(i) => i == self.cell_index(from).unwrap_or(usize::MAX) || self.passable(i),
                    None => false,
                })
        })
    }
}

/// True when the cells a forward step from `pose` along `heading` passes
/// through are not known to be occupied.
fn step_clear(memory: &OccupancyMemory, from: Point, heading: f64) -> bool {
    let mut clear = true;
    walk_ray(from, heading, memory.cell_size, MOVE_STEP, |c, r, _| {
        let inside = c >= 0 && r >= 0 && (c as usize) < memory.width && (r as usize) < memory.height;
        clear = inside && (memory.cells[r as usize * memory.width + c as usize] != MemoryCell::SeenOccupied);
        !clear
    });
    clear
}

/// Heading among the twelve reachable by turning whose forward step is clear
/// in memory and lands cheapest on `cost`; ties go to fewer turns.
fn escape_heading(memory: &OccupancyMemory, pose: &Pose, cost: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, usize, f64)> = None;
    for k in 0..12 {
        let h = pose.heading + TURN_DEG * k as f64;
        let a = h.to_radians();
        let dest = Point::new(pose.x + MOVE_STEP * a.cos(), pose.y + MOVE_STEP * a.sin());
        if !step_clear(memory, pose.position(), h) {
            continue;
        }
        let Some(c) = memory.cell_index(dest).map(|i| cost[i]).filter(|c| c.is_finite()) else { continue };
        let turns = k.min(12 - k);
        if best.is_none_or(|(bc, bt, _)| c < bc || (c == bc && turns < bt)) {
            best = Some((c, turns, h));
        }
    }
    best.map(|b| crate::world::normalize_heading(b.2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavParams {
    /// Goal counts as reached within this distance (meters).
    pub reach_radius: f64,
    /// Replan at least this often (actions).
    pub replan_every: usize,
    /// Path cells to look ahead when steering.
    pub lookahead: usize,
}

impl Default for NavParams {
    fn default() -> Self {
        Self { reach_radius: 0.5, replan_every: 5, lookahead: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavOutcome {
    pub actions: Vec<Action>,
    pub poses: Vec<Pose>,
    pub final_pose: Pose,
    pub reached: bool,
    /// `on_action` asked to stop.
    pub halted: bool,
    pub collisions: usize,
}

impl NavOutcome {
    /// Meters walked; blocked moves do not count.
    pub fn path_length(&self) -> f64 {
        let moves = self.actions.iter().filter(|a| **a == Action::MoveAhead).count();
        MOVE_STEP * (moves - self.collisions) as f64
    }
}

/// Drives toward `goal` for at most `budget` actions, calling `on_action`
/// with the pose after every action; returning `true` from it halts.
#[allow(clippy::too_many_arguments)]
pub fn navigate_to(
    plan: &FloorPlan,
    start: &Pose,
    goal: Point,
    memory: &mut OccupancyMemory,
    budget: usize,
    sensor: &SensorParams,
    params: &NavParams,
    mut on_action: impl FnMut(&Pose, Action) -> bool,
) -> NavOutcome {
    let mut pose = *start;
    let mut out = NavOutcome {
        actions: Vec::new(),
        poses: Vec::new(),
        final_pose: pose,
        reached: false,
        halted: false,
        collisions: 0,
    };
    let goal_cell = plan.cell_of(goal);
    let mut path: Option<Vec<Cell>> = None;
    let mut since_plan = 0usize;
    let mut collided = false;
    // after a collision, turn to this heading and step before following the path again
    let mut escape: Option<f64> = None;
    loop {
        if pose.position().distance(&goal) <= params.reach_radius {
            out.reached = true;
            break;
        }
        if out.actions.len() >= budget {
            break;
        }
        let Some(goal_cell) = goal_cell else { break };
        if let Ok(view) = render_view(plan, &pose, sensor) {
            memory.update(&view);
        }
        let Some(here) = plan.cell_of(pose.position()) else { break };
        let stale = match &path {
            None => true,
            Some(p) => collided || since_plan >= params.replan_every.max(1) || !p.contains(&here),
        };
        if stale {
            path = memory.plan_path(here, goal_cell);
            since_plan = 0;
        }
        // goal provably unreachable given what has been seen
        let Some(p) = &path else { break };
        let mut action = match escape {
            Some(h) => toward(&pose, h),
            None => steer(&pose, lookahead_target(plan, memory, &pose, p, here, goal, params.lookahead)),
        };
        // a collision, or a forward step memory already knows is blocked
        let blocked = action == Action::MoveAhead && !step_clear(memory, pose.position(), pose.heading);
        if collided || blocked {
            let idx = goal_cell.row * plan.width() + goal_cell.col;
            // boxed in as far as memory knows: keep turning until a view opens
            let h = escape_heading(memory, &pose, &memory.search(idx, None).0)
                .unwrap_or(crate::world::normalize_heading(pose.heading + TURN_DEG));
            escape = Some(h);
            action = toward(&pose, h);
        }
        if action == Action::MoveAhead {
            escape = None;
        }
        let (next, hit) = match action {
            Action::MoveAhead => match move_ahead(plan, &pose) {
                Ok(next) => (next, false),
                Err(cell) => {
                    if let Some(c) = cell {
                        memory.mark_occupied(c);
                    }
                    (pose, true)
                }
            },
            other => step(plan, &pose, other),
        };
        collided = hit;
        out.collisions += hit as usize;
        pose = next;
        since_plan += 1;
        out.actions.push(action);
        out.poses.push(pose);
        if on_action(&pose, action) {
            out.halted = true;
            break;
        }
    }
    out.final_pose = pose;
    out
}

/// Turn toward heading `h`, or step once facing it.
fn toward(pose: &Pose, h: f64) -> Action {
    match angle_diff(pose.heading, h) {
        d if d.abs() < 1e-6 => Action::MoveAhead,
        d if d > 0.0 => Action::TurnLeft,
        _ => Action::TurnRight,
    }
}

fn lookahead_target(
    plan: &FloorPlan,
    memory: &OccupancyMemory,
    pose: &Pose,
    path: &[Cell],
    here: Cell,
    goal: Point,
    lookahead: usize,
) -> Point {
    let i = path.iter().position(|c| *c == here).unwrap_or(0);
    let last = path.len() - 1;
    for k in (1..=lookahead.max(1)).rev() {
        let j = (i + k).min(last);
        let p = if j == last { goal } else { plan.center(path[j]) };
        if memory.segment_clear(pose.position(), p) {
            return p;
        }
    }
    plan.center(here)
}
