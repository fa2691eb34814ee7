use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use super::{Cell, FloorPlan, Point, Pose};
use crate::error::WorldError;

/// Path length in unit steps. Distances are kept as exact step counts and only
/// converted to meters on read, so two searches that find the same optimum
/// report bit-identical lengths regardless of expansion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Steps {
    pub straight: u32,
    pub diagonal: u32,
}

impl Steps {
    pub const ZERO: Steps = Steps { straight: 0, diagonal: 0 };

    #[inline]
    pub fn key(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    #[inline]
    pub fn meters(self, cell_size: f64) -> f64 {
        cell_size * self.key()
    }

    #[inline]
    fn add(self, diagonal: bool) -> Steps {
        if diagonal {
            Steps { straight: self.straight, diagonal: self.diagonal + 1 }
        } else {
            Steps { straight: self.straight + 1, diagonal: self.diagonal }
        }
    }
}

const OFFSETS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Calls `visit(neighbour_index, is_diagonal)` for every 8-connected move out
/// of `idx` whose destination passes `passable`. Diagonal moves additionally
/// require both orthogonal cells to pass, so paths never squeeze between two
/// blocked corners.
#[inline]
pub(crate) fn for_each_move(
    width: usize,
    height: usize,
    idx: usize,
    passable: impl Fn(usize) -> bool,
    mut visit: impl FnMut(usize, bool),
) {
    let (c, r) = ((idx % width) as i64, (idx / width) as i64);
    let inside = |c: i64, r: i64| c >= 0 && r >= 0 && (c as usize) < width && (r as usize) < height;
    for (dc, dr) in OFFSETS {
        let (nc, nr) = (c + dc, r + dr);
        if !inside(nc, nr) {
            continue;
        }
        let n = nr as usize * width + nc as usize;
        if !passable(n) {
            continue;
        }
        let diagonal = dc != 0 && dr != 0;
        if diagonal {
            let a = r as usize * width + nc as usize;
            let b = nr as usize * width + c as usize;
            if !passable(a) || !passable(b) {
                continue;
            }
        }
        visit(n, diagonal);
    }
}

#[derive(PartialEq)]
struct Entry {
    key: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distances from a set of source cells to every free cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    cell_size: f64,
    steps: Vec<Option<Steps>>,
}

impl DistanceField {
    /// Multi-source Dijkstra over free cells. Occupied sources are ignored.
    pub fn new(plan: &FloorPlan, sources: &[Cell]) -> Self {
        Self::search(plan, sources, None)
    }

    fn search(plan: &FloorPlan, sources: &[Cell], stop_at: Option<usize>) -> Self {
        let n = plan.num_cells();
        let mut steps: Vec<Option<Steps>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if plan.is_free(s) {
                let i = plan.index(s);
                steps[i] = Some(Steps::ZERO);
                heap.push(Entry { key: 0.0, idx: i });
            }
        }
        let free = |i: usize| plan.is_free(plan.cell_at_index(i));
        while let Some(Entry { idx, .. }) = heap.pop() {
            if done[idx] {
                continue;
            }
            done[idx] = true;
            if stop_at == Some(idx) {
                break;
            }
            let here = steps[idx].expect("queued cells have a distance");
            for_each_move(plan.width(), plan.height(), idx, free, |next, diagonal| {
                if done[next] {
                    return;
                }
                let cand = here.add(diagonal);
                if steps[next].is_none_or(|s| cand.key() < s.key()) {
                    steps[next] = Some(cand);
                    heap.push(Entry { key: cand.key(), idx: next });
                }
            });
        }
        Self { width: plan.width(), cell_size: plan.cell_size(), steps }
    }

    pub fn distance(&self, cell: Cell) -> Option<f64> {
        self.steps[cell.row * self.width + cell.col].map(|s| s.meters(self.cell_size))
    }

    pub fn distance_at(&self, plan: &FloorPlan, p: Point) -> Option<f64> {
        plan.cell_of(p).and_then(|c| self.distance(c))
    }

    /// Shortest path from `cell` down the field to the nearest source,
    /// inclusive of both ends. Empty when `cell` is unreachable.
    pub fn path_from(&self, plan: &FloorPlan, cell: Cell) -> Vec<Cell> {
        let mut idx = plan.index(cell);
        let Some(mut here) = self.steps[idx] else {
            return Vec::new();
        };
        let mut path = vec![cell];
        let free = |i: usize| plan.is_free(plan.cell_at_index(i));
        while here != Steps::ZERO {
            let mut best: Option<(usize, Steps)> = None;
            for_each_move(plan.width(), plan.height(), idx, free, |n, diagonal| {
                if let Some(s) = self.steps[n] {
                    if s.add(diagonal) == here && best.is_none_or(|(bi, _)| n < bi) {
                        best = Some((n, s));
                    }
                }
            });
            let (n, s) = best.expect("every reached cell has a predecessor");
            idx = n;
            here = s;
            path.push(plan.cell_at_index(idx));
        }
        path
    }
}

/// Shortest 8-connected path length in meters between the cell holding `from`
/// and the cell holding `to`; `Ok(None)` when no free path exists.
pub fn geodesic_distance(plan: &FloorPlan, from: &Pose, to: Point) -> Result<Option<f64>, WorldError> {
    let start = plan.cell_of(from.position()).ok_or(WorldError::OutOfBounds { x: from.x, y: from.y })?;
    let goal = plan.cell_of(to).ok_or(WorldError::OutOfBounds { x: to.x, y: to.y })?;
    if !plan.is_free(start) || !plan.is_free(goal) {
        return Ok(None);
    }
    let field = DistanceField::search(plan, &[start], Some(plan.index(goal)));
    Ok(field.distance(goal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> FloorPlan {
        FloorPlan::from_ascii(&["########", "#......#", "########"], 0.25, &[]).unwrap()
    }

    #[test]
    fn straight_corridor_four_cells() {
        let plan = corridor();
        let from = Pose::new(0.25 + 0.125, 0.375, 0.0);
        let d = geodesic_distance(&plan, &from, Point::new(1.25 + 0.125, 0.375)).unwrap();
        assert_eq!(d, Some(1.0));
    }

    #[test]
    fn full_wall_is_unreachable() {
        let plan = FloorPlan::from_ascii(&["#######", "#..#..#", "#..#..#", "#######"], 0.25, &[]).unwrap();
        let from = Pose::new(0.375, 0.375, 0.0);
        assert_eq!(geodesic_distance(&plan, &from, Point::new(1.375, 0.375)).unwrap(), None);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let plan = corridor();
        let from = Pose::new(0.375, 0.375, 0.0);
        assert!(matches!(
            geodesic_distance(&plan, &from, Point::new(-1.0, 0.3)),
            Err(WorldError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn diagonal_steps_do_not_cut_corners() {
        // The only link between the two free cells is a corner touch.
        let plan = FloorPlan::from_ascii(&["####", "#.##", "##.#", "####"], 1.0, &[]).unwrap();
        let from = Pose::new(1.5, 1.5, 0.0);
        assert_eq!(geodesic_distance(&plan, &from, Point::new(2.5, 2.5)).unwrap(), None);
        let open = FloorPlan::from_ascii(&["####", "#..#", "#..#", "####"], 1.0, &[]).unwrap();
        assert_eq!(geodesic_distance(&open, &from, Point::new(2.5, 2.5)).unwrap(), Some(SQRT_2));
    }

    #[test]
    fn path_descends_to_source() {
        let plan = FloorPlan::from_ascii(&["#####", "#...#", "#.#.#", "#...#", "#####"], 1.0, &[]).unwrap();
        let field = DistanceField::new(&plan, &[Cell::new(1, 1)]);
        let path = field.path_from(&plan, Cell::new(3, 3));
        assert_eq!(path.first(), Some(&Cell::new(3, 3)));
        assert_eq!(path.last(), Some(&Cell::new(1, 1)));
        assert_eq!(path.len(), 5);
        assert_eq!(field.distance(Cell::new(3, 3)), Some(4.0));
    }
}
