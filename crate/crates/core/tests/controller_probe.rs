#![allow(clippy::needless_range_loop)]

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewnav::controller::{navigate_to, NavParams, OccupancyMemory};
use viewnav::sensor::SensorParams;
use viewnav::world::{generate_floorplan, geodesic_distance, FloorPlan, Point, Pose, WorldSpec};

/// Open room with a U-shaped wall whose cup faces west, toward the start.
/// The goal sits just east of the U's base.
fn u_case(k: u64) -> (FloorPlan, Pose, Point) {
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    let (w, h) = (44usize, 40usize);
    let arm = rng.random_range(5..10usize);
    let depth = rng.random_range(6..12usize);
    let x0 = rng.random_range(18..24usize);
    let y0 = rng.random_range(3..h - 3 - 2 * arm);
    let mut grid = vec![vec!['.'; w]; h];
    for r in 0..h {
        for c in 0..w {
            if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
                grid[r][c] = '#';
            }
        }
    }
    for r in y0..=y0 + 2 * arm {
        grid[r][x0 + depth] = '#';
    }
    for c in x0..=x0 + depth {
        grid[y0][c] = '#';
        grid[y0 + 2 * arm][c] = '#';
    }
    let rows: Vec<String> = grid.iter().map(|r| r.iter().collect()).collect();
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    let plan = FloorPlan::from_ascii(&refs, 0.25, &[]).unwrap();
    let mid = y0 + arm;
    let start = plan.center(viewnav::world::Cell::new(rng.random_range(3..x0 - 4), mid + rng.random_range(0..3) - 1));
    let goal = plan.center(viewnav::world::Cell::new(x0 + depth + rng.random_range(2..6), mid));
    (plan, Pose::new(start.x, start.y, rng.random_range(0..12) as f64 * 30.0), goal)
}

#[test]
fn goes_around_u_walls() {
    let params = NavParams::default();
    let mut lines = Vec::new();
    for k in 0..50 {
        let (plan, start, goal) = u_case(k);
        let geo = geodesic_distance(&plan, &start, goal).unwrap().unwrap();
        let mut memory = OccupancyMemory::new(&plan);
        let out = navigate_to(&plan, &start, goal, &mut memory, 2000, &SensorParams::default(), &params, |_, _| false);
        let len = out.path_length();
        // the agent moves at any multiple of 30 degrees while the geodesic is
        // 8-connected, which overstates the any-angle distance by at most
        // 1/cos(22.5 deg); it also stops within the reach radius
        let lower = geo * (std::f64::consts::PI / 8.0).cos() - params.reach_radius;
        let ok = out.reached && len >= lower && len <= 2.0 * geo;
        if !ok {
            lines.push(format!("case {k}: reached {} path {len:.2} geodesic {geo:.2}", out.reached));
        }
    }
    assert!(lines.is_empty(), "{}", lines.join("\n"));
}

#[test]
fn full_budget_reaches_any_free_goal() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    for seed in 0..10 {
        let plan = generate_floorplan(seed, &WorldSpec::default()).unwrap();
        let free: Vec<_> = plan.free_cells().collect();
        for _ in 0..5 {
            let s = plan.center(free[rng.random_range(0..free.len())]);
            let g = plan.center(free[rng.random_range(0..free.len())]);
            let mut memory = OccupancyMemory::new(&plan);
            let start = Pose::new(s.x, s.y, 0.0);
            let out = navigate_to(&plan, &start, g, &mut memory, 5000, &SensorParams::default(), &NavParams::default(), |_, _| false);
            if !out.reached {
                failures.push(format!("plan {seed}: {s:?} -> {g:?}"));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
