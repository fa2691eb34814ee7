use super::EpisodeResult;
use crate::error::Error;
use crate::raster::{hsv, text_width, Canvas, Rgb, BLACK, WHITE};
use crate::sensor::category_hue;
use crate::world::{Episode, FloorPlan, Point};

const CELL_PX: i64 = 8;
const LEGEND_PX: i64 = 150;
pub const WALL: Rgb = [60, 60, 60];
pub const PATH: Rgb = [20, 90, 220];
pub const START: Rgb = [0, 160, 0];
pub const WAYPOINT: Rgb = [230, 120, 0];

/// Pixel of world point `p` in [`render_trajectory`] output.
pub fn map_pixel(plan: &FloorPlan, p: Point) -> (i64, i64) {
    let s = CELL_PX as f64 / plan.cell_size();
    let h = plan.height() as f64 * CELL_PX as f64;
    ((p.x * s).round() as i64, (h - p.y * s).round() as i64)
}

/// Top-down map: walls, object footprints by category with a legend, the
/// walked path, the start (star), target instances (ringed) and the chosen
/// sub-goals tagged with their order and chosen label.
pub fn render_trajectory(plan: &FloorPlan, result: &EpisodeResult, episode: &Episode) -> Canvas {
    let map_w = plan.width() as i64 * CELL_PX;
    let map_h = plan.height() as i64 * CELL_PX;
    let legend_rows = plan.categories().len() as i64 + 2;
    let height = map_h.max(legend_rows * 14 + 10);
    let mut c = Canvas::new((map_w + LEGEND_PX) as u32, height as u32, WHITE);

    for idx in 0..plan.num_cells() {
        let cell = plan.cell_at_index(idx);
        let color = match plan.object_at(cell) {
            Some(o) => hsv(category_hue(&o.category), 0.6, 0.9),
            None if !plan.is_free(cell) => WALL,
            None => continue,
        };
        let x = cell.col as i64 * CELL_PX;
        let y = map_h - (cell.row as i64 + 1) * CELL_PX;
        c.fill_rect(x, y, CELL_PX, CELL_PX, color);
    }

    for o in plan.instances(&episode.target_category) {
        let (x, y) = map_pixel(plan, o.anchor);
        let r = (o.footprint.len() as f64).sqrt() * CELL_PX as f64 / 2.0 + 6.0;
        ring(&mut c, x, y, r, 2, [200, 0, 0]);
    }

    for w in result.trajectory.windows(2) {
        c.line(map_pixel(plan, w[0].position()), map_pixel(plan, w[1].position()), 2, PATH);
    }

    for (k, d) in result.decisions.iter().enumerate() {
        let (x, y) = map_pixel(plan, d.goal);
        c.fill_rect(x - 2, y - 2, 5, 5, WAYPOINT);
        c.text(x + 4, y - 10, &format!("{}{}", k + 1, d.decision.choice), 1, BLACK);
    }

    let (sx, sy) = map_pixel(plan, episode.start.position());
    star(&mut c, sx, sy, 7, START);

    let lx = map_w + 8;
    let mut ly = 6;
    let status = if result.success { "success" } else { "failure" };
    c.text(lx, ly, &format!("find {}", episode.target_category), 1, BLACK);
    ly += 12;
    c.text(lx, ly, status, 1, if result.success { START } else { [200, 0, 0] });
    ly += 16;
    for cat in plan.categories() {
        c.fill_rect(lx, ly, 9, 9, hsv(category_hue(cat), 0.6, 0.9));
        let label: String = cat.chars().take(((LEGEND_PX - 24) / text_width("x", 1)) as usize).collect();
        c.text(lx + 14, ly + 1, &label, 1, BLACK);
        ly += 14;
    }
    c
}

pub fn render_trajectory_png(plan: &FloorPlan, result: &EpisodeResult, episode: &Episode) -> Result<Vec<u8>, Error> {
    render_trajectory(plan, result, episode).encode_png()
}

fn ring(c: &mut Canvas, cx: i64, cy: i64, r: f64, thickness: i64, color: Rgb) {
    let n = (r * 8.0).ceil() as usize;
    for k in 0..n {
        let a = k as f64 / n as f64 * std::f64::consts::TAU;
        let x = cx + (r * a.cos()).round() as i64;
        let y = cy + (r * a.sin()).round() as i64;
        c.fill_rect(x, y, thickness, thickness, color);
    }
}

/// Five-pointed star outline.
fn star(c: &mut Canvas, cx: i64, cy: i64, r: i64, color: Rgb) {
    let pts: Vec<(i64, i64)> = (0..10)
        .map(|k| {
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            let rr = if k % 2 == 0 { r as f64 } else { r as f64 * 0.45 };
            (cx + (rr * a.cos()).round() as i64, cy + (rr * a.sin()).round() as i64)
        })
        .collect();
    for k in 0..10 {
        c.line(pts[k], pts[(k + 1) % 10], 2, color);
    }
}
