//! Egocentric raycast sensor: per-column depth plus the semantic label of
//! whatever the ray hits first.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, WorldError};
use crate::raster::{hsv, Canvas, Rgb, BLACK, WHITE};
use crate::world::{Cell, FloorPlan, Point, Pose};

pub const PANORAMA_VIEWS: usize = 6;
pub const PANORAMA_STEP_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    pub hfov: f64,
    pub width: usize,
    pub max_range: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { hfov: 79.0, width: 64, max_range: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    /// Meters to the first occupied cell, capped at the sensor range.
    pub depth: f64,
    pub category: Option<String>,
    pub instance_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub pose: Pose,
    pub hfov: f64,
    pub max_range: f64,
    /// Left to right.
    pub rays: Vec<Ray>,
}

impl View {
    pub fn width(&self) -> usize {
        self.rays.len()
    }

    /// Heading in degrees of column `j`.
    pub fn column_heading(&self, j: usize) -> f64 {
        column_heading(self.pose.heading, self.hfov, self.rays.len(), j)
    }

    pub fn min_depth(&self) -> f64 {
        self.rays.iter().map(|r| r.depth).fold(f64::INFINITY, f64::min)
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.rays.iter().filter_map(|r| r.category.as_deref()).collect()
    }

    /// World position where column `j` ends.
    pub fn hit_point(&self, j: usize) -> Point {
        let a = self.column_heading(j).to_radians();
        Point::new(self.pose.x + self.rays[j].depth * a.cos(), self.pose.y + self.rays[j].depth * a.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panorama {
    /// View `k` faces `pose.heading + 60k`.
    pub views: Vec<View>,
}

pub fn column_heading(heading: f64, hfov: f64, width: usize, j: usize) -> f64 {
    heading + hfov * (0.5 - (j as f64 + 0.5) / width as f64)
}

/// Walks the grid cells pierced by a ray (Amanatides–Woo traversal). `visit`
/// receives each cell and the distance at which the ray enters it, starting
/// with the origin cell at distance 0, and returns `true` to stop. Traversal
/// also stops once the entry distance exceeds `max_dist`.
pub fn walk_ray(
    origin: Point,
    angle_deg: f64,
    cell_size: f64,
    max_dist: f64,
    mut visit: impl FnMut(i64, i64, f64) -> bool,
) {
    let a = angle_deg.to_radians();
    let (dx, dy) = (a.cos(), a.sin());
    let (ox, oy) = (origin.x / cell_size, origin.y / cell_size);
    let (mut col, mut row) = (ox.floor() as i64, oy.floor() as i64);
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    let t_delta_c = if dx.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dx.abs() };
    let t_delta_r = if dy.abs() < 1e-12 { f64::INFINITY } else { 1.0 / dy.abs() };
    let mut t_max_c = if dx.abs() < 1e-12 {
        f64::INFINITY
    } else if dx > 0.0 {
        (col as f64 + 1.0 - ox) / dx
    } else {
        (ox - col as f64) / -dx
    };
    let mut t_max_r = if dy.abs() < 1e-12 {
        f64::INFINITY
    } else if dy > 0.0 {
        (row as f64 + 1.0 - oy) / dy
    } else {
        (oy - row as f64) / -dy
    };
    let max_t = max_dist / cell_size;
    let mut t = 0.0;
    loop {
        if visit(col, row, t * cell_size) {
            return;
        }
        if t_max_c < t_max_r {
            t = t_max_c;
            t_max_c += t_delta_c;
            col += step_c;
        } else {
            t = t_max_r;
            t_max_r += t_delta_r;
            row += step_r;
        }
        if t > max_t {
            return;
        }
    }
}

/// First occupied cell along a ray and the distance to it, or `None` within
/// `max_range`. Cells outside the grid count as occupied.
pub fn cast(plan: &FloorPlan, origin: Point, angle_deg: f64, max_range: f64) -> Option<(f64, Option<Cell>)> {
    let mut hit = None;
    walk_ray(origin, angle_deg, plan.cell_size(), max_range, |c, r, t| {
        if t == 0.0 {
            return false;
        }
        if !plan.is_free_signed(c, r) {
            let cell = (c >= 0 && r >= 0 && (c as usize) < plan.width() && (r as usize) < plan.height())
                .then(|| Cell::new(c as usize, r as usize));
            hit = Some((t, cell));
            return true;
        }
        false
    });
    hit.filter(|(t, _)| *t <= max_range)
}

pub fn render_view(plan: &FloorPlan, pose: &Pose, params: &SensorParams) -> Result<View, WorldError> {
    let cell = plan.cell_of(pose.position()).ok_or(WorldError::OutOfBounds { x: pose.x, y: pose.y })?;
    if !plan.is_free(cell) {
        return Err(WorldError::PoseOccupied { x: pose.x, y: pose.y });
    }
    let width = params.width.max(8);
    let rays = (0..width)
        .map(|j| {
            let heading = column_heading(pose.heading, params.hfov, width, j);
            match cast(plan, pose.position(), heading, params.max_range) {
                Some((depth, cell)) => {
                    let obj = cell.and_then(|c| plan.object_at(c));
                    Ray {
                        depth: depth.max(1e-6),
                        category: obj.map(|o| o.category.clone()),
                        instance_id: obj.map(|o| o.id),
                    }
                }
                None => Ray { depth: params.max_range, category: None, instance_id: None },
            }
        })
        .collect();
    Ok(View { pose: *pose, hfov: params.hfov, max_range: params.max_range, rays })
}

pub fn render_panorama(plan: &FloorPlan, pose: &Pose, params: &SensorParams) -> Result<Panorama, WorldError> {
    let views = (0..PANORAMA_VIEWS)
        .map(|k| render_view(plan, &pose.rotated(PANORAMA_STEP_DEG * k as f64), params))
        .collect::<Result<_, _>>()?;
    Ok(Panorama { views })
}

/// Display hue for a category. Known categories get fixed, well separated
/// hues; anything else is hashed.
pub fn category_hue(category: &str) -> f64 {
    const FIXED: [(&str, f64); 16] = [
        ("couch", 0.0),
        ("tv", 22.0),
        ("armchair", 45.0),
        ("plant", 120.0),
        ("bookshelf", 68.0),
        ("bed", 270.0),
        ("wardrobe", 292.0),
        ("nightstand", 315.0),
        ("fridge", 180.0),
        ("oven", 200.0),
        ("table", 90.0),
        ("chair", 145.0),
        ("sink", 160.0),
        ("toilet", 225.0),
        ("bathtub", 248.0),
        ("desk", 338.0),
    ];
    if let Some((_, h)) = FIXED.iter().find(|(n, _)| *n == category) {
        return *h;
    }
    // FNV-1a
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in category.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    (hash % 360) as f64
}

fn ray_color(ray: &Ray, max_range: f64) -> Rgb {
    let v = 1.0 - 0.65 * (ray.depth / max_range).clamp(0.0, 1.0);
    match &ray.category {
        Some(cat) => hsv(category_hue(cat), 0.75, v),
        None => hsv(0.0, 0.0, v),
    }
}

pub const TILE_HEIGHT: u32 = 96;
pub const COLUMN_PX: u32 = 2;
pub const TILE_GAP: u32 = 4;
const BADGE: i64 = 20;
const LEGEND_ROW: i64 = 14;

/// Pixel rectangle `(x, y, w, h)` of tile `k`.
pub fn tile_rect(views: &[View], k: usize) -> (u32, u32, u32, u32) {
    let x = views[..k].iter().map(|v| v.width() as u32 * COLUMN_PX + TILE_GAP).sum::<u32>();
    (x, 0, views[k].width() as u32 * COLUMN_PX, TILE_HEIGHT)
}

/// Tiles views left to right as colored column strips (hue = category,
/// brightness = nearness), badges tile `k` with `labels[k]` in its top-left
/// corner and appends a legend strip naming each category hue. Missing or
/// extra labels are ignored.
pub fn rasterize_canvas(views: &[View], labels: Option<&[String]>) -> Canvas {
    let categories: BTreeSet<&str> = views.iter().flat_map(|v| v.categories()).collect();
    let tiles_w = views.iter().map(|v| v.width() as u32 * COLUMN_PX).sum::<u32>()
        + TILE_GAP * views.len().saturating_sub(1) as u32;
    let width = tiles_w.max(160);
    // lay the legend out first to know its height
    let mut entries = Vec::new();
    let (mut lx, mut ly) = (4i64, 0i64);
    for cat in &categories {
        let w = 14 + crate::raster::text_width(cat, 1) + 8;
        if lx + w > width as i64 && lx > 4 {
            lx = 4;
            ly += LEGEND_ROW;
        }
        entries.push((lx, ly, *cat));
        lx += w;
    }
    let legend_h = if categories.is_empty() { 0 } else { ly + LEGEND_ROW + 4 };
    let height = TILE_HEIGHT + legend_h as u32;
    let mut canvas = Canvas::new(width, height, [24, 24, 24]);

    for (k, view) in views.iter().enumerate() {
        let (x0, _, _, _) = tile_rect(views, k);
        for (j, ray) in view.rays.iter().enumerate() {
            let color = ray_color(ray, view.max_range);
            canvas.fill_rect((x0 + j as u32 * COLUMN_PX) as i64, 0, COLUMN_PX as i64, TILE_HEIGHT as i64, color);
        }
        if let Some(label) = labels.and_then(|l| l.get(k)) {
            canvas.fill_rect(x0 as i64, 0, BADGE, BADGE, WHITE);
            canvas.stroke_rect(x0 as i64, 0, BADGE, BADGE, BLACK);
            let tw = crate::raster::text_width(label, 2) - 2;
            canvas.text(x0 as i64 + (BADGE - tw) / 2, 3, label, 2, BLACK);
        }
    }
    let base = TILE_HEIGHT as i64 + 4;
    for (x, y, cat) in entries {
        canvas.fill_rect(x, base + y, 10, 10, hsv(category_hue(cat), 0.75, 1.0));
        canvas.text(x + 14, base + y + 2, cat, 1, WHITE);
    }
    canvas
}

/// PNG bytes of [`rasterize_canvas`].
pub fn rasterize(views: &[View], labels: Option<&[String]>) -> Result<Vec<u8>, Error> {
    rasterize_canvas(views, labels).encode_png()
}
