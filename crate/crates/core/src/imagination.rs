//! Views at predicted waypoints: rendered exactly, or rendered and then
//! degraded the way a view synthesizer degrades them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::WorldError;
use crate::sensor::{render_view, SensorParams, View};
use crate::waypoint::{apply_waypoint, RelativeWaypoint};
use crate::world::{FloorPlan, Pose};

/// Waypoints landing in an obstacle move to the nearest free cell within
/// this radius.
pub const SNAP_RADIUS: f64 = 0.5;

/// Shortest run of unlabeled columns that can receive a hallucination.
pub const MIN_HALLUCINATION_RUN: usize = 4;

/// Instance id given to hallucinated objects.
pub const HALLUCINATED_ID: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImaginationMode {
    Oracle,
    Corrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corruption {
    pub label_swap_prob: f64,
    pub hallucination_prob: f64,
    pub dropout_prob: f64,
    pub depth_noise_sigma: f64,
}

impl Corruption {
    pub const NONE: Self = Self { label_swap_prob: 0.0, hallucination_prob: 0.0, dropout_prob: 0.0, depth_noise_sigma: 0.0 };
}

impl Default for Corruption {
    fn default() -> Self {
        Self { label_swap_prob: 0.10, hallucination_prob: 0.15, dropout_prob: 0.10, depth_noise_sigma: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImaginationConfig {
    pub mode: ImaginationMode,
    pub corruption: Corruption,
    pub rng_seed: u64,
    /// Categories swaps and hallucinations draw from. Empty means the
    /// plan's own categories.
    pub palette: Vec<String>,
}

impl Default for ImaginationConfig {
    fn default() -> Self {
        Self::corrupted(0)
    }
}

impl ImaginationConfig {
    pub fn oracle() -> Self {
        Self { mode: ImaginationMode::Oracle, ..Self::corrupted(0) }
    }

    pub fn corrupted(rng_seed: u64) -> Self {
        Self { mode: ImaginationMode::Corrupted, corruption: Corruption::default(), rng_seed, palette: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let c = &self.corruption;
        for (name, p) in [
            ("label_swap_prob", c.label_swap_prob),
            ("hallucination_prob", c.hallucination_prob),
            ("dropout_prob", c.dropout_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is not a probability"));
            }
        }
        if !(c.depth_noise_sigma >= 0.0) {
            return Err(format!("depth_noise_sigma = {} is negative", c.depth_noise_sigma));
        }
        Ok(())
    }
}

/// World pose of `wp` from `pose`, moved to a free cell centre when it lands
/// in an obstacle or off the grid.
pub fn waypoint_pose(plan: &FloorPlan, pose: &Pose, wp: &RelativeWaypoint) -> Result<Pose, WorldError> {
    let target = apply_waypoint(pose, wp);
    if plan.is_free_point(target.position()) {
        return Ok(target);
    }
    let p = plan.snap_to_free(target.position(), SNAP_RADIUS)?;
    Ok(Pose::new(p.x, p.y, target.heading))
}

/// The view an agent at `pose` imagines after moving by `wp`. `salt`
/// separates the noise of different imaginings under the same seed.
pub fn imagine(
    plan: &FloorPlan,
    pose: &Pose,
    wp: &RelativeWaypoint,
    cfg: &ImaginationConfig,
    sensor: &SensorParams,
    salt: u64,
) -> Result<View, WorldError> {
    let at = waypoint_pose(plan, pose, wp)?;
    let view = render_view(plan, &at, sensor)?;
    Ok(match cfg.mode {
        ImaginationMode::Oracle => view,
        ImaginationMode::Corrupted => {
            let palette: Vec<String> = if cfg.palette.is_empty() {
                plan.categories().into_iter().map(String::from).collect()
            } else {
                cfg.palette.clone()
            };
            corrupt(&view, &cfg.corruption, &palette, cfg.rng_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        }
    })
}

/// Degrades ray contents only; the pose, field of view and column count are
/// untouched.
pub fn corrupt(view: &View, c: &Corruption, palette: &[String], seed: u64) -> View {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = view.clone();
    for ray in out.rays.iter_mut() {
        // draw both decisions for every labeled ray so streams stay aligned
        if ray.category.is_none() {
            continue;
        }
        let swap = rng.random::<f64>() < c.label_swap_prob;
        let erase = rng.random::<f64>() < c.dropout_prob;
        let pick = rng.random_range(0..palette.len().max(1));
        if erase {
            ray.category = None;
            ray.instance_id = None;
        } else if swap && !palette.is_empty() {
            ray.category = Some(palette[pick].clone());
        }
    }
    if !palette.is_empty() && rng.random::<f64>() < c.hallucination_prob {
        let runs = unlabeled_runs(&out);
        if !runs.is_empty() {
            let (start, len) = runs[rng.random_range(0..runs.len())];
            let span = rng.random_range(MIN_HALLUCINATION_RUN..=len);
            let offset = rng.random_range(0..=len - span);
            let cat = &palette[rng.random_range(0..palette.len())];
            for ray in &mut out.rays[start + offset..start + offset + span] {
                ray.category = Some(cat.clone());
                ray.instance_id = Some(HALLUCINATED_ID);
            }
        }
    }
    if c.depth_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, c.depth_noise_sigma).expect("sigma is finite and positive");
        for ray in out.rays.iter_mut() {
            let d = ray.depth + normal.sample(&mut rng);
            ray.depth = d.clamp(1e-3, view.max_range);
        }
    }
    out
}

/// Maximal runs of unlabeled columns at least [`MIN_HALLUCINATION_RUN`] long,
/// as `(start, len)`.
fn unlabeled_runs(view: &View) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (j, ray) in view.rays.iter().enumerate() {
        match (ray.category.is_none(), start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                if j - s >= MIN_HALLUCINATION_RUN {
                    runs.push((s, j - s));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if view.rays.len() - s >= MIN_HALLUCINATION_RUN {
            runs.push((s, view.rays.len() - s));
        }
    }
    runs
}
