//! Six labeled candidate waypoints around the agent and the scorers that
//! pick one of them.

mod vlm;

use serde::{Deserialize, Serialize};

use crate::error::WorldError;
use crate::imagination::{imagine, waypoint_pose, ImaginationConfig};
use crate::sensor::{cast, render_view, SensorParams, View, PANORAMA_STEP_DEG, PANORAMA_VIEWS};
use crate::waypoint::{apply_waypoint, predict, RelativeWaypoint, WaypointModel};
use crate::world::{FloorPlan, Point, Pose};

pub use vlm::{
    build_prompt, parse_choice, request_body, request_key, score_vlm, HttpTransport, Prompt, RecordingTransport, ReplayTransport,
    VlmSettings, VlmTransport, FORMAT_REMINDER, PROMPT_TEMPLATE, PROMPT_VERSION,
};

pub const LABELS: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// Hop used when a predicted waypoint cannot be placed.
pub const FALLBACK_HOP: f64 = 1.0;

/// Distance kept between a waypoint and the first obstacle on the line of
/// sight to it.
pub const SIGHT_CLEARANCE: f64 = 0.25;
/// Clipped hops shorter than this go to the fallback chain.
pub const MIN_HOP: f64 = 0.5;

/// Shortens `wp` so its position lies within the free space seen from
/// `pose`: a view can only be imagined where the current observation reaches,
/// never behind a wall. The heading change is kept.
pub fn clip_to_sight(plan: &FloorPlan, pose: &Pose, wp: &RelativeWaypoint) -> RelativeWaypoint {
    let target = apply_waypoint(pose, wp).position();
    let origin = pose.position();
    let dist = origin.distance(&target);
    if dist < 1e-9 {
        return *wp;
    }
    let bearing = (target.y - origin.y).atan2(target.x - origin.x).to_degrees();
    match cast(plan, origin, bearing, dist) {
        Some((hit, _)) => {
            let s = ((hit - SIGHT_CLEARANCE).max(0.0) / dist).min(1.0);
            RelativeWaypoint::new(wp.dx * s, wp.dy * s, wp.theta)
        }
        None => *wp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub direction_index: usize,
    pub waypoint_pose: Pose,
    pub imagined: View,
    /// The preferred waypoint could not be placed and a fallback was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub choice: String,
    pub reason: String,
    pub scorer_id: String,
    pub raw_response: Option<String>,
}

impl Decision {
    pub fn index(&self) -> usize {
        LABELS.iter().position(|l| *l == self.choice).expect("choices are always labels")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Heuristic,
    Vlm,
    Replay,
}

/// Symmetric relatedness of two categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Related {
    pub a: String,
    pub b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub relatedness: Vec<Related>,
    /// Objects further than this (meters) are not recognized in a view.
    pub recognition_range: f64,
    /// Radius (meters) around a waypoint over which novelty is measured.
    pub novelty_radius: f64,
    pub retry_limit: u32,
    pub vlm: VlmSettings,
}

fn rel(a: &str, b: &str, score: f64) -> Related {
    Related { a: a.into(), b: b.into(), score }
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            kind: ScorerKind::Heuristic,
            relatedness: vec![
                rel("couch", "tv", 0.8),
                rel("couch", "armchair", 0.7),
                rel("tv", "armchair", 0.6),
                rel("couch", "plant", 0.3),
                rel("bookshelf", "armchair", 0.4),
                rel("bookshelf", "desk", 0.5),
                rel("bed", "wardrobe", 0.7),
                rel("bed", "nightstand", 0.8),
                rel("wardrobe", "nightstand", 0.5),
                rel("fridge", "oven", 0.8),
                rel("fridge", "sink", 0.5),
                rel("oven", "sink", 0.6),
                rel("table", "chair", 0.8),
                rel("fridge", "table", 0.4),
                rel("toilet", "bathtub", 0.8),
                rel("toilet", "sink", 0.7),
                rel("bathtub", "sink", 0.6),
                rel("desk", "chair", 0.8),
            ],
            recognition_range: 3.0,
            novelty_radius: 2.0,
            retry_limit: 3,
            vlm: VlmSettings::default(),
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.retry_limit < 1 {
            return Err("retry_limit must be at least 1".into());
        }
        if let Some(r) = self.relatedness.iter().find(|r| !(0.0..=1.0).contains(&r.score)) {
            return Err(format!("relatedness {}-{} = {} outside [0, 1]", r.a, r.b, r.score));
        }
        if !(self.recognition_range > 0.0) || !(self.novelty_radius > 0.0) {
            return Err("recognition_range and novelty_radius must be positive".into());
        }
        Ok(())
    }

    /// 1 for a category and itself, the table entry otherwise (0 if absent).
    pub fn relatedness(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 1.0;
        }
        self.relatedness
            .iter()
            .find(|r| (r.a == a && r.b == b) || (r.a == b && r.b == a))
            .map_or(0.0, |r| r.score)
    }
}

/// Categories recognizable in `view`: hit by some ray within `range`.
pub fn recognized<'a>(view: &'a View, range: f64) -> impl Iterator<Item = &'a str> + 'a {
    let mut seen: Vec<&str> = view
        .rays
        .iter()
        .filter(|r| r.depth <= range)
        .filter_map(|r| r.category.as_deref())
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.into_iter()
}

/// Per-cell visit counts over the free cells of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    free: Vec<bool>,
    counts: Vec<u32>,
}

impl VisitGrid {
    /// Poses mark every cell within this radius as visited.
    pub const MARK_RADIUS: f64 = 1.0;

    pub fn new(plan: &FloorPlan) -> Self {
        let free = (0..plan.num_cells()).map(|i| plan.is_free(plan.cell_at_index(i))).collect();
        Self {
            width: plan.width(),
            height: plan.height(),
            cell_size: plan.cell_size(),
            free,
            counts: vec![0; plan.num_cells()],
        }
    }

    fn cells_within(&self, p: Point, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let cs = self.cell_size;
        let lo_c = ((p.x - radius) / cs).floor().max(0.0) as usize;
        let lo_r = ((p.y - radius) / cs).floor().max(0.0) as usize;
        let hi_c = (((p.x + radius) / cs).floor().max(-1.0) as i64).min(self.width as i64 - 1);
        let hi_r = (((p.y + radius) / cs).floor().max(-1.0) as i64).min(self.height as i64 - 1);
        (lo_r as i64..=hi_r).flat_map(move |r| (lo_c as i64..=hi_c).map(move |c| (c as usize, r as usize))).filter_map(
            move |(c, r)| {
                let centre = Point::new((c as f64 + 0.5) * cs, (r as f64 + 0.5) * cs);
                (centre.distance(&p) <= radius).then_some(r * self.width + c)
            },
        )
    }

    pub fn mark(&mut self, p: Point) {
        let cells: Vec<usize> = self.cells_within(p, Self::MARK_RADIUS).collect();
        for i in cells {
            self.counts[i] += 1;
        }
    }

    pub fn count(&self, idx: usize) -> u32 {
        self.counts[idx]
    }

    /// Share of free cells within `radius` of `p` never visited; 0 when there
    /// are none.
    pub fn novelty(&self, p: Point, radius: f64) -> f64 {
        let (mut total, mut fresh) = (0usize, 0usize);
        for i in self.cells_within(p, radius) {
            if self.free[i] {
                total += 1;
                fresh += (self.counts[i] == 0) as usize;
            }
        }
        if total == 0 {
            0.0
        } else {
            fresh as f64 / total as f64
        }
    }
}

fn candidate_set(
    plan: &FloorPlan,
    pose: &Pose,
    cfg: &ImaginationConfig,
    sensor: &SensorParams,
    salt: u64,
    mut waypoint_for: impl FnMut(&View) -> RelativeWaypoint,
) -> Result<Vec<Candidate>, WorldError> {
    let mut out = Vec::with_capacity(PANORAMA_VIEWS);
    for k in 0..PANORAMA_VIEWS {
        let facing = pose.rotated(PANORAMA_STEP_DEG * k as f64);
        let view = render_view(plan, &facing, sensor)?;
        let salt = salt.wrapping_mul(31).wrapping_add(k as u64);
        let preferred = clip_to_sight(plan, &facing, &waypoint_for(&view));
        let (wp, fallback) = match waypoint_pose(plan, &facing, &preferred) {
            Ok(_) if preferred.dx.hypot(preferred.dy) >= MIN_HOP => (preferred, false),
            _ => {
                let hop = RelativeWaypoint::new(0.0, FALLBACK_HOP, 0.0);
                match waypoint_pose(plan, &facing, &hop) {
                    Ok(_) => (hop, true),
                    Err(_) => (RelativeWaypoint::ZERO, true),
                }
            }
        };
        let at = waypoint_pose(plan, &facing, &wp)?;
        let imagined = imagine(plan, &facing, &wp, cfg, sensor, salt)?;
        out.push(Candidate { label: LABELS[k].into(), direction_index: k, waypoint_pose: at, imagined, fallback });
    }
    Ok(out)
}

/// Candidates whose waypoints come from the regressor applied to the view in
/// each of the six directions.
pub fn make_candidates(
    plan: &FloorPlan,
    pose: &Pose,
    model: &WaypointModel,
    cfg: &ImaginationConfig,
    sensor: &SensorParams,
    salt: u64,
) -> Result<Vec<Candidate>, WorldError> {
    candidate_set(plan, pose, cfg, sensor, salt, |view| predict(model, view))
}

/// Candidates a fixed `hop` meters straight ahead in each direction.
pub fn hop_candidates(
    plan: &FloorPlan,
    pose: &Pose,
    hop: f64,
    cfg: &ImaginationConfig,
    sensor: &SensorParams,
    salt: u64,
) -> Result<Vec<Candidate>, WorldError> {
    candidate_set(plan, pose, cfg, sensor, salt, |_| RelativeWaypoint::new(0.0, hop, 0.0))
}

/// Candidates that show the current view in each direction, with waypoints
/// `hop` meters along it.
pub fn current_view_candidates(
    plan: &FloorPlan,
    pose: &Pose,
    hop: f64,
    sensor: &SensorParams,
) -> Result<Vec<Candidate>, WorldError> {
    let mut out = hop_candidates(plan, pose, hop, &ImaginationConfig::oracle(), sensor, 0)?;
    for c in out.iter_mut() {
        c.imagined = render_view(plan, &pose.rotated(PANORAMA_STEP_DEG * c.direction_index as f64), sensor)?;
    }
    Ok(out)
}

/// Score of one candidate under the heuristic scorer.
pub fn heuristic_score(c: &Candidate, target: &str, visits: &VisitGrid, cfg: &ScorerConfig) -> f64 {
    let visible: Vec<&str> = recognized(&c.imagined, cfg.recognition_range).collect();
    let found = if visible.contains(&target) { 10.0 } else { 0.0 };
    let related = visible.iter().map(|cat| cfg.relatedness(cat, target)).fold(0.0, f64::max);
    found + related + 0.5 * visits.novelty(c.waypoint_pose.position(), cfg.novelty_radius)
}

/// Target sighting first, then related objects, then unexplored space. Ties
/// go to the earliest label.
pub fn score_heuristic(candidates: &[Candidate], target: &str, visits: &VisitGrid, cfg: &ScorerConfig) -> Decision {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let s = heuristic_score(c, target, visits, cfg);
        if s > best.1 {
            best = (i, s);
        }
    }
    let c = &candidates[best.0];
    Decision {
        choice: c.label.clone(),
        reason: format!("score {:.4}", best.1),
        scorer_id: "heuristic".into(),
        raw_response: None,
    }
}
