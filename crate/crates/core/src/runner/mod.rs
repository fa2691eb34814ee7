//! Episode loop: look around, pick a waypoint among imagined views, drive
//! there, and stop once the target is in view and close.

mod metrics;
mod render;

use serde::{Deserialize, Serialize};

use crate::controller::{navigate_to, step, steer, Action, NavParams, OccupancyMemory, MOVE_STEP};
use crate::error::Error;
use crate::imagination::{ImaginationConfig, ImaginationMode};
use crate::planner::{
    current_view_candidates, hop_candidates, make_candidates, score_heuristic, score_vlm, Candidate, Decision,
    ScorerConfig, ScorerKind, VisitGrid, VlmTransport,
};
use crate::sensor::{render_view, SensorParams, View};
use crate::waypoint::WaypointModel;
use crate::world::{target_field, DistanceField, Episode, FloorPlan, Point, Pose};

pub use metrics::{
    ablate, evaluate, read_episode_results, reaggregate, spl, success_rate, sweep_sampling_step, write_report, AblationRow,
    AblationTable, Report, REPORT_VERSION, SWEEP_STEPS,
};
pub use render::{map_pixel, render_trajectory, render_trajectory_png, PATH, START, WALL, WAYPOINT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub use_imagination: bool,
    pub use_waypoint_model: bool,
    pub imagination: ImaginationConfig,
    /// Sampling step the waypoint model was trained with.
    pub sampling_step: usize,
    pub scorer: ScorerConfig,
    pub max_steps: usize,
    pub success_radius: f64,
    /// Hop length (meters) when waypoints are not predicted.
    pub hop_radius: f64,
    /// Actions allowed per sub-goal before choosing again.
    pub subgoal_budget: usize,
    /// Optional cap on waypoint choices per episode; the step budget
    /// always applies.
    pub max_replans: Option<usize>,
    pub seed: u64,
    pub sensor: SensorParams,
    pub nav: NavParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            use_imagination: true,
            use_waypoint_model: true,
            imagination: ImaginationConfig::corrupted(0),
            sampling_step: crate::waypoint::DEFAULT_SAMPLING_STEP,
            scorer: ScorerConfig::default(),
            max_steps: 500,
            success_radius: 1.0,
            hop_radius: 2.0,
            subgoal_budget: 40,
            max_replans: None,
            seed: 0,
            sensor: SensorParams::default(),
            nav: NavParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Format(m));
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.hop_radius > 0.0) || !(self.success_radius > 0.0) {
            return bad("hop_radius and success_radius must be positive".into());
        }
        if self.subgoal_budget < 1 {
            return bad("subgoal_budget must be at least 1".into());
        }
        self.imagination.validate().map_err(Error::Format)?;
        self.scorer.validate().map_err(Error::Format)?;
        Ok(())
    }

    /// Short name of the variant, e.g. `imagine+w2i/oracle`.
    pub fn variant_name(&self) -> String {
        if !self.use_imagination {
            return "no-imagination".into();
        }
        let how = if self.use_waypoint_model { "w2i" } else { "fixed-hop" };
        let mode = match self.imagination.mode {
            ImaginationMode::Oracle => "oracle",
            ImaginationMode::Corrupted => "corrupted",
        };
        format!("imagine+{how}/{mode}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Actions taken before the decision.
    pub step: usize,
    pub decision: Decision,
    pub goal: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub target_category: String,
    pub success: bool,
    /// Meters walked.
    pub path_length: f64,
    pub gt_length: f64,
    pub steps: usize,
    pub stop_issued: bool,
    /// Geodesic distance to the nearest target at the end, if reachable.
    pub final_distance: Option<f64>,
    pub collisions: usize,
    pub actions: Vec<Action>,
    pub trajectory: Vec<Pose>,
    pub decisions: Vec<DecisionRecord>,
}

/// Handles the episode loop needs besides the world itself.
pub struct Agents<'a> {
    pub model: Option<&'a WaypointModel>,
    pub transport: Option<&'a mut dyn VlmTransport>,
}

impl<'a> Agents<'a> {
    pub fn heuristic(model: Option<&'a WaypointModel>) -> Self {
        Self { model, transport: None }
    }
}

/// Stop test run after every action: a target instance is hit by some ray
/// of the forward view and the target is geodesically within the radius.
fn target_reached(view: &View, target: &str, field: &DistanceField, plan: &FloorPlan, radius: f64) -> bool {
    let seen = view.rays.iter().any(|r| r.instance_id.is_some() && r.category.as_deref() == Some(target));
    seen && field.distance_at(plan, view.pose.position()).is_some_and(|d| d <= radius)
}

/// Free point a little short of where the nearest recognized target ray in
/// `view` ends, or `None` when the view shows no target within `range`.
fn target_approach(plan: &FloorPlan, view: &View, target: &str, range: f64) -> Option<(Point, Point)> {
    let j = (0..view.rays.len())
        .filter(|&j| view.rays[j].category.as_deref() == Some(target) && view.rays[j].depth <= range)
        .min_by(|&a, &b| view.rays[a].depth.total_cmp(&view.rays[b].depth))?;
    let hit = view.hit_point(j);
    let a = view.column_heading(j).to_radians();
    let back = (view.rays[j].depth - 0.4).max(0.0);
    let near = Point::new(view.pose.x + back * a.cos(), view.pose.y + back * a.sin());
    let goal = plan.snap_to_free(near, 0.75).ok()?;
    Some((goal, hit))
}

struct EpisodeState<'p> {
    plan: &'p FloorPlan,
    target: String,
    field: DistanceField,
    radius: f64,
    sensor: SensorParams,
    pose: Pose,
    actions: Vec<Action>,
    trajectory: Vec<Pose>,
    visits: VisitGrid,
    stopped: bool,
    collisions: usize,
    max_steps: usize,
}

impl EpisodeState<'_> {
    fn check_stop(&mut self) -> bool {
        let view = match render_view(self.plan, &self.pose, &self.sensor) {
            Ok(v) => v,
            Err(_) => return false,
        };
        // a Stop needs a step of its own
        if self.actions.len() < self.max_steps && target_reached(&view, &self.target, &self.field, self.plan, self.radius) {
            self.actions.push(Action::Stop);
            self.stopped = true;
        }
        self.stopped
    }

    fn record(&mut self, pose: Pose, action: Action) {
        self.pose = pose;
        self.actions.push(action);
        self.trajectory.push(pose);
        self.visits.mark(pose.position());
    }

    /// One action outside the point-goal controller.
    fn act(&mut self, action: Action) -> bool {
        let (next, hit) = step(self.plan, &self.pose, action);
        self.collisions += hit as usize;
        self.record(next, action);
        self.check_stop()
    }

    fn remaining(&self) -> usize {
        self.max_steps.saturating_sub(self.actions.len())
    }
}

fn choose(
    candidates: &[Candidate],
    target: &str,
    visits: &VisitGrid,
    cfg: &ScorerConfig,
    transport: &mut Option<&mut dyn VlmTransport>,
) -> Decision {
    match (cfg.kind, transport.as_deref_mut()) {
        (ScorerKind::Heuristic, _) | (_, None) => score_heuristic(candidates, target, visits, cfg),
        (_, Some(t)) => match score_vlm(candidates, target, visits, cfg, t) {
            Ok(d) => d,
            Err(e) => {
                let mut d = score_heuristic(candidates, target, visits, cfg);
                d.scorer_id = "fallback".into();
                d.raw_response = Some(format!("error: {e}"));
                d
            }
        },
    }
}

/// Runs one episode to a `Stop` or the step budget. All failures end the
/// episode unsuccessfully rather than erroring.
pub fn run_episode(plan: &FloorPlan, episode: &Episode, agents: &mut Agents<'_>, cfg: &RunConfig) -> EpisodeResult {
    let field = target_field(plan, &episode.target_category).ok();
    let mut st = EpisodeState {
        plan,
        target: episode.target_category.clone(),
        field: field.clone().unwrap_or_else(|| DistanceField::new(plan, &[])),
        radius: cfg.success_radius,
        sensor: cfg.sensor,
        pose: episode.start,
        actions: Vec::new(),
        trajectory: vec![episode.start],
        visits: VisitGrid::new(plan),
        stopped: false,
        collisions: 0,
        max_steps: cfg.max_steps,
    };
    st.visits.mark(episode.start.position());
    let mut memory = OccupancyMemory::new(plan);
    let mut decisions = Vec::new();
    let mut imagination = cfg.imagination.clone();
    imagination.rng_seed ^= episode.seed.rotate_left(17) ^ cfg.seed;

    let done = field.is_none() || st.check_stop();
    if !done {
        // every round takes at least one action, so the budget bounds the loop
        let mut round = 0u64;
        while st.remaining() > 0 && cfg.max_replans.is_none_or(|n| round < n as u64) {
            round += 1;
            let salt = round << 8;
            let model = agents.model.filter(|_| cfg.use_waypoint_model);
            let candidates = match (cfg.use_imagination, model) {
                (false, _) => current_view_candidates(plan, &st.pose, cfg.hop_radius, &cfg.sensor),
                (true, Some(m)) => make_candidates(plan, &st.pose, m, &imagination, &cfg.sensor, salt),
                (true, None) => hop_candidates(plan, &st.pose, cfg.hop_radius, &imagination, &cfg.sensor, salt),
            };
            let Ok(candidates) = candidates else {
                if st.act(Action::TurnLeft) {
                    break;
                }
                continue;
            };
            let decision = choose(&candidates, &st.target, &st.visits, &cfg.scorer, &mut agents.transport);
            let chosen = &candidates[decision.index()];
            let approach = target_approach(plan, &chosen.imagined, &st.target, cfg.scorer.recognition_range);
            let goal = approach.map_or(chosen.waypoint_pose.position(), |(g, _)| g);
            decisions.push(DecisionRecord { step: st.actions.len(), decision, goal });

            let budget = cfg.subgoal_budget.min(st.remaining());
            let before = st.actions.len();
            let start = st.pose;
            let out = {
                let st = &mut st;
                navigate_to(plan, &start, goal, &mut memory, budget, &cfg.sensor, &cfg.nav, |p, a| {
                    st.record(*p, a);
                    st.check_stop()
                })
            };
            st.collisions += out.collisions;
            if st.stopped {
                break;
            }
            if st.actions.len() == before {
                // no progress possible toward this goal; look elsewhere
                if st.remaining() == 0 || st.act(Action::TurnLeft) {
                    break;
                }
                continue;
            }
            // face a sighted target so it can be confirmed
            if let (true, Some((_, hit))) = (out.reached, approach) {
                for _ in 0..6 {
                    if st.remaining() == 0 {
                        break;
                    }
                    let a = steer(&st.pose, hit);
                    if a == Action::MoveAhead || st.act(a) {
                        break;
                    }
                }
                if st.stopped {
                    break;
                }
            }
        }
    }
    let moves = st.actions.iter().filter(|a| **a == Action::MoveAhead).count();
    let final_distance = st.field.distance_at(plan, st.pose.position());
    EpisodeResult {
        episode_id: episode.id.clone(),
        target_category: episode.target_category.clone(),
        success: st.stopped && final_distance.is_some_and(|d| d <= cfg.success_radius),
        path_length: MOVE_STEP * (moves - st.collisions) as f64,
        gt_length: episode.gt_path_length,
        steps: st.actions.len(),
        stop_issued: st.stopped,
        final_distance,
        collisions: st.collisions,
        actions: st.actions,
        trajectory: st.trajectory,
        decisions,
    }
}
