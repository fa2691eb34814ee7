use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{relative_waypoint, RelativeWaypoint, DEFAULT_MAX_HOP, MAX_TURN_DEG, MIN_VIEW_DEPTH};
use crate::controller::{steer, step, Action, TURN_DEG};
use crate::error::{Error, TrainError};
use crate::sensor::{render_view, walk_ray, SensorParams, View};
use crate::world::{target_field, DistanceField, Episode, FloorPlan, Point, Pose};

/// Scripted shortest-path follower on the true map. It steers toward the
/// furthest path cell in line of sight, which smooths the 8-connected path
/// into 30-degree-quantized turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertPolicy {
    /// Path cells considered when looking for a line-of-sight target.
    pub lookahead: usize,
    pub max_steps: usize,
    /// Pairs whose hop exceeds this are dropped.
    pub max_hop: f64,
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        Self { lookahead: 8, max_steps: 500, max_hop: DEFAULT_MAX_HOP }
    }
}

fn line_of_sight(plan: &FloorPlan, from: Point, to: Point) -> bool {
    let len = from.distance(&to);
    if len < 1e-9 {
        return true;
    }
    let heading = (to.y - from.y).atan2(to.x - from.x).to_degrees();
    let mut clear = true;
    walk_ray(from, heading, plan.cell_size(), len, |c, r, _| {
        clear = plan.is_free_signed(c, r);
        !clear
    });
    clear
}

impl ExpertPolicy {
    /// Poses visited while walking to the nearest approach cell of the field's
    /// sources, starting with `start`. Stops on arrival or after `max_steps`.
    pub fn trajectory(&self, plan: &FloorPlan, start: &Pose, field: &DistanceField) -> (Vec<Pose>, bool) {
        let mut poses = vec![*start];
        let mut pose = *start;
        // consecutive collisions, and cautious moves left after the last one
        let (mut blocked, mut careful) = (0usize, 0usize);
        for _ in 0..self.max_steps {
            let Some(here) = plan.cell_of(pose.position()) else { break };
            match field.distance(here) {
                Some(0.0) => return (poses, true),
                None => break,
                _ => {}
            }
            let action = if blocked >= 2 {
                unstick(plan, &pose, field)
            } else {
                let path = field.path_from(plan, here);
                let horizon = if careful > 0 { 1 } else { self.lookahead.max(1) }.min(path.len() - 1);
                let target = (1..=horizon)
                    .rev()
                    .map(|k| plan.center(path[k]))
                    .find(|p| line_of_sight(plan, pose.position(), *p))
                    .unwrap_or_else(|| plan.center(here));
                steer(&pose, target)
            };
            let (next, collided) = step(plan, &pose, action);
            if collided {
                blocked += 1;
                careful = 4;
            } else if action == Action::MoveAhead {
                blocked = 0;
                careful = careful.saturating_sub(1);
            }
            pose = next;
            poses.push(pose);
        }
        let done = plan.cell_of(pose.position()).and_then(|c| field.distance(c)) == Some(0.0);
        (poses, done)
    }
}

/// Turn toward, or take, the unobstructed step that gets closest to the
/// field's sources, preferring smaller turns.
fn unstick(plan: &FloorPlan, pose: &Pose, field: &DistanceField) -> Action {
    let mut best: Option<(f64, usize, Action)> = None;
    for k in 0..12usize {
        // 0, +30, -30, +60, ... so that smaller turns come first
        let turns = k.div_ceil(2);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let probe = pose.rotated(sign * TURN_DEG * turns as f64);
        let (next, collided) = step(plan, &probe, Action::MoveAhead);
        if collided {
            continue;
        }
        let Some(d) = field.distance_at(plan, next.position()) else { continue };
        let first = match (turns, sign > 0.0) {
            (0, _) => Action::MoveAhead,
            (_, true) => Action::TurnLeft,
            (_, false) => Action::TurnRight,
        };
        if best.is_none_or(|(bd, bt, _)| d < bd || (d == bd && turns < bt)) {
            best = Some((d, turns, first));
        }
    }
    best.map_or(Action::TurnLeft, |(_, _, a)| a)
}

/// One training example: the view at step `t` of trajectory `trajectory`
/// and the pose `sampling_step` steps later in that view's frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoPair {
    pub trajectory: usize,
    pub t: usize,
    pub sampling_step: usize,
    pub view: View,
    pub target: RelativeWaypoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemoStats {
    pub trajectories: usize,
    pub unfinished_trajectories: usize,
    pub candidate_pairs: usize,
    pub kept: usize,
    pub dropped_depth: usize,
    pub dropped_angle: usize,
    pub dropped_backward: usize,
    pub dropped_hop: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub pairs: Vec<DemoPair>,
    pub stats: DemoStats,
}

/// Walks the expert through every episode and pairs each frame with the
/// pose `t_step` steps later, dropping frames too close to an obstacle and
/// targets that turn too far, move backwards or hop too far.
pub fn collect_demos(
    plans: &[FloorPlan],
    episodes: &[Episode],
    t_step: usize,
    expert: &ExpertPolicy,
    sensor: &SensorParams,
) -> Result<DemoSet, TrainError> {
    if t_step == 0 {
        return Err(TrainError::BadHyper("sampling step must be at least 1".into()));
    }
    let by_id: HashMap<String, &FloorPlan> = plans.iter().map(|p| (p.id(), p)).collect();
    let mut fields: HashMap<(String, String), DistanceField> = HashMap::new();
    let mut stats = DemoStats::default();
    let mut pairs = Vec::new();
    for (traj, ep) in episodes.iter().enumerate() {
        let plan = by_id.get(&ep.floorplan_id).ok_or_else(|| {
            TrainError::BadHyper(format!("episode {} refers to unknown floor plan {}", ep.id, ep.floorplan_id))
        })?;
        let key = (ep.floorplan_id.clone(), ep.target_category.clone());
        if !fields.contains_key(&key) {
            fields.insert(key.clone(), target_field(plan, &ep.target_category)?);
        }
        let (poses, done) = expert.trajectory(plan, &ep.start, &fields[&key]);
        stats.trajectories += 1;
        stats.unfinished_trajectories += (!done) as usize;
        for t in 0..poses.len().saturating_sub(t_step) {
            stats.candidate_pairs += 1;
            let view = render_view(plan, &poses[t], sensor)?;
            if view.min_depth() < MIN_VIEW_DEPTH {
                stats.dropped_depth += 1;
                continue;
            }
            let target = relative_waypoint(&poses[t], &poses[t + t_step]);
            if target.theta.abs() > MAX_TURN_DEG {
                stats.dropped_angle += 1;
            } else if target.dy < 0.0 {
                stats.dropped_backward += 1;
            } else if target.hop() > expert.max_hop {
                stats.dropped_hop += 1;
            } else {
                stats.kept += 1;
                pairs.push(DemoPair { trajectory: traj, t, sampling_step: t_step, view, target });
            }
        }
    }
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(DemoSet { pairs, stats })
}

/// One JSON object per line.
pub fn write_jsonl(pairs: &[DemoPair], mut out: impl Write) -> Result<(), Error> {
    for p in pairs {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<DemoPair>, Error> {
    let mut pairs = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            pairs.push(serde_json::from_str(&line)?);
        }
    }
    Ok(pairs)
}
