//! Next-waypoint prediction: a compact regressor from a forward view to the
//! relative pose an expert would occupy a few steps later.

mod demos;
mod model;

use serde::{Deserialize, Serialize};

use crate::world::{angle_diff, Pose};

pub use demos::{collect_demos, read_jsonl, write_jsonl, DemoPair, DemoSet, DemoStats, ExpertPolicy};
pub use model::{
    featurize, predict, train, FeatureSpec, Hyper, Layer, Regressor, TrainReport, WaypointModel, MODEL_VERSION,
};

pub const MAX_TURN_DEG: f64 = 30.0;
pub const DEFAULT_MAX_HOP: f64 = 3.5;
/// Frames nearer than this to an obstacle are dropped from demonstrations.
pub const MIN_VIEW_DEPTH: f64 = 0.3;
pub const DEFAULT_SAMPLING_STEP: usize = 11;

/// Pose change in the agent frame: `dx` to the left, `dy` forward, `theta`
/// counter-clockwise in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeWaypoint {
    pub dx: f64,
    pub dy: f64,
    pub theta: f64,
}

impl RelativeWaypoint {
    pub const ZERO: Self = Self { dx: 0.0, dy: 0.0, theta: 0.0 };

    pub fn new(dx: f64, dy: f64, theta: f64) -> Self {
        Self { dx, dy, theta }
    }

    pub fn hop(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Within the turn, forward and hop limits (hop up to rounding).
    pub fn is_valid(&self, max_hop: f64) -> bool {
        self.theta.abs() <= MAX_TURN_DEG && self.dy >= 0.0 && self.hop() <= max_hop * (1.0 + 1e-12)
    }

    /// Nearest waypoint satisfying the turn, forward and hop limits.
    pub fn clamped(&self, max_hop: f64) -> Self {
        let theta = self.theta.clamp(-MAX_TURN_DEG, MAX_TURN_DEG);
        let dy = self.dy.max(0.0);
        let mut dx = self.dx;
        let hop = dx.hypot(dy);
        let (dx, dy) = if hop > max_hop {
            let s = max_hop / hop;
            dx *= s;
            (dx, dy * s)
        } else {
            (dx, dy)
        };
        Self { dx, dy, theta }
    }
}

/// World pose reached by moving `wp` from `pose`.
pub fn apply_waypoint(pose: &Pose, wp: &RelativeWaypoint) -> Pose {
    let a = pose.heading.to_radians();
    let (c, s) = (a.cos(), a.sin());
    // forward = (c, s), left = (-s, c)
    Pose::new(pose.x + wp.dy * c - wp.dx * s, pose.y + wp.dy * s + wp.dx * c, pose.heading + wp.theta)
}

/// `target` expressed in the frame of `origin`; inverse of [`apply_waypoint`].
pub fn relative_waypoint(origin: &Pose, target: &Pose) -> RelativeWaypoint {
    let a = origin.heading.to_radians();
    let (c, s) = (a.cos(), a.sin());
    let (ex, ey) = (target.x - origin.x, target.y - origin.y);
    RelativeWaypoint { dx: -ex * s + ey * c, dy: ex * c + ey * s, theta: angle_diff(origin.heading, target.heading) }
}
