use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::ops::Range;

use super::{generate_floorplan, Cell, DistanceField, FloorPlan, Pose, WorldSpec};
use crate::error::{Error, WorldError};

/// Starts closer than this to the target are never sampled.
pub const MIN_START_DISTANCE: f64 = 2.0;

pub const EPISODE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub floorplan_id: String,
    pub floorplan_seed: u64,
    pub seed: u64,
    pub start: Pose,
    pub target_category: String,
    /// Geodesic distance from start to the nearest target instance.
    pub gt_path_length: f64,
}

/// Distance field whose sources are the approach cells of every instance of
/// `category`.
pub fn target_field(plan: &FloorPlan, category: &str) -> Result<DistanceField, WorldError> {
    let sources: Vec<Cell> = plan.instances(category).flat_map(|o| plan.approach_cells(o)).collect();
    if sources.is_empty() {
        return Err(WorldError::NoTarget(category.to_string()));
    }
    Ok(DistanceField::new(plan, &sources))
}

/// Samples a start uniformly over free cells at least [`MIN_START_DISTANCE`]
/// from every instance of `target_category`.
pub fn make_episode(plan: &FloorPlan, seed: u64, target_category: &str) -> Result<Episode, WorldError> {
    let field = target_field(plan, target_category)?;
    let eligible: Vec<(Cell, f64)> = plan
        .free_cells()
        .filter_map(|c| field.distance(c).map(|d| (c, d)))
        .filter(|&(_, d)| d >= MIN_START_DISTANCE)
        .collect();
    if eligible.is_empty() {
        return Err(WorldError::NoValidStart {
            category: target_category.to_string(),
            min_distance: MIN_START_DISTANCE,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_E915_0DE5);
    let (cell, dist) = eligible[rng.random_range(0..eligible.len())];
    let heading = 30.0 * rng.random_range(0..12) as f64;
    let c = plan.center(cell);
    Ok(Episode {
        id: format!("{}-ep{seed:06}", plan.id()),
        floorplan_id: plan.id(),
        floorplan_seed: plan.rng_seed(),
        seed,
        start: Pose::new(c.x, c.y, heading),
        target_category: target_category.to_string(),
        gt_path_length: dist,
    })
}

/// A batch of episodes in file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSet {
    pub version: u32,
    pub episodes: Vec<Episode>,
}

impl EpisodeSet {
    pub fn new(episodes: Vec<Episode>) -> Self {
        Self { version: EPISODE_VERSION, episodes }
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let set: EpisodeSet = serde_json::from_str(s)?;
        if set.version != EPISODE_VERSION {
            return Err(Error::Version { kind: "episodes", found: set.version, expected: EPISODE_VERSION });
        }
        Ok(set)
    }
}

/// Draws `count` episodes on `plan`, each with a target category chosen
/// uniformly among the categories present. Fails with `SpecInfeasible` on a
/// plan without objects.
pub fn sample_episodes(plan: &FloorPlan, seed: u64, count: usize) -> Result<Vec<Episode>, WorldError> {
    let categories: Vec<&str> = plan.categories().into_iter().collect();
    if categories.is_empty() {
        return Err(WorldError::SpecInfeasible(format!("{} has no objects to search for", plan.id())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > count * 20 {
            return Err(WorldError::SpecInfeasible(format!("{} cannot host {count} episodes", plan.id())));
        }
        let category = categories[rng.random_range(0..categories.len())];
        let ep_seed = rng.random::<u32>() as u64;
        match make_episode(plan, ep_seed, category) {
            Ok(ep) => out.push(ep),
            Err(WorldError::NoValidStart { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Generates one plan per seed and samples `per_plan` episodes on each,
/// seeding the episode draw with the plan seed.
pub fn build_split(
    spec: &WorldSpec,
    seeds: Range<u64>,
    per_plan: usize,
) -> Result<(Vec<FloorPlan>, Vec<Episode>), WorldError> {
    let mut plans = Vec::with_capacity(seeds.end.saturating_sub(seeds.start) as usize);
    let mut episodes = Vec::new();
    for seed in seeds {
        let plan = generate_floorplan(seed, spec)?;
        episodes.extend(sample_episodes(&plan, seed, per_plan)?);
        plans.push(plan);
    }
    Ok((plans, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::geodesic_distance;

    #[test]
    fn forced_geometry_gives_exact_length() {
        // With 1.5 m cells the free cells sit 0, 1.5 and 3.0 m from the couch's
        // approach cell, so exactly one start is eligible.
        let plan = FloorPlan::from_ascii(&["######", "#...c#", "######"], 1.5, &[('c', "couch")]).unwrap();
        for seed in 0..5 {
            let ep = make_episode(&plan, seed, "couch").unwrap();
            assert_eq!(ep.gt_path_length, 3.0);
            assert_eq!((ep.start.x, ep.start.y), (2.25, 2.25));
        }
    }

    #[test]
    fn absent_category_is_no_target() {
        let plan = generate_floorplan(1, &WorldSpec::default()).unwrap();
        assert_eq!(make_episode(&plan, 0, "zebra"), Err(WorldError::NoTarget("zebra".into())));
    }

    #[test]
    fn tiny_room_has_no_valid_start() {
        let plan = FloorPlan::from_ascii(&["#####", "#..c#", "#####"], 0.25, &[('c', "couch")]).unwrap();
        assert!(matches!(make_episode(&plan, 0, "couch"), Err(WorldError::NoValidStart { .. })));
    }

    #[test]
    fn objectless_plan_cannot_host_episodes() {
        let spec = WorldSpec { objects_per_room: (0, 0), ..WorldSpec::default() };
        let plan = generate_floorplan(2, &spec).unwrap();
        assert!(matches!(sample_episodes(&plan, 0, 3), Err(WorldError::SpecInfeasible(_))));
    }

    #[test]
    fn gt_length_is_min_over_instances() {
        let plan = generate_floorplan(11, &WorldSpec::default()).unwrap();
        for ep in sample_episodes(&plan, 5, 10).unwrap() {
            let best = plan
                .instances(&ep.target_category)
                .flat_map(|o| plan.approach_cells(o))
                .filter_map(|c| geodesic_distance(&plan, &ep.start, plan.center(c)).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert_eq!(best, ep.gt_path_length);
        }
    }
}
