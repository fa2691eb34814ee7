use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_episode, Agents, EpisodeResult, RunConfig};
use crate::error::{Error, MetricsError};
use crate::waypoint::{collect_demos, train, ExpertPolicy, Hyper, WaypointModel};
use crate::world::{Episode, FloorPlan};

pub const REPORT_VERSION: u32 = 1;

/// Mean over episodes of `S_i * l_i / max(p_i, l_i)`; 0 for no episodes.
pub fn spl(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if let Some((index, r)) = results.iter().enumerate().find(|(_, r)| !(r.gt_length > 0.0)) {
        return Err(MetricsError::BadEpisode { index, length: r.gt_length });
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = results
        .iter()
        .filter(|r| r.success)
        .map(|r| r.gt_length / r.path_length.max(r.gt_length))
        .fold(0.0, |a, b| a + b);
    Ok(total / results.len() as f64)
}

pub fn success_rate(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub variant: String,
    pub config: RunConfig,
    pub episodes: usize,
    pub success_rate: f64,
    pub spl: f64,
    pub results: Vec<EpisodeResult>,
}

impl Report {
    pub fn from_results(config: &RunConfig, results: Vec<EpisodeResult>) -> Result<Self, Error> {
        Ok(Self {
            version: REPORT_VERSION,
            variant: config.variant_name(),
            config: config.clone(),
            episodes: results.len(),
            success_rate: success_rate(&results),
            spl: spl(&results)?,
            results,
        })
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let r: Report = serde_json::from_str(s)?;
        if r.version != REPORT_VERSION {
            return Err(Error::Version { kind: "report", found: r.version, expected: REPORT_VERSION });
        }
        Ok(r)
    }
}

/// Runs every episode in order on its floor plan.
pub fn evaluate(
    plans: &[FloorPlan],
    episodes: &[Episode],
    cfg: &RunConfig,
    agents: &mut Agents<'_>,
) -> Result<Report, Error> {
    cfg.validate()?;
    let by_id: HashMap<String, &FloorPlan> = plans.iter().map(|p| (p.id(), p)).collect();
    let mut results = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let plan = by_id
            .get(&ep.floorplan_id)
            .ok_or_else(|| Error::Format(format!("episode {} refers to unknown floor plan {}", ep.id, ep.floorplan_id)))?;
        results.push(run_episode(plan, ep, agents, cfg));
    }
    Report::from_results(cfg, results)
}

/// Writes `report.json`, one `episodes/<id>.json` per result and one
/// `trajectories/<id>.jsonl` of poses per result.
pub fn write_report(report: &Report, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir.join("episodes"))?;
    fs::create_dir_all(dir.join("trajectories"))?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    for r in &report.results {
        fs::write(dir.join("episodes").join(format!("{}.json", r.episode_id)), serde_json::to_string_pretty(r)?)?;
        let mut lines = String::new();
        for p in &r.trajectory {
            lines.push_str(&serde_json::to_string(p)?);
            lines.push('\n');
        }
        fs::write(dir.join("trajectories").join(format!("{}.jsonl", r.episode_id)), lines)?;
    }
    Ok(())
}

/// Per-episode results stored by [`write_report`], in file-name order.
pub fn read_episode_results(dir: &Path) -> Result<Vec<EpisodeResult>, Error> {
    let mut paths: Vec<_> = fs::read_dir(dir.join("episodes"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.sort();
    paths.into_iter().map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?)).collect()
}

/// `(success rate, SPL)` recomputed from the stored per-episode files.
pub fn reaggregate(dir: &Path) -> Result<(f64, f64), Error> {
    let results = read_episode_results(dir)?;
    Ok((success_rate(&results), spl(&results)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub sampling_step: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub spl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let w = self.rows.iter().map(|r| r.variant.len()).max().unwrap_or(0).max(7);
        let mut out = format!("{:<w$}  {:>3}  {:>8}  {:>6}  {:>6}\n", "variant", "T", "episodes", "SR", "SPL");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:>3}  {:>8}  {:>6.3}  {:>6.3}",
                r.variant, r.sampling_step, r.episodes, r.success_rate, r.spl
            );
        }
        out
    }
}

/// One heuristic-scorer evaluation per configuration on the same episodes.
/// Each configuration uses the model trained with its sampling step.
pub fn ablate(
    plans: &[FloorPlan],
    episodes: &[Episode],
    grid: &[RunConfig],
    models: &BTreeMap<usize, WaypointModel>,
) -> Result<(AblationTable, Vec<Report>), Error> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for cfg in grid {
        let model = models.get(&cfg.sampling_step);
        if cfg.use_imagination && cfg.use_waypoint_model && model.is_none() {
            return Err(Error::Format(format!("no waypoint model for sampling step {}", cfg.sampling_step)));
        }
        let report = evaluate(plans, episodes, cfg, &mut Agents::heuristic(model))?;
        rows.push(AblationRow {
            variant: report.variant.clone(),
            sampling_step: cfg.sampling_step,
            episodes: report.episodes,
            success_rate: report.success_rate,
            spl: report.spl,
        });
        reports.push(report);
    }
    Ok((AblationTable { rows }, reports))
}

/// Sampling steps swept by default.
pub const SWEEP_STEPS: [usize; 5] = [8, 10, 11, 12, 15];

/// Trains one waypoint model per sampling step on the demonstration split,
/// then evaluates `base` with each on the evaluation split.
#[allow(clippy::too_many_arguments)]
pub fn sweep_sampling_step(
    train_plans: &[FloorPlan],
    train_episodes: &[Episode],
    expert: &ExpertPolicy,
    hyper: &Hyper,
    steps: &[usize],
    eval_plans: &[FloorPlan],
    eval_episodes: &[Episode],
    base: &RunConfig,
) -> Result<(AblationTable, BTreeMap<usize, WaypointModel>), Error> {
    let mut models = BTreeMap::new();
    for &t in steps {
        let demos = collect_demos(train_plans, train_episodes, t, expert, &base.sensor)?;
        models.insert(t, train(&demos.pairs, hyper)?);
    }
    let grid: Vec<RunConfig> = steps
        .iter()
        .map(|&t| RunConfig { use_imagination: true, use_waypoint_model: true, sampling_step: t, ..base.clone() })
        .collect();
    let (table, _) = ablate(eval_plans, eval_episodes, &grid, &models)?;
    Ok((table, models))
}
