//! World directories and config files.
//!
//! A world directory holds `worlds/<plan id>.json` and, per plan,
//! `episodes/<plan id>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use viewnav::world::{Episode, EpisodeSet, FloorPlan};

pub fn save_worlds(dir: &Path, plans: &[FloorPlan], episodes: &[Episode]) -> Result<()> {
    for sub in ["worlds", "episodes"] {
        fs::create_dir_all(dir.join(sub)).with_context(|| format!("creating {}", dir.join(sub).display()))?;
    }
    for p in plans {
        let id = p.id();
        fs::write(dir.join("worlds").join(format!("{id}.json")), p.to_json()?)?;
        let own: Vec<Episode> = episodes.iter().filter(|e| e.floorplan_id == id).cloned().collect();
        fs::write(dir.join("episodes").join(format!("{id}.json")), EpisodeSet::new(own).to_json()?)?;
    }
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    Ok(paths)
}

/// Plans and their episodes, both in plan-id order.
pub fn load_worlds(dir: &Path) -> Result<(Vec<FloorPlan>, Vec<Episode>)> {
    let mut plans = Vec::new();
    for p in json_files(&dir.join("worlds"))? {
        plans.push(FloorPlan::from_json(&fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?);
    }
    let mut episodes = Vec::new();
    for p in json_files(&dir.join("episodes"))? {
        let set = EpisodeSet::from_json(&fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))?;
        episodes.extend(set.episodes);
    }
    Ok((plans, episodes))
}

/// Reads a TOML or JSON file by extension; defaults when `path` is `None`.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&s).with_context(|| format!("parsing {}", path.display())),
        Some("json") => serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display())),
        _ => bail!("{}: config files must end in .toml or .json", path.display()),
    }
}
