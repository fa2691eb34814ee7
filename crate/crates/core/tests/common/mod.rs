//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls into the search code under test.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewnav::world::{Cell, FloorPlan};

/// Random obstacle grid with a closed border.
pub fn random_plan(seed: u64, width: usize, height: usize, density: f64) -> FloorPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<String> = (0..height)
        .map(|r| {
            (0..width)
                .map(|c| {
                    let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                    if border || rng.random::<f64>() < density {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect()
        })
        .collect();
    let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
    FloorPlan::from_ascii(&refs, 0.25, &[]).unwrap()
}

/// Length `a + b·√2` kept as integers so comparisons are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Surd {
    pub a: i64,
    pub b: i64,
}

impl Surd {
    pub fn less(self, o: Surd) -> bool {
        // a1 + b1√2 < a2 + b2√2  <=>  p < q√2
        let (p, q) = (self.a - o.a, o.b - self.b);
        match (p.signum(), q.signum()) {
            (_, 0) => p < 0,
            (0, s) => s > 0,
            (-1, 1) => true,
            (1, -1) => false,
            (1, 1) => p * p < 2 * q * q,
            _ => p * p > 2 * q * q,
        }
    }

    pub fn meters(self, cell_size: f64) -> f64 {
        cell_size * (self.a as f64 + self.b as f64 * std::f64::consts::SQRT_2)
    }
}

/// Bellman-Ford relaxation over all free cells until nothing changes.
/// Diagonal moves need both side cells free.
pub fn brute_force_distances(plan: &FloorPlan, source: Cell) -> Vec<Option<Surd>> {
    let (w, h) = (plan.width() as i64, plan.height() as i64);
    let free = |c: i64, r: i64| c >= 0 && r >= 0 && c < w && r < h && plan.is_free(Cell::new(c as usize, r as usize));
    let mut dist: Vec<Option<Surd>> = vec![None; (w * h) as usize];
    if !free(source.col as i64, source.row as i64) {
        return dist;
    }
    dist[source.row * w as usize + source.col] = Some(Surd { a: 0, b: 0 });
    loop {
        let mut changed = false;
        for r in 0..h {
            for c in 0..w {
                let Some(d) = dist[(r * w + c) as usize] else { continue };
                for dc in -1i64..=1 {
                    for dr in -1i64..=1 {
                        if (dc, dr) == (0, 0) || !free(c + dc, r + dr) {
                            continue;
                        }
                        let diag = dc != 0 && dr != 0;
                        if diag && !(free(c + dc, r) && free(c, r + dr)) {
                            continue;
                        }
                        let nd = if diag { Surd { a: d.a, b: d.b + 1 } } else { Surd { a: d.a + 1, b: d.b } };
                        let slot = &mut dist[((r + dr) * w + c + dc) as usize];
                        if slot.is_none_or(|old| nd.less(old)) {
                            *slot = Some(nd);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Compares `geodesic_distance` with the brute-force oracle on `plans`
/// random 32x32 grids, `pairs` endpoint pairs each. Returns the number of
/// comparisons and the mismatches found.
pub fn geodesic_trials(plans: u64, pairs: usize) -> (usize, Vec<String>) {
    use viewnav::world::{geodesic_distance, Pose};
    let mut checked = 0;
    let mut bad = Vec::new();
    for seed in 0..plans {
        let density = 0.1 + 0.25 * (seed % 6) as f64 / 5.0;
        let plan = random_plan(seed, 32, 32, density);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for _ in 0..pairs {
            let from = Cell::new(rng.random_range(0..32), rng.random_range(0..32));
            let to = Cell::new(rng.random_range(0..32), rng.random_range(0..32));
            let oracle = brute_force_distances(&plan, from)[to.row * 32 + to.col]
                .filter(|_| plan.is_free(to))
                .map(|s| s.meters(plan.cell_size()));
            let p = plan.center(from);
            let got = geodesic_distance(&plan, &Pose::new(p.x, p.y, 0.0), plan.center(to)).unwrap();
            checked += 1;
            if got != oracle {
                bad.push(format!("seed {seed} {from:?} -> {to:?}: got {got:?}, oracle {oracle:?}"));
            }
        }
    }
    (checked, bad)
}

pub mod golden {
    //! Fixture candidates and the recorded replay caches under
    //! `tests/golden`. `UPDATE_GOLDEN=1` rewrites them.

    use std::fs;
    use std::path::PathBuf;

    use viewnav::imagination::ImaginationConfig;
    use viewnav::planner::{build_prompt, hop_candidates, request_body, request_key, Candidate};
    use viewnav::sensor::SensorParams;
    use viewnav::world::{generate_floorplan, FloorPlan, Pose, WorldSpec};

    pub const MODEL: &str = "gpt-4o-mini";
    pub const WELL_FORMED: &str = r#"{"Reason":"couch likely near TV","Choice":"C"}"#;
    pub const MALFORMED: &str = "Choice: Z";

    pub fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
    }

    pub fn updating() -> bool {
        std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1")
    }

    pub fn fixture() -> (FloorPlan, Vec<Candidate>) {
        let plan = generate_floorplan(3, &WorldSpec::default()).unwrap();
        let c = plan.center(plan.free_cells().nth(400).unwrap());
        let cands = hop_candidates(
            &plan,
            &Pose::new(c.x, c.y, 15.0),
            2.0,
            &ImaginationConfig::oracle(),
            &SensorParams::default(),
            0,
        )
        .unwrap();
        (plan, cands)
    }

    pub fn chat_response(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    /// Writes the replay caches: the "tv" prompt answers well-formed JSON,
    /// every attempt of the "bed" prompt answers `Choice: Z`.
    pub fn write_replay_caches(cands: &[Candidate], retry_limit: u32) {
        let ok = dir().join("replay_ok");
        let bad = dir().join("replay_bad");
        for d in [&ok, &bad] {
            fs::create_dir_all(d).unwrap();
        }
        let tv = build_prompt(cands, "tv").unwrap();
        let key = request_key(&request_body(&tv, MODEL, 0));
        fs::write(ok.join(format!("{key}.response")), chat_response(WELL_FORMED)).unwrap();
        let bed = build_prompt(cands, "bed").unwrap();
        for attempt in 0..retry_limit {
            let key = request_key(&request_body(&bed, MODEL, attempt));
            fs::write(bad.join(format!("{key}.response")), chat_response(MALFORMED)).unwrap();
        }
    }

    /// Compares `actual` with the stored golden file, or rewrites it.
    pub fn check(name: &str, actual: &str) -> Result<(), String> {
        let path = dir().join(name);
        if updating() {
            fs::create_dir_all(dir()).unwrap();
            fs::write(&path, actual).unwrap();
            return Ok(());
        }
        let expected = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if expected == actual {
            Ok(())
        } else {
            Err(format!("{name} differs from the golden copy"))
        }
    }
}
