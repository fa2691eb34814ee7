//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Run with `cargo test -p viewnav-core --test acceptance --offline`.
//! The process exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use viewnav::controller::{step, Action, MOVE_STEP};
use viewnav::imagination::ImaginationConfig;
use viewnav::planner::{
    build_prompt, request_body, request_key, score_heuristic, score_vlm, ReplayTransport, ScorerConfig, ScorerKind,
    VisitGrid, VlmTransport, LABELS,
};
use viewnav::runner::{
    evaluate, spl, success_rate, sweep_sampling_step, write_report, Agents, EpisodeResult, Report, RunConfig,
    SWEEP_STEPS,
};
use viewnav::sensor::{render_view, SensorParams};
use viewnav::waypoint::{
    collect_demos, train, ExpertPolicy, Hyper, WaypointModel, MAX_TURN_DEG, MIN_VIEW_DEPTH,
};
use viewnav::world::{build_split, generate_floorplan, Episode, FloorPlan, Pose, WorldSpec};

/// Demonstration split and the fixed benchmark splits.
const TRAIN_SEEDS: std::ops::Range<u64> = 1000..1040;
const TRAIN_PER_PLAN: usize = 25;
const BENCH_SEEDS: std::ops::Range<u64> = 0..25;
const E2E_SEEDS: std::ops::Range<u64> = 0..50;
const PER_PLAN: usize = 4;

type Outcome = Result<String, String>;

struct Ctx {
    train: (Vec<FloorPlan>, Vec<Episode>),
    bench: (Vec<FloorPlan>, Vec<Episode>),
    model: Option<WaypointModel>,
    reports: Vec<Report>,
}

fn main() -> ExitCode {
    let spec = WorldSpec::default();
    let mut ctx = Ctx {
        train: build_split(&spec, TRAIN_SEEDS, TRAIN_PER_PLAN).expect("training split"),
        bench: build_split(&spec, BENCH_SEEDS, PER_PLAN).expect("benchmark split"),
        model: None,
        reports: Vec::new(),
    };
    let criteria: [(&str, Duration, fn(&mut Ctx) -> Outcome); 9] = [
        ("1 geodesic oracle equivalence", secs(10), geodesic),
        ("2 SPL correctness", secs(5), spl_suite),
        ("3 demo filters and training", secs(120), filters_and_training),
        ("4 ordering with oracle imagination", secs(300), oracle_ordering),
        ("5 corrupted below oracle", secs(300), corruption),
        ("6 sampling-step sweep", secs(900), sweep),
        ("7 VLM protocol replay", secs(5), protocol),
        ("8 end-to-end determinism", secs(600), determinism),
        ("9 no-clip and budget invariants", secs(300), invariants),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let t = Instant::now();
        let outcome = run(&mut ctx);
        let took = t.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > limit => Err(format!("{msg}; took {took:.1?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS {name} ({took:.1?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({took:.1?}): {msg}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn geodesic(_: &mut Ctx) -> Outcome {
    let (checked, bad) = common::geodesic_trials(100, 10);
    check(bad.is_empty(), format!("{checked} pairs on 100 plans, {} mismatches {:?}", bad.len(), bad.first()))
}

fn result(success: bool, gt: f64, path: f64) -> EpisodeResult {
    EpisodeResult {
        episode_id: String::new(),
        target_category: String::new(),
        success,
        path_length: path,
        gt_length: gt,
        steps: 0,
        stop_issued: success,
        final_distance: None,
        collisions: 0,
        actions: Vec::new(),
        trajectory: Vec::new(),
        decisions: Vec::new(),
    }
}

fn spl_suite(_: &mut Ctx) -> Outcome {
    let cases = [
        (spl(&[result(false, 5.0, 3.0)]), 0.0),
        (spl(&[result(true, 5.0, 5.0)]), 1.0),
        (spl(&[result(true, 5.0, 10.0)]), 0.5),
    ];
    for (got, want) in cases {
        if got.as_ref().ok() != Some(&want) {
            return Err(format!("SPL {got:?}, expected {want}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for set in 0..1000 {
        let n = rng.random_range(1..40);
        let rs: Vec<_> = (0..n)
            .map(|_| result(rng.random_bool(0.5), rng.random_range(0.1..40.0), rng.random_range(0.0..120.0)))
            .collect();
        let v = spl(&rs).map_err(|e| e.to_string())?;
        let sr = success_rate(&rs);
        if !(0.0..=1.0).contains(&v) || v > sr + 1e-12 {
            return Err(format!("set {set}: SPL {v} with SR {sr}"));
        }
    }
    Ok("3 cases, 1000 fuzzed sets".into())
}

fn filters_and_training(ctx: &mut Ctx) -> Outcome {
    let sensor = SensorParams::default();
    let (plans, episodes) = &ctx.train;
    let set = collect_demos(plans, episodes, 11, &ExpertPolicy::default(), &sensor).map_err(|e| e.to_string())?;
    let mut violations = 0;
    for p in &set.pairs {
        // recompute both filters from the stored rays and pose
        let nearest = p.view.rays.iter().map(|r| r.depth).fold(f64::INFINITY, f64::min);
        let turn = p.target.theta.abs();
        if nearest < MIN_VIEW_DEPTH || turn > MAX_TURN_DEG {
            violations += 1;
        }
    }
    // the stored views are what the sensor renders at the stored pose
    let plan = &plans[0];
    let first = set.pairs.iter().find(|p| p.trajectory == 0).ok_or("no pairs from the first trajectory")?;
    if render_view(plan, &first.view.pose, &sensor).map_err(|e| e.to_string())? != first.view {
        return Err("stored view differs from a fresh render".into());
    }
    let model = train(&set.pairs, &Hyper::default()).map_err(|e| e.to_string())?;
    let ratio = model.report.test_loss / model.report.baseline_test_loss;
    let msg = format!(
        "{} of {} pairs kept, {violations} filter violations; test MSE {:.4} vs mean baseline {:.4} (ratio {ratio:.3}, need <= 0.5)",
        set.stats.kept, set.stats.candidate_pairs, model.report.test_loss, model.report.baseline_test_loss
    );
    ctx.model = Some(model);
    check(violations == 0 && ratio <= 0.5, msg)
}

fn run(ctx: &Ctx, cfg: &RunConfig) -> Result<Report, String> {
    let (plans, episodes) = &ctx.bench;
    evaluate(plans, episodes, cfg, &mut Agents::heuristic(ctx.model.as_ref())).map_err(|e| e.to_string())
}

fn needs_model(ctx: &Ctx) -> Result<(), String> {
    ctx.model.as_ref().map(|_| ()).ok_or_else(|| "no trained waypoint model (criterion 3 did not train)".into())
}

fn oracle_ordering(ctx: &mut Ctx) -> Outcome {
    needs_model(ctx)?;
    let oracle = ImaginationConfig::oracle();
    let w2i = run(ctx, &RunConfig { imagination: oracle.clone(), ..RunConfig::default() })?;
    let hop = run(ctx, &RunConfig { use_waypoint_model: false, imagination: oracle, ..RunConfig::default() })?;
    let none = run(ctx, &RunConfig { use_imagination: false, ..RunConfig::default() })?;
    let (a, b, c) = (w2i.success_rate, hop.success_rate, none.success_rate);
    let msg = format!(
        "SR imagine+w2i {a:.3} > imagine+hop {b:.3} > no imagination {c:.3} (margins {:+.3}, {:+.3}; {} episodes)",
        a - b,
        b - c,
        w2i.episodes
    );
    ctx.reports.extend([w2i, hop, none]);
    check(a > b && b > c, msg)
}

fn corruption(ctx: &mut Ctx) -> Outcome {
    needs_model(ctx)?;
    let mut msgs = Vec::new();
    let mut ok = true;
    for w2i in [true, false] {
        let oracle = run(
            ctx,
            &RunConfig { use_waypoint_model: w2i, imagination: ImaginationConfig::oracle(), ..RunConfig::default() },
        )?;
        let corrupted = run(ctx, &RunConfig { use_waypoint_model: w2i, ..RunConfig::default() })?;
        ok &= corrupted.success_rate < oracle.success_rate;
        msgs.push(format!(
            "{}: corrupted {:.3} < oracle {:.3}",
            if w2i { "w2i" } else { "hop" },
            corrupted.success_rate,
            oracle.success_rate
        ));
        ctx.reports.extend([oracle, corrupted]);
    }
    check(ok, msgs.join("; "))
}

fn sweep(ctx: &mut Ctx) -> Outcome {
    let (tp, te) = &ctx.train;
    let (bp, be) = &ctx.bench;
    let base = RunConfig::default();
    let go = || {
        sweep_sampling_step(tp, te, &ExpertPolicy::default(), &Hyper::default(), &SWEEP_STEPS, bp, be, &base)
            .map_err(|e| e.to_string())
    };
    let (first, models_a) = go()?;
    let (second, models_b) = go()?;
    let complete = first.rows.len() == SWEEP_STEPS.len()
        && first.rows.iter().zip(SWEEP_STEPS).all(|(r, t)| {
            r.sampling_step == t && r.episodes == be.len() && r.success_rate.is_finite() && r.spl.is_finite()
        });
    let same = first == second && first.to_text() == second.to_text() && models_a == models_b;
    let rows: Vec<String> =
        first.rows.iter().map(|r| format!("T={} SR {:.3} SPL {:.3}", r.sampling_step, r.success_rate, r.spl)).collect();
    check(complete && same, format!("complete {complete}, identical reruns {same}: {}", rows.join(", ")))
}

fn protocol(_: &mut Ctx) -> Outcome {
    use common::golden;
    let (plan, cands) = golden::fixture();
    let cfg = ScorerConfig { kind: ScorerKind::Replay, ..ScorerConfig::default() };
    let visits = VisitGrid::new(&plan);

    let p = build_prompt(&cands, "tv").map_err(|e| e.to_string())?;
    golden::check("prompt_system.txt", &p.system)?;
    golden::check("prompt_user.txt", &p.user)?;
    golden::check("prompt_image.sha256", &hex::encode(Sha256::digest(&p.image_png)))?;
    let keys: Vec<String> = (0..3).map(|a| request_key(&request_body(&p, golden::MODEL, a))).collect();
    golden::check("request_keys.txt", &(keys.join("\n") + "\n"))?;
    let again = build_prompt(&golden::fixture().1, "tv").map_err(|e| e.to_string())?;
    if again != p || request_body(&again, golden::MODEL, 0) != request_body(&p, golden::MODEL, 0) {
        return Err("identical inputs gave different prompt bytes".into());
    }

    let mut ok_t = ReplayTransport::new(golden::dir().join("replay_ok"));
    let d = score_vlm(&cands, "tv", &visits, &cfg, &mut ok_t).map_err(|e| e.to_string())?;
    if (d.choice.as_str(), d.reason.as_str()) != ("C", "couch likely near TV") {
        return Err(format!("well-formed replay parsed as {d:?}"));
    }

    struct Counting(ReplayTransport, u32);
    impl VlmTransport for Counting {
        fn send(&mut self, body: &str) -> Result<String, viewnav::error::ScorerError> {
            self.1 += 1;
            self.0.send(body)
        }
    }
    let mut bad_t = Counting(ReplayTransport::new(golden::dir().join("replay_bad")), 0);
    let d = score_vlm(&cands, "bed", &visits, &cfg, &mut bad_t).map_err(|e| e.to_string())?;
    let expected = score_heuristic(&cands, "bed", &visits, &cfg).choice;
    if bad_t.1 != 3 || d.scorer_id != "fallback" || d.choice != expected || !LABELS.contains(&d.choice.as_str()) {
        return Err(format!("malformed replay: {} sends, decision {d:?}, heuristic {expected}", bad_t.1));
    }
    Ok("golden prompts, well-formed parse, 3 sends then fallback".into())
}

fn determinism(ctx: &mut Ctx) -> Outcome {
    needs_model(ctx)?;
    let (plans, episodes) = build_split(&WorldSpec::default(), E2E_SEEDS, PER_PLAN).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default();
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut texts = Vec::new();
    let mut slowest = Duration::ZERO;
    for dir in &dirs {
        let t = Instant::now();
        let report = evaluate(&plans, &episodes, &cfg, &mut Agents::heuristic(ctx.model.as_ref()))
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        write_report(&report, dir.path()).map_err(|e| e.to_string())?;
        texts.push(report.to_json().map_err(|e| e.to_string())?);
        ctx.reports.push(report);
    }
    let files = tree(dirs[0].path())?;
    let same_files = files == tree(dirs[1].path())?;
    check(
        texts[0] == texts[1] && same_files && slowest < secs(300),
        format!(
            "{} episodes, reports identical {}, {} written files identical {same_files}, slowest run {slowest:.1?}",
            episodes.len(),
            texts[0] == texts[1],
            files.len()
        ),
    )
}

/// Relative path and bytes of every file under `root`.
fn tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = e.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

const ACTIONS: [Action; 6] =
    [Action::Stop, Action::MoveAhead, Action::TurnLeft, Action::TurnRight, Action::LookUp, Action::LookDown];

fn invariants(ctx: &mut Ctx) -> Outcome {
    let spec = WorldSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut steps = 0usize;
    for seed in 0..20 {
        let plan = generate_floorplan(seed, &spec).map_err(|e| e.to_string())?;
        let free: Vec<_> = plan.free_cells().collect();
        for _ in 0..10 {
            let c = plan.center(free[rng.random_range(0..free.len())]);
            let mut pose = Pose::new(c.x, c.y, rng.random_range(0.0..360.0));
            for _ in 0..500 {
                let a = ACTIONS[rng.random_range(0..ACTIONS.len())];
                let (next, _) = step(&plan, &pose, a);
                let cell = plan.cell_of(next.position()).ok_or("agent left the map")?;
                if !plan.is_free(cell) {
                    return Err(format!("{a:?} from {pose:?} entered occupied cell {cell:?}"));
                }
                pose = next;
                steps += 1;
            }
        }
    }

    if ctx.reports.is_empty() {
        let variants = [
            RunConfig { use_imagination: false, ..RunConfig::default() },
            RunConfig { use_waypoint_model: false, ..RunConfig::default() },
        ];
        for cfg in variants {
            let r = run(ctx, &cfg)?;
            ctx.reports.push(r);
        }
    }
    // every benchmark plan is also in the end-to-end split
    let (plans, all) = build_split(&spec, E2E_SEEDS, PER_PLAN).map_err(|e| e.to_string())?;
    let mut episodes = 0;
    for report in &ctx.reports {
        let limit = report.config.max_steps;
        if limit > 500 {
            return Err(format!("{} allows {limit} steps", report.variant));
        }
        for r in &report.results {
            episodes += 1;
            let ep = all.iter().find(|e| e.id == r.episode_id).ok_or("unknown episode")?;
            let plan = plans.iter().find(|p| p.id() == ep.floorplan_id).ok_or("unknown plan")?;
            replay(plan, ep, r, limit).map_err(|e| format!("{} episode {}: {e}", report.variant, r.episode_id))?;
        }
    }
    Ok(format!("{steps} fuzzed actions without entering an occupied cell; {episodes} episodes within budget with p_i matching the action log"))
}

/// Replays the action log on the true map and checks the logged poses and
/// p_i against it.
fn replay(plan: &FloorPlan, ep: &Episode, r: &EpisodeResult, limit: usize) -> Result<(), String> {
    if r.steps > limit || r.steps != r.actions.len() {
        return Err(format!("{} steps, {} actions, limit {limit}", r.steps, r.actions.len()));
    }
    let mut pose = ep.start;
    let mut poses = vec![pose];
    let mut walked = 0usize;
    for &a in &r.actions {
        if a == Action::Stop {
            continue;
        }
        let (next, hit) = step(plan, &pose, a);
        walked += (a == Action::MoveAhead && !hit) as usize;
        pose = next;
        poses.push(pose);
    }
    if poses != r.trajectory {
        return Err("logged trajectory differs from the replayed action log".into());
    }
    let p = MOVE_STEP * walked as f64;
    if (r.path_length - p).abs() > 1e-9 {
        return Err(format!("p_i {} but the action log walks {p}", r.path_length));
    }
    Ok(())
}
