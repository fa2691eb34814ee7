use viewnav::runner::{
    evaluate, map_pixel, read_episode_results, reaggregate, render_trajectory, render_trajectory_png, write_report,
    Agents, EpisodeResult, Report, RunConfig, PATH, START, WALL, WAYPOINT,
};
use viewnav::world::{build_split, generate_floorplan, sample_episodes, WorldSpec};

fn small_report() -> (Vec<viewnav::world::FloorPlan>, Vec<viewnav::world::Episode>, Report) {
    let (plans, episodes) = build_split(&WorldSpec::default(), 0..3, 2).unwrap();
    let cfg = RunConfig { use_waypoint_model: false, max_steps: 150, ..RunConfig::default() };
    let report = evaluate(&plans, &episodes, &cfg, &mut Agents::heuristic(None)).unwrap();
    (plans, episodes, report)
}

#[test]
fn stored_episodes_reaggregate_to_the_report() {
    let (_, _, report) = small_report();
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let (sr, spl) = reaggregate(dir.path()).unwrap();
    assert_eq!((sr, spl), (report.success_rate, report.spl));
    let mut stored = read_episode_results(dir.path()).unwrap();
    let mut original = report.results.clone();
    stored.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    original.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    assert_eq!(stored, original);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(Report::from_json(&text).unwrap(), report);
}

#[test]
fn trajectory_files_hold_one_pose_per_line() {
    let (_, _, report) = small_report();
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    let r = &report.results[0];
    let lines = std::fs::read_to_string(dir.path().join("trajectories").join(format!("{}.jsonl", r.episode_id))).unwrap();
    assert_eq!(lines.lines().count(), r.trajectory.len());
}

#[test]
fn rendering_is_deterministic() {
    let (plans, episodes, report) = small_report();
    let r = &report.results[1];
    let ep = episodes.iter().find(|e| e.id == r.episode_id).unwrap();
    let plan = plans.iter().find(|p| p.id() == ep.floorplan_id).unwrap();
    assert_eq!(render_trajectory_png(plan, r, ep).unwrap(), render_trajectory_png(plan, r, ep).unwrap());
}

#[test]
fn empty_trajectory_draws_only_the_start() {
    let plan = generate_floorplan(1, &WorldSpec::default()).unwrap();
    let ep = sample_episodes(&plan, 4, 1).unwrap().remove(0);
    let empty = EpisodeResult {
        episode_id: ep.id.clone(),
        target_category: ep.target_category.clone(),
        success: false,
        path_length: 0.0,
        gt_length: ep.gt_path_length,
        steps: 0,
        stop_issued: false,
        final_distance: None,
        collisions: 0,
        actions: Vec::new(),
        trajectory: Vec::new(),
        decisions: Vec::new(),
    };
    let c = render_trajectory(&plan, &empty, &ep);
    let count = |color| (0..c.width).flat_map(|x| (0..c.height).map(move |y| (x, y))).filter(|&(x, y)| c.get(x, y) == color).count();
    assert_eq!(count(PATH), 0);
    assert_eq!(count(WAYPOINT), 0);
    assert!(count(START) > 0);
}

#[test]
fn trajectory_lies_on_free_pixels() {
    let (plans, episodes, report) = small_report();
    for r in &report.results {
        let ep = episodes.iter().find(|e| e.id == r.episode_id).unwrap();
        let plan = plans.iter().find(|p| p.id() == ep.floorplan_id).unwrap();
        // background without any overlay
        let bare = EpisodeResult { trajectory: Vec::new(), decisions: Vec::new(), ..r.clone() };
        let c = render_trajectory(plan, &bare, ep);
        for pose in &r.trajectory {
            assert!(plan.is_free_point(pose.position()));
            let (x, y) = map_pixel(plan, pose.position());
            assert_ne!(c.get(x as u32, y as u32), WALL, "{pose:?} drawn on a wall pixel");
        }
    }
}
