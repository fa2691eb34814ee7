mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use viewnav::imagination::ImaginationConfig;
use viewnav::planner::{HttpTransport, RecordingTransport, ReplayTransport, ScorerKind, VlmTransport};
use viewnav::runner::{
    ablate, evaluate, render_trajectory_png, sweep_sampling_step, write_report, Agents, Report, RunConfig, SWEEP_STEPS,
};
use viewnav::sensor::SensorParams;
use viewnav::waypoint::{collect_demos, read_jsonl, train, write_jsonl, ExpertPolicy, Hyper, WaypointModel};
use viewnav::world::{build_split, WorldSpec};

use store::{load_config, load_worlds, save_worlds};

#[derive(Parser)]
#[command(name = "viewnav", version, about = "Object-goal navigation by imagining views at predicted waypoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate floor plans and episodes into a world directory.
    GenerateWorlds {
        #[arg(long)]
        out: PathBuf,
        /// First plan seed.
        #[arg(long, default_value_t = 0)]
        from: u64,
        /// One past the last plan seed.
        #[arg(long, default_value_t = 50)]
        to: u64,
        #[arg(long, default_value_t = 4)]
        per_plan: usize,
        /// World generator settings (TOML or JSON).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Record expert demonstrations as JSON lines.
    CollectDemos {
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sampling step between a frame and its target pose.
        #[arg(short = 'T', long = "sampling-step", default_value_t = 11)]
        sampling_step: usize,
        #[arg(long)]
        expert: Option<PathBuf>,
    },
    /// Train the waypoint regressor on recorded demonstrations.
    TrainW2i {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training settings (TOML or JSON).
        #[arg(long)]
        hyper: Option<PathBuf>,
    },
    /// Run every episode of a world directory and write a report.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the imagination, waypoint and corruption variants.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one waypoint model per sampling step.
    #[command(name = "sweep-T")]
    SweepT {
        /// World directory the demonstrations are collected on.
        #[arg(long)]
        train_worlds: PathBuf,
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_STEPS)]
        steps: Vec<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        hyper: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one episode of a stored report as a top-down PNG.
    RenderTrajectory {
        #[arg(long)]
        worlds: PathBuf,
        /// Report directory written by `eval`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        episode: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    worlds: PathBuf,
    /// Run settings (TOML or JSON); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Waypoint model; without one, waypoints are fixed-length hops.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    scorer: Option<Scorer>,
    /// Response cache read in replay mode and written in vlm mode.
    #[arg(long)]
    replay_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scorer {
    Heuristic,
    Vlm,
    Replay,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateWorlds { out, from, to, per_plan, spec } => {
            let spec: WorldSpec = load_config(spec.as_deref())?;
            let (plans, episodes) = build_split(&spec, from..to, per_plan)?;
            save_worlds(&out, &plans, &episodes)?;
            println!("{} plans, {} episodes -> {}", plans.len(), episodes.len(), out.display());
        }
        Command::CollectDemos { worlds, out, sampling_step, expert } => {
            let (plans, episodes) = load_worlds(&worlds)?;
            let expert: ExpertPolicy = load_config(expert.as_deref())?;
            let set = collect_demos(&plans, &episodes, sampling_step, &expert, &SensorParams::default())?;
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_jsonl(&set.pairs, std::io::BufWriter::new(file))?;
            println!("{}", serde_json::to_string_pretty(&set.stats)?);
        }
        Command::TrainW2i { demos, out, hyper } => {
            let file = fs::File::open(&demos).with_context(|| format!("opening {}", demos.display()))?;
            let pairs = read_jsonl(std::io::BufReader::new(file))?;
            let hyper: Hyper = load_config(hyper.as_deref())?;
            let model = train(&pairs, &hyper)?;
            fs::write(&out, model.to_json()?)?;
            let r = &model.report;
            println!(
                "train {} test {}: test MSE {:.4}, mean baseline {:.4}, ratio {:.3}",
                r.n_train,
                r.n_test,
                r.test_loss,
                r.baseline_test_loss,
                r.test_loss / r.baseline_test_loss
            );
        }
        Command::Eval { run, out } => {
            let report = eval(&run)?;
            write_report(&report, &out)?;
            println!("{}: SR {:.3} SPL {:.3} over {} episodes", report.variant, report.success_rate, report.spl, report.episodes);
        }
        Command::Ablate { run, out } => {
            let (plans, episodes) = load_worlds(&run.worlds)?;
            let base = run_config(&run)?;
            let mut models = BTreeMap::new();
            if let Some(path) = &run.model {
                let m = load_model(path)?;
                models.insert(m.sampling_step, m);
            }
            let step = models.keys().next().copied().unwrap_or(base.sampling_step);
            let grid = ablation_grid(&base, step, !models.is_empty());
            let (table, reports) = ablate(&plans, &episodes, &grid, &models)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("ablation.json"), serde_json::to_string_pretty(&table)?)?;
            fs::write(out.join("ablation.txt"), table.to_text())?;
            for (k, report) in reports.iter().enumerate() {
                write_report(report, &out.join(format!("{k}-{}", report.variant.replace('/', "-"))))?;
            }
            print!("{}", table.to_text());
        }
        Command::SweepT { train_worlds, worlds, steps, config, hyper, out } => {
            let (tp, te) = load_worlds(&train_worlds)?;
            let (ep, ee) = load_worlds(&worlds)?;
            let base: RunConfig = load_config(config.as_deref())?;
            let hyper: Hyper = load_config(hyper.as_deref())?;
            let (table, models) =
                sweep_sampling_step(&tp, &te, &ExpertPolicy::default(), &hyper, &steps, &ep, &ee, &base)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&table)?)?;
            fs::write(out.join("sweep.txt"), table.to_text())?;
            for (t, m) in &models {
                fs::write(out.join(format!("model-T{t}.json")), m.to_json()?)?;
            }
            print!("{}", table.to_text());
        }
        Command::RenderTrajectory { worlds, report, episode, out } => {
            let (plans, episodes) = load_worlds(&worlds)?;
            let path = report.join("episodes").join(format!("{episode}.json"));
            let result = serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
            let ep = episodes.iter().find(|e| e.id == episode).with_context(|| format!("no episode {episode}"))?;
            let plan = plans.iter().find(|p| p.id() == ep.floorplan_id).context("episode plan missing")?;
            fs::write(&out, render_trajectory_png(plan, &result, ep)?)?;
        }
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<WaypointModel> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(WaypointModel::from_json(&s)?)
}

fn run_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = load_config(run.config.as_deref())?;
    if let Some(s) = run.scorer {
        cfg.scorer.kind = match s {
            Scorer::Heuristic => ScorerKind::Heuristic,
            Scorer::Vlm => ScorerKind::Vlm,
            Scorer::Replay => ScorerKind::Replay,
        };
    }
    if let Some(dir) = &run.replay_dir {
        cfg.scorer.vlm.replay_dir = Some(dir.clone());
    }
    if run.model.is_none() {
        cfg.use_waypoint_model = false;
    }
    Ok(cfg)
}

fn eval(run: &RunArgs) -> Result<Report> {
    let (plans, episodes) = load_worlds(&run.worlds)?;
    let cfg = run_config(run)?;
    let model = run.model.as_deref().map(load_model).transpose()?;
    let mut transport: Option<Box<dyn VlmTransport>> = match cfg.scorer.kind {
        ScorerKind::Heuristic => None,
        ScorerKind::Replay => {
            let Some(dir) = cfg.scorer.vlm.replay_dir.clone() else {
                bail!("replay scoring needs --replay-dir or scorer.vlm.replay_dir");
            };
            Some(Box::new(ReplayTransport::new(dir)))
        }
        ScorerKind::Vlm => {
            let http = HttpTransport::from_env(&cfg.scorer.vlm);
            match cfg.scorer.vlm.replay_dir.clone() {
                Some(dir) => Some(Box::new(RecordingTransport::new(http, dir)?)),
                None => Some(Box::new(http)),
            }
        }
    };
    let mut agents = Agents { model: model.as_ref(), transport: transport.as_mut().map(|t| t.as_mut() as &mut dyn VlmTransport) };
    Ok(evaluate(&plans, &episodes, &cfg, &mut agents)?)
}

/// No imagination, then fixed hops and (with a model) predicted waypoints,
/// each with oracle and corrupted views.
fn ablation_grid(base: &RunConfig, step: usize, with_model: bool) -> Vec<RunConfig> {
    let oracle = ImaginationConfig::oracle();
    let corrupted = base.imagination.clone();
    let mut grid = vec![RunConfig { use_imagination: false, use_waypoint_model: false, ..base.clone() }];
    let mut w2i = vec![false];
    if with_model {
        w2i.push(true);
    }
    for use_waypoint_model in w2i {
        for imagination in [&oracle, &corrupted] {
            grid.push(RunConfig {
                use_imagination: true,
                use_waypoint_model,
                imagination: imagination.clone(),
                sampling_step: step,
                ..base.clone()
            });
        }
    }
    grid
}
