//! Command-line front end: `run`, `bench`, `render` and `scene-gen`.
//!
//! Exit codes are 0 on clean completion, 2 for configuration or input
//! errors and 3 for failures while working.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::config::{Overrides, PlannerKind, RunConfig};
use crate::error::Error;
use crate::explore::ExploreMapParams;
use crate::perception::{render_panorama, select_active_target};
use crate::prompt::{annotate_fpv, render_bev, ChatEndpoint, Planner, RemotePlanner};
use crate::sim::{
    compute_metrics, episode_dir, exploration_map_covering, fill_unknown_reachable, frontier_views, generate_scene,
    planning_map, run_episode, sense, EpisodeResult, FailureKind, Pipeline, Scene,
};
use crate::splat::{integrate_unobserved_shaped, render_cloud, GaussianMap, Pose, SplatCloud};
use crate::verify::{RemoteVerdictProvider, RuleVerdictProvider, VerdictProvider};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gsnav",
    version,
    about = "Object-goal navigation with a Gaussian-splat memory in synthetic scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode on a scene file.
    Run(RunArgs),
    /// Run a batch of seeded episodes and print SR/SPL.
    Bench(BenchArgs),
    /// Write the panorama, exploration map, BEV and first-person views.
    Render(RenderArgs),
    /// Generate scene files.
    SceneGen(SceneGenArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_planner)]
    pub planner: Option<PlannerKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Detector false-positive probability per call.
    #[arg(long)]
    pub fp: Option<f64>,
    /// Detector miss probability per object.
    #[arg(long = "fn")]
    pub fn_rate: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub success_dist: Option<f64>,
    /// Save the final exploration map with the route and the splat map.
    #[arg(long)]
    pub dump_trajectory: bool,
    /// Save viewpoint-optimization traces.
    #[arg(long)]
    pub trace_opt: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Directory of scene files to use instead of generated scenes.
    #[arg(long)]
    pub scene_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Splat map dump to render from.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Scene to scan from its start when no map is given.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Agent position and heading as `x,y,yaw_deg`.
    #[arg(long, value_parser = parse_pose)]
    pub pose: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct SceneGenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scenes with consecutive seeds; more than one writes into `--out` as a directory.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rooms: Option<usize>,
    #[arg(long)]
    pub target: Option<String>,
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    match s {
        "mock" => Ok(PlannerKind::Mock),
        "remote" => Ok(PlannerKind::Remote),
        _ => Err(format!("unknown planner `{s}` (mock or remote)")),
    }
}

fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected x,y,yaw_deg".to_string())
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr, reports to stdout.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            print!("{report}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

/// Runs a parsed command and returns its stdout report.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Render(a) => cmd_render(a),
        Command::SceneGen(a) => cmd_scene_gen(a),
    }
}

fn overrides(c: &CommonArgs) -> Overrides {
    Overrides {
        out_dir: c.out_dir.clone(),
        seed: c.seed,
        dump_trajectory: c.dump_trajectory.then_some(true),
        trace_opt: c.trace_opt.then_some(true),
        planner: c.planner,
        endpoint: c.endpoint.clone(),
        model: c.model.clone(),
        fp: c.fp,
        fn_rate: c.fn_rate,
        max_steps: c.max_steps,
        success_dist: c.success_dist,
        ..Default::default()
    }
}

fn resolve(c: &CommonArgs, extra: Overrides) -> Result<RunConfig, CliError> {
    let mut o = overrides(c);
    o.scene = extra.scene;
    o.episodes = extra.episodes;
    o.scene_dir = extra.scene_dir;
    RunConfig::resolve(c.config.as_deref(), &o).map_err(config_err)
}

/// Planner and verifier factory; remote endpoints are checked up front so a
/// missing API key fails before any episode work.
enum Agents {
    Mock,
    Remote(ChatEndpoint),
}

impl Agents {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        match cfg.planner.kind {
            PlannerKind::Mock => Ok(Agents::Mock),
            PlannerKind::Remote => ChatEndpoint::from_env(&cfg.planner.endpoint, &cfg.planner.model)
                .map(Agents::Remote)
                .map_err(config_err),
        }
    }

    fn episode(&self, cfg: &RunConfig, scene: &Scene, seed: u64, out_dir: PathBuf) -> crate::Result<EpisodeResult> {
        let (planner, mut verdict): (Box<dyn Planner>, Box<dyn VerdictProvider>) = match self {
            Agents::Mock => (Box::new(cfg.mock_planner(seed)), Box::new(RuleVerdictProvider)),
            Agents::Remote(ep) => (
                Box::new(RemotePlanner { endpoint: ep.clone() }),
                Box::new(RemoteVerdictProvider {
                    endpoint: ep.clone(),
                    target_category: scene.target_category.clone(),
                }),
            ),
        };
        run_episode(
            scene,
            &cfg.episode_for(seed),
            Pipeline {
                planner: planner.as_ref(),
                verdict: verdict.as_mut(),
                out_dir: Some(out_dir),
                trace_opt: cfg.trace_opt,
                dump_trajectory: cfg.dump_trajectory,
            },
        )
    }
}

fn load_scene(path: &Path) -> Result<Scene, CliError> {
    Scene::load(path).map_err(|e| match e {
        Error::Io { .. } => config_err(e),
        e => CliError::Config(format!("scene {}: {e}", path.display())),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime_err(Error::io(dir, e)))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| runtime_err(Error::io(path, e)))
}

pub fn cmd_run(a: &RunArgs) -> Result<String, CliError> {
    let cfg = resolve(
        &a.common,
        Overrides {
            scene: a.scene.clone(),
            ..Default::default()
        },
    )?;
    let agents = Agents::new(&cfg)?;
    let path = cfg
        .scene
        .clone()
        .ok_or_else(|| CliError::Config("no scene given (--scene or `scene` in the config)".into()))?;
    let scene = load_scene(&path)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("config.toml"), &cfg.to_toml())?;
    let dir = episode_dir(&cfg.out_dir, 0);
    let r = agents
        .episode(&cfg, &scene, cfg.seed, dir.clone())
        .map_err(runtime_err)?;
    Ok(format!("{}# written to {}\n", r.to_metrics_text(), dir.display()))
}

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| config_err(Error::io(dir, e)))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Fixed-format batch table: one row per episode, a summary line and the
/// failure histogram.
pub fn bench_table(rows: &[(u64, String, EpisodeResult)]) -> crate::Result<String> {
    let m = compute_metrics(&rows.iter().map(|r| r.2.clone()).collect::<Vec<_>>())?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4}  {:>6}  {:<24}  {:<7}  {:>5}  {:>8}  {:>10}  {:>6}  failure",
        "ep", "seed", "scene", "success", "steps", "path_m", "shortest_m", "spl"
    );
    for (i, (seed, name, r)) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i:>4}  {seed:>6}  {name:<24}  {:<7}  {:>5}  {:>8.3}  {:>10.3}  {:>6.3}  {}",
            if r.success { "yes" } else { "no" },
            r.steps,
            r.path_length,
            r.shortest_length,
            r.spl,
            r.failure_kind.map_or("-", FailureKind::as_str)
        );
    }
    let _ = writeln!(s, "SR {:.3}  SPL {:.3}  episodes {}", m.sr, m.spl, m.episodes);
    let count = |k: FailureKind| rows.iter().filter(|r| r.2.failure_kind == Some(k)).count();
    let (unreachable, budget) = (count(FailureKind::Unreachable), count(FailureKind::StepBudget));
    let _ = writeln!(s, "failures:");
    let _ = writeln!(s, "  reasoning   {}", count(FailureKind::Reasoning));
    let _ = writeln!(s, "  detection   {}", count(FailureKind::Detection));
    let _ = writeln!(
        s,
        "  other       {} (unreachable {unreachable}, step_budget {budget})",
        unreachable + budget
    );
    Ok(s)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<String, CliError> {
    let cfg = resolve(
        &a.common,
        Overrides {
            episodes: a.episodes,
            scene_dir: a.scene_dir.clone(),
            ..Default::default()
        },
    )?;
    let n = cfg.bench.episodes;
    if n == 0 {
        return Err(CliError::Config("episodes must be at least 1".into()));
    }
    let agents = Agents::new(&cfg)?;
    let mut jobs: Vec<(u64, String, Scene)> = Vec::with_capacity(n);
    match &cfg.bench.scene_dir {
        Some(dir) => {
            let files = scene_files(dir)?;
            if files.len() < n {
                return Err(CliError::Config(format!(
                    "{} holds {} scenes, {n} requested",
                    dir.display(),
                    files.len()
                )));
            }
            for (i, f) in files.iter().take(n).enumerate() {
                let name = f
                    .file_name()
                    .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                jobs.push((cfg.seed + i as u64, name, load_scene(f)?));
            }
        }
        None => {
            for i in 0..n as u64 {
                let seed = cfg.seed + i;
                let scene = generate_scene(seed, &cfg.bench.scenes)
                    .map_err(|e| runtime_err(format!("scene generation for seed {seed}: {e}")))?;
                jobs.push((seed, format!("generated:{seed}"), scene));
            }
        }
    }
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("config.toml"), &cfg.to_toml())?;
    let results: Vec<crate::Result<EpisodeResult>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (seed, _, scene))| agents.episode(&cfg, scene, *seed, episode_dir(&cfg.out_dir, i)))
        .collect();
    let mut rows = Vec::with_capacity(n);
    for (i, ((seed, name, _), r)) in jobs.into_iter().zip(results).enumerate() {
        let r = r.map_err(|e| runtime_err(format!("episode {i} (seed {seed}, {name}) failed: {e}")))?;
        rows.push((seed, name, r));
    }
    let table = bench_table(&rows).map_err(runtime_err)?;
    write_file(&cfg.out_dir.join("bench.txt"), &table)?;
    Ok(table)
}

/// Builds a splat map by turning once around at the scene's start.
pub fn scan_scene(scene: &Scene, cfg: &RunConfig) -> crate::Result<GaussianMap> {
    let ep = &cfg.episode;
    let k = ep.sensor.intrinsics()?;
    let mut map = GaussianMap::new();
    let turns = (360.0 / ep.turn_deg).round().max(1.0) as usize;
    let center = Vector3::new(scene.start.pos[0], scene.start.pos[1], scene.floor_z + ep.camera_height);
    for i in 0..turns {
        let yaw = (scene.start.yaw + i as f64 * ep.turn_deg).to_radians();
        let pose = Pose::from_yaw_pitch(center, yaw, 0.0);
        let f = sense(scene, &pose, &k);
        integrate_unobserved_shaped(
            &mut map,
            &f.rgb,
            &f.depth,
            &pose,
            &k,
            ep.integrate_stride,
            ep.coverage_threshold,
            ep.seed_shape,
        )?;
    }
    Ok(map)
}

pub fn cmd_render(a: &RenderArgs) -> Result<String, CliError> {
    let cfg = resolve(
        &a.common,
        Overrides {
            scene: a.scene.clone(),
            ..Default::default()
        },
    )?;
    let ep = &cfg.episode;
    let scene = match &cfg.scene {
        Some(p) => Some(load_scene(p)?),
        None => None,
    };
    let map = match (&a.map, &scene) {
        (Some(p), _) => GaussianMap::load(p).map_err(config_err)?,
        (None, Some(s)) => scan_scene(s, &cfg).map_err(runtime_err)?,
        (None, None) => return Err(CliError::Config("render needs --map or --scene".into())),
    };
    let floor_z = scene.as_ref().map_or(0.0, |s| s.floor_z);
    let [x, y, yaw_deg] = a.pose.unwrap_or_else(|| {
        scene
            .as_ref()
            .map_or([0.0; 3], |s| [s.start.pos[0], s.start.pos[1], s.start.yaw])
    });
    let pose = Pose::from_yaw_pitch(
        Vector3::new(x, y, floor_z + ep.camera_height),
        yaw_deg.to_radians(),
        0.0,
    );
    let out = &cfg.out_dir;
    create_dir(out)?;
    let mut report = String::new();

    let pan = render_panorama(&map, &pose.center(), &ep.panorama).map_err(runtime_err)?;
    let marks: Vec<(f64, f64)> = select_active_target(&pan, &ep.active)
        .map(|t| (t.pitch_deg, t.yaw_deg))
        .into_iter()
        .collect();
    pan.save_png(&out.join("panorama.png"), &marks).map_err(runtime_err)?;
    let _ = writeln!(report, "panorama.png");

    let params = ExploreMapParams {
        floor_height: floor_z,
        agent_height: ep.camera_height,
        ..ep.explore
    };
    let mut raw = exploration_map_covering(&map, &params, &[[x, y]]).map_err(runtime_err)?;
    fill_unknown_reachable(&mut raw, [x, y], ep.blind_radius().map_err(config_err)?);
    raw.save(&out.join("map.pgm"), &[]).map_err(runtime_err)?;
    let _ = writeln!(report, "map.pgm");
    let nav = planning_map(&raw, [x, y], ep.agent_radius);
    let views = frontier_views(&map, &nav, [x, y], floor_z, ep, |_| false).map_err(runtime_err)?;

    let (clusters, trajs): (Vec<_>, Vec<_>) = views.iter().map(|v| (v.cluster.clone(), v.trajectory.clone())).unzip();
    render_bev(&map, &nav, &params, &pose, &[[x, y]], &clusters, &trajs)
        .save_png(&out.join("bev.png"))
        .map_err(runtime_err)?;
    let _ = writeln!(report, "bev.png");

    let k_fpv = ep.fpv_camera.intrinsics().map_err(config_err)?;
    let view = render_cloud(&SplatCloud::from_map(&map), &pose, &k_fpv);
    // gaze marker at the camera itself never lands in the frame
    annotate_fpv(&view, &pose.center(), ep.fpv_tau, 0)
        .save_png(&out.join("fpv.png"))
        .map_err(runtime_err)?;
    let _ = writeln!(report, "fpv.png");
    for v in &views {
        let name = format!("fpv_{:02}.png", v.cluster.id);
        v.fpv.save_png(&out.join(&name)).map_err(runtime_err)?;
        let _ = writeln!(report, "{name}");
    }
    Ok(report)
}

pub fn cmd_scene_gen(a: &SceneGenArgs) -> Result<String, CliError> {
    let base = match &a.config {
        Some(p) => RunConfig::load(p).map_err(config_err)?,
        None => RunConfig::default(),
    };
    let mut spec = base.bench.scenes.clone();
    if let Some(r) = a.rooms {
        spec.rooms_min = r;
        spec.rooms_max = r;
    }
    if a.target.is_some() {
        spec.target_category = a.target.clone();
    }
    spec.validate().map_err(config_err)?;
    if a.count == 0 {
        return Err(CliError::Config("count must be at least 1".into()));
    }
    let mut report = String::new();
    if a.count > 1 {
        create_dir(&a.out)?;
    } else if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    for i in 0..a.count as u64 {
        let seed = a.seed + i;
        let scene = generate_scene(seed, &spec).map_err(runtime_err)?;
        let path = if a.count > 1 {
            a.out.join(format!("scene_{seed:04}.json"))
        } else {
            a.out.clone()
        };
        scene.save(&path).map_err(runtime_err)?;
        let _ = writeln!(
            report,
            "{} rooms {} target {}",
            path.display(),
            scene.rooms.len(),
            scene.target_category
        );
    }
    Ok(report)
}
