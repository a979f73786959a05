use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fmm::{arrival_times, grid_shortest_length, plan_local_cells};
use super::scene::Scene;
use super::sensor::{sense, SensedTruth, SensorFrame, Surface};
use crate::error::{Error, Result};
use crate::explore::{
    build_exploration_map_in, cluster_frontiers, extract_frontiers, grid_bounds, Cell, CellState, DistanceField,
    ExploreMap, ExploreMapParams, FrontierCluster,
};
use crate::guidance::{plan_guidance, GuidanceConfig, GuidanceTrajectory};
use crate::perception::{
    render_panorama_cloud, select_active_target, wrap_yaw, ActivePerceptionConfig, PanoramaConfig,
};
use crate::prompt::{
    annotate_fpv, compose_prompt, decide_frontier, draw, render_bev, AnnotatedFrame, CotTemplate, DecisionContext,
    Planner,
};
use crate::splat::{
    integrate_unobserved_shaped, refine_map, render_cloud, CameraIntrinsics, GaussianMap, MapOptConfig, ObservedFrame,
    Pose, RenderedView, SeedShape, SplatCloud,
};
use crate::verify::{detect, verify_target, DetectorConfig, VerdictProvider, VerificationVerdict};
use crate::viewpoint::{
    frontier_point, init_viewpoint, optimize, write_trace_csv, LossWeights, Objective, TraceRow, ViewpointInitConfig,
};

/// Image size and horizontal field of view of a camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_hfov(self.width, self.height, self.hfov_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    /// Success radius around any target instance, meters.
    pub success_dist: f64,
    pub camera_height: f64,
    pub forward_step: f64,
    pub turn_deg: f64,
    pub look_deg: f64,
    /// Collision radius of the agent body, meters.
    pub agent_radius: f64,
    pub sensor: CameraSpec,
    /// Camera used inside viewpoint optimization.
    pub opt_camera: CameraSpec,
    /// Camera for the planner's first-person views.
    pub fpv_camera: CameraSpec,
    pub integrate_stride: usize,
    pub seed_shape: SeedShape,
    /// Rendered opacity at or above which a pixel counts as already mapped.
    pub coverage_threshold: f64,
    /// Photometric refinement iterations against each new frame; 0 disables.
    pub refine_iterations: usize,
    /// Forward moves toward a frontier before a new decision is taken.
    pub replan_steps: usize,
    /// Frontier clusters with fewer member cells are ignored.
    pub min_frontier_cells: usize,
    /// At most this many frontiers (cheapest first) go into one prompt.
    pub max_frontiers: usize,
    pub active_perception: bool,
    /// Opacity below which an FPV pixel is painted as unobserved.
    pub fpv_tau: f64,
    pub template: CotTemplate,
    pub explore: ExploreMapParams,
    pub guidance: GuidanceConfig,
    pub viewpoint_init: ViewpointInitConfig,
    pub weights: LossWeights,
    pub panorama: PanoramaConfig,
    pub active: ActivePerceptionConfig,
    pub detector: DetectorConfig,
    pub map_opt: MapOptConfig,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            success_dist: 1.0,
            camera_height: 0.88,
            forward_step: 0.2,
            turn_deg: 30.0,
            look_deg: 40.0,
            agent_radius: 0.18,
            sensor: CameraSpec {
                width: 160,
                height: 120,
                hfov_deg: 90.0,
            },
            opt_camera: CameraSpec {
                width: 48,
                height: 36,
                hfov_deg: 90.0,
            },
            fpv_camera: CameraSpec {
                width: 160,
                height: 120,
                hfov_deg: 90.0,
            },
            integrate_stride: 4,
            seed_shape: SeedShape::Surface,
            coverage_threshold: 0.5,
            refine_iterations: 0,
            replan_steps: 15,
            min_frontier_cells: 6,
            max_frontiers: 4,
            active_perception: true,
            fpv_tau: 0.3,
            template: CotTemplate::default(),
            explore: ExploreMapParams::default(),
            guidance: GuidanceConfig::default(),
            viewpoint_init: ViewpointInitConfig::default(),
            weights: LossWeights::default(),
            panorama: PanoramaConfig::default(),
            active: ActivePerceptionConfig::default(),
            detector: DetectorConfig::default(),
            map_opt: MapOptConfig::default(),
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    /// Radius around the agent within which the floor is below the sensor's
    /// field of view, plus a small margin.
    pub fn blind_radius(&self) -> Result<f64> {
        let k = self.sensor.intrinsics()?;
        Ok(self.camera_height / ((k.height as f64 / 2.0) / k.fy) + 0.1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be > 0"));
        }
        if !(self.success_dist > 0.0) {
            return Err(Error::invalid("success_dist must be > 0"));
        }
        let positive = [
            self.camera_height,
            self.forward_step,
            self.turn_deg,
            self.look_deg,
            self.agent_radius,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.integrate_stride == 0 || self.max_frontiers == 0 {
            return Err(Error::invalid(
                "episode motion and sampling parameters must be positive",
            ));
        }
        for cam in [self.sensor, self.opt_camera, self.fpv_camera] {
            cam.intrinsics()?;
        }
        self.guidance.validate()?;
        self.viewpoint_init.validate()?;
        self.weights.validate()?;
        self.panorama.intrinsics()?;
        self.active.validate()?;
        self.map_opt.validate()?;
        let d = &self.detector;
        if !(0.0..=1.0).contains(&d.fp) || !(0.0..=1.0).contains(&d.fn_rate) {
            return Err(Error::invalid("detector rates must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Reasoning,
    Detection,
    Unreachable,
    StepBudget,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Reasoning => "reasoning",
            FailureKind::Detection => "detection",
            FailureKind::Unreachable => "unreachable",
            FailureKind::StepBudget => "step_budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    pub path_length: f64,
    pub shortest_length: f64,
    pub spl: f64,
    pub failure_kind: Option<FailureKind>,
    /// Horizontal distance from the stop position to the nearest target.
    pub final_distance: f64,
    pub decisions: usize,
    pub verifications: usize,
    /// Error text when a module failure ended the episode.
    pub note: Option<String>,
}

impl EpisodeResult {
    /// `key = value` lines with fixed formatting.
    pub fn to_metrics_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "success = {}", self.success);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "path_length = {:.6}", self.path_length);
        let _ = writeln!(s, "shortest_length = {:.6}", self.shortest_length);
        let _ = writeln!(s, "spl = {:.6}", self.spl);
        let _ = writeln!(
            s,
            "failure_kind = {}",
            self.failure_kind.map_or("none", FailureKind::as_str)
        );
        let _ = writeln!(s, "final_distance = {:.6}", self.final_distance);
        let _ = writeln!(s, "decisions = {}", self.decisions);
        let _ = writeln!(s, "verifications = {}", self.verifications);
        if let Some(n) = &self.note {
            let _ = writeln!(s, "note = {}", n.replace('\n', " "));
        }
        s
    }
}

pub fn spl(success: bool, shortest: f64, path: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = path.max(shortest);
    if denom <= 0.0 {
        1.0
    } else {
        shortest / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub sr: f64,
    pub spl: f64,
    pub episodes: usize,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::invalid("no episode results"));
    }
    let n = results.len() as f64;
    Ok(Metrics {
        sr: results.iter().filter(|r| r.success).count() as f64 / n,
        spl: results
            .iter()
            .map(|r| spl(r.success, r.shortest_length, r.path_length))
            .sum::<f64>()
            / n,
        episodes: results.len(),
    })
}

/// Ground-truth shortest route (meters) from the start to within the success
/// radius of any target, over the agent-inflated free space.
pub fn shortest_to_target(scene: &Scene, agent_radius: f64, success_dist: f64) -> Option<f64> {
    let m = scene.occupancy(0.05, agent_radius);
    let start = m.cell_of_world(scene.start.pos)?;
    let targets: Vec<_> = scene.targets().map(|(_, o)| o.clone()).collect();
    grid_shortest_length(&m, start, |c| {
        let p = m.world_of_cell(c);
        targets.iter().any(|o| o.distance_xy(p) <= success_dist)
    })
}

/// Planner and verifier handles plus output options for one episode.
pub struct Pipeline<'a> {
    pub planner: &'a dyn Planner,
    pub verdict: &'a mut dyn VerdictProvider,
    pub out_dir: Option<PathBuf>,
    /// Append viewpoint-optimization traces to `trace_opt.csv`.
    pub trace_opt: bool,
    /// Save the final exploration map with the agent's route overlaid.
    pub dump_trajectory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentAction {
    Forward,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
}

enum Stop {
    Done,
    Fail(FailureKind, Option<String>),
}

struct Runner<'s, 'p> {
    scene: &'s Scene,
    cfg: &'s EpisodeConfig,
    pipe: Pipeline<'p>,
    k_sensor: CameraIntrinsics,
    collision: ExploreMap,
    map: GaussianMap,
    pos: [f64; 2],
    yaw: f64,
    pitch: f64,
    steps: usize,
    path_length: f64,
    history: Vec<[f64; 2]>,
    /// Positions at which the agent's blind zone was filled in.
    footprints: Vec<[f64; 2]>,
    /// Positions a forward move was refused at.
    bumps: Vec<[f64; 2]>,
    /// Rejected detections and how far away the agent was at the time.
    rejected: Vec<(Vector3<f64>, f64)>,
    target: Option<Vector3<f64>>,
    /// Floor-plane points of the confirmed target's observed surface.
    target_pts: Vec<[f64; 2]>,
    rng: ChaCha8Rng,
    decisions: usize,
    /// Frontier goals that produced no movement; skipped afterwards.
    dead_goals: Vec<[f64; 2]>,
    verifications: usize,
}

/// Runs one object-goal episode in `scene`.
pub fn run_episode(scene: &Scene, cfg: &EpisodeConfig, pipe: Pipeline<'_>) -> Result<EpisodeResult> {
    cfg.validate()?;
    if let Some(dir) = &pipe.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let trace = dir.join("trace_opt.csv");
        if trace.exists() {
            std::fs::remove_file(&trace).map_err(|e| Error::io(&trace, e))?;
        }
    }
    let shortest = shortest_to_target(scene, cfg.agent_radius, cfg.success_dist);
    let mut r = Runner {
        scene,
        cfg,
        k_sensor: cfg.sensor.intrinsics()?,
        collision: scene.occupancy(0.05, cfg.agent_radius),
        pipe,
        map: GaussianMap::new(),
        pos: scene.start.pos,
        yaw: scene.start.yaw.to_radians(),
        pitch: 0.0,
        steps: 0,
        path_length: 0.0,
        history: vec![scene.start.pos],
        footprints: Vec::new(),
        bumps: Vec::new(),
        rejected: Vec::new(),
        target: None,
        target_pts: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        decisions: 0,
        dead_goals: Vec::new(),
        verifications: 0,
    };
    let stop = match r.observe() {
        Ok(()) => r.run(),
        Err(e) => Stop::Fail(FailureKind::Reasoning, Some(e.to_string())),
    };
    let final_distance = scene
        .targets()
        .map(|(_, o)| o.distance_xy(r.pos))
        .fold(f64::INFINITY, f64::min);
    let (success, failure_kind, note) = match stop {
        Stop::Done if final_distance <= cfg.success_dist => (true, None, None),
        // stopped at a confirmed location that is not a target
        Stop::Done => (false, Some(FailureKind::Detection), None),
        Stop::Fail(k, note) => (false, Some(k), note),
    };
    let shortest_length = shortest.unwrap_or(0.0);
    let result = EpisodeResult {
        success,
        steps: r.steps,
        path_length: r.path_length,
        shortest_length,
        spl: spl(success, shortest_length, r.path_length),
        failure_kind,
        final_distance,
        decisions: r.decisions,
        verifications: r.verifications,
        note,
    };
    if let Some(dir) = r.pipe.out_dir.clone() {
        let path = dir.join("metrics.txt");
        std::fs::write(&path, result.to_metrics_text()).map_err(|e| Error::io(&path, e))?;
        if r.pipe.dump_trajectory {
            if let Ok((raw, _)) = r.maps() {
                let overlay: Vec<Cell> = r.history.iter().filter_map(|p| raw.cell_of_world(*p)).collect();
                raw.save(&dir.join("map.pgm"), &overlay)?;
            }
            r.map.save(&dir.join("splat_map.txt"))?;
        }
    }
    Ok(result)
}

fn rgb_image(view: &RenderedView) -> RgbImage {
    let (w, h) = (view.color.width(), view.color.height());
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        draw::to_rgb8(*view.color.get(x as usize, y as usize))
    })
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

impl Runner<'_, '_> {
    fn pose(&self) -> Pose {
        Pose::from_yaw_pitch(
            Vector3::new(self.pos[0], self.pos[1], self.scene.floor_z + self.cfg.camera_height),
            self.yaw,
            self.pitch,
        )
    }

    fn out(&self, name: &str) -> Option<PathBuf> {
        self.pipe.out_dir.as_ref().map(|d| d.join(name))
    }

    fn run(&mut self) -> Stop {
        let mut rescanned_at: Option<usize> = None;
        loop {
            if self.target.is_some() {
                return self.approach();
            }
            if self.steps >= self.cfg.max_steps {
                return Stop::Fail(FailureKind::StepBudget, None);
            }
            if self.cfg.active_perception {
                if let Err(stop) = self.look_around() {
                    return stop;
                }
                if self.target.is_some() {
                    continue;
                }
            }
            let goal = match self.decide() {
                Ok(Some(g)) => g,
                Ok(None) => {
                    // nothing left to explore from here: one full turn, then give up
                    if rescanned_at == Some(self.decisions) {
                        return Stop::Fail(FailureKind::Reasoning, Some("no frontiers left".into()));
                    }
                    rescanned_at = Some(self.decisions);
                    let turns = (360.0 / self.cfg.turn_deg).round() as usize;
                    for _ in 0..turns {
                        if let Err(stop) = self.act(AgentAction::TurnLeft) {
                            return stop;
                        }
                        if self.target.is_some() {
                            break;
                        }
                    }
                    continue;
                }
                Err(Error::Unreachable(m)) => return Stop::Fail(FailureKind::Unreachable, Some(m)),
                Err(e) => return Stop::Fail(FailureKind::Reasoning, Some(e.to_string())),
            };
            let before = self.pos;
            if let Err(stop) = self.travel(goal, self.cfg.replan_steps, 0.15) {
                return stop;
            }
            if self.target.is_none() && (goal[0] - self.pos[0]).hypot(goal[1] - self.pos[1]) <= 0.15 {
                if let Err(stop) = self.face_unknown() {
                    return stop;
                }
            }
            if before == self.pos {
                self.dead_goals.push(goal);
            }
        }
    }

    /// Senses at the current pose, grows the map and runs the detector.
    fn observe(&mut self) -> Result<()> {
        let pose = self.pose();
        let frame = sense(self.scene, &pose, &self.k_sensor);
        integrate_unobserved_shaped(
            &mut self.map,
            &frame.rgb,
            &frame.depth,
            &pose,
            &self.k_sensor,
            self.cfg.integrate_stride,
            self.cfg.coverage_threshold,
            self.cfg.seed_shape,
        )?;
        if self.cfg.refine_iterations > 0 && !self.map.is_empty() {
            let obs = ObservedFrame {
                rgb: &frame.rgb,
                depth: &frame.depth,
                pose,
                intrinsics: self.k_sensor,
            };
            let mc = MapOptConfig {
                iterations: self.cfg.refine_iterations,
                ..self.cfg.map_opt
            };
            refine_map(&mut self.map, &obs, &mc)?;
        }
        if self.pitch == 0.0
            && self
                .footprints
                .iter()
                .all(|f| (f[0] - self.pos[0]).hypot(f[1] - self.pos[1]) > 0.3)
        {
            self.footprints.push(self.pos);
        }
        if self.target.is_none() {
            self.detect_and_verify(&pose, &frame)?;
        }
        Ok(())
    }

    fn detect_and_verify(&mut self, pose: &Pose, frame: &SensorFrame) -> Result<()> {
        let truth = SensedTruth {
            scene: self.scene,
            frame,
            pose: *pose,
        };
        let dets = detect(
            &truth,
            pose,
            &self.k_sensor,
            &self.scene.target_category,
            &self.cfg.detector,
            &mut self.rng,
        );
        for det in dets {
            if let Some(h) = det.world_hint {
                // a rejected object gets another look once the agent is much closer
                let here = pose.center().xy();
                if self
                    .rejected
                    .iter()
                    .any(|(r, d)| (r - h).xy().norm() < 1.0 && (h.xy() - here).norm() > 0.6 * d)
                {
                    continue;
                }
            }
            let cloud = SplatCloud::from_map(&self.map);
            let scene = self.scene;
            let k = self.k_sensor;
            let category = scene.target_category.clone();
            let dcfg = self.cfg.detector;
            let instance = det.instance;
            let rng = &mut self.rng;
            let mut redetect = |p: &Pose| {
                let found = detect(scene, p, &k, &category, &dcfg, rng);
                found
                    .iter()
                    .find(|d| d.instance.is_some() && d.instance == instance)
                    .or(found.first())
                    .cloned()
            };
            let verdict = verify_target(&cloud, &k, pose, &det, &mut *self.pipe.verdict, &mut redetect)?;
            self.verifications += 1;
            self.save_verification(&verdict)?;
            match verdict.confirmed() {
                Some(p) => {
                    self.target = Some(p);
                    self.target_pts = det
                        .instance
                        .map(|i| surface_points(frame, pose, &k, i))
                        .unwrap_or_default();
                    if self.target_pts.is_empty() {
                        self.target_pts.push([p.x, p.y]);
                    }
                    return Ok(());
                }
                None => {
                    let h = det.world_hint.unwrap_or_else(|| pose.center());
                    self.rejected.push((h, (h - pose.center()).xy().norm()));
                }
            }
        }
        Ok(())
    }

    fn save_verification(&self, v: &VerificationVerdict) -> Result<()> {
        let Some(dir) = self.out(&format!("verify_{:03}", self.verifications)) else {
            return Ok(());
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut csv = String::from("step,x,y,z,yaw_deg,pitch_deg,verdict\n");
        for (i, s) in v.trace.iter().enumerate() {
            let c = s.pose.center();
            let _ = writeln!(
                csv,
                "{i},{:.6},{:.6},{:.6},{:.6},{:.6},{:?}",
                c.x,
                c.y,
                c.z,
                s.pose.yaw().to_degrees(),
                s.pose.pitch().to_degrees(),
                s.verdict
            );
        }
        let _ = writeln!(csv, "# outcome {:?} actions_used {}", v.outcome, v.actions_used);
        let path = dir.join("trace.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        for (i, view) in v.views.iter().enumerate() {
            rgb_image(view).save(dir.join(format!("step_{i:02}.png")))?;
        }
        Ok(())
    }

    /// Executes one action, counting it against the step budget.
    fn act(&mut self, a: AgentAction) -> std::result::Result<(), Stop> {
        if self.steps >= self.cfg.max_steps {
            return Err(Stop::Fail(FailureKind::StepBudget, None));
        }
        self.steps += 1;
        let (turn, look) = (self.cfg.turn_deg.to_radians(), self.cfg.look_deg.to_radians());
        match a {
            AgentAction::Forward => {
                let next = [
                    self.pos[0] + self.cfg.forward_step * self.yaw.cos(),
                    self.pos[1] + self.cfg.forward_step * self.yaw.sin(),
                ];
                let free = self
                    .collision
                    .cell_of_world(next)
                    .is_some_and(|c| self.collision.is_free(c));
                if !free {
                    self.bumps.push(next);
                } else {
                    self.path_length += (next[0] - self.pos[0]).hypot(next[1] - self.pos[1]);
                    self.pos = next;
                    self.history.push(next);
                }
            }
            AgentAction::TurnLeft => self.yaw = angle_diff(self.yaw + turn, 0.0),
            AgentAction::TurnRight => self.yaw = angle_diff(self.yaw - turn, 0.0),
            AgentAction::LookUp => self.pitch = (self.pitch + look).min(look),
            AgentAction::LookDown => self.pitch = (self.pitch - look).max(-look),
        }
        self.observe()
            .map_err(|e| Stop::Fail(FailureKind::Reasoning, Some(e.to_string())))
    }

    fn turn_toward(&mut self, yaw: f64) -> std::result::Result<(), Stop> {
        let turn = self.cfg.turn_deg.to_radians();
        let n = (angle_diff(yaw, self.yaw) / turn).round() as i64;
        for _ in 0..n.unsigned_abs() {
            self.act(if n > 0 {
                AgentAction::TurnLeft
            } else {
                AgentAction::TurnRight
            })?;
            if self.target.is_some() {
                break;
            }
        }
        Ok(())
    }

    /// Turns toward the unknown cells close by, so arriving at a frontier
    /// looks past it.
    fn face_unknown(&mut self) -> std::result::Result<(), Stop> {
        let (raw, _) = self
            .maps()
            .map_err(|e| Stop::Fail(FailureKind::Reasoning, Some(e.to_string())))?;
        let mut sum = [0.0, 0.0];
        for (c, s) in raw.cells() {
            let p = raw.world_of_cell(c);
            let (dx, dy) = (p[0] - self.pos[0], p[1] - self.pos[1]);
            let d = dx.hypot(dy);
            if s == CellState::Unknown && d > 1e-9 && d <= 1.5 {
                sum = [sum[0] + dx / d, sum[1] + dy / d];
            }
        }
        if sum[0].hypot(sum[1]) < 1e-9 {
            return Ok(());
        }
        self.turn_toward(sum[1].atan2(sum[0]))
    }

    /// Turns (and tilts) toward the largest unobserved direction of the
    /// panorama rendered at the agent's position.
    fn look_around(&mut self) -> std::result::Result<(), Stop> {
        let center = self.pose().center();
        let cloud = SplatCloud::from_map(&self.map);
        let pan = render_panorama_cloud(&cloud, &center, &self.cfg.panorama)
            .map_err(|e| Stop::Fail(FailureKind::Reasoning, Some(e.to_string())))?;
        let Some(t) = select_active_target(&pan, &self.cfg.active) else {
            return Ok(());
        };
        if let Some(p) = self.out(&format!("panorama_{:03}.png", self.decisions)) {
            let _ = pan.save_png(&p, &[(t.pitch_deg, t.yaw_deg)]);
        }
        self.turn_toward(wrap_yaw(t.yaw_deg).to_radians())?;
        let half = self.cfg.look_deg / 2.0;
        let tilt = if t.pitch_deg <= -half {
            Some((AgentAction::LookDown, AgentAction::LookUp))
        } else if t.pitch_deg >= half {
            Some((AgentAction::LookUp, AgentAction::LookDown))
        } else {
            None
        };
        if let Some((there, back)) = tilt {
            if self.target.is_none() {
                self.act(there)?;
            }
            self.act(back)?;
        }
        Ok(())
    }

    /// Exploration map (raw) and the planning map with obstacles grown by the
    /// agent radius.
    fn maps(&self) -> Result<(ExploreMap, ExploreMap)> {
        let params = ExploreMapParams {
            floor_height: self.scene.floor_z,
            agent_height: self.cfg.camera_height,
            ..self.cfg.explore
        };
        let mut raw = exploration_map_covering(&self.map, &params, &self.history)?;
        let blind = self.cfg.blind_radius()?;
        for f in &self.footprints {
            fill_unknown_reachable(&mut raw, *f, blind);
        }
        for b in &self.bumps {
            if let Some(c) = raw.cell_of_world(*b) {
                raw.set(c, CellState::Obstacle);
            }
        }
        let nav = planning_map(&raw, self.pos, self.cfg.agent_radius);
        Ok((raw, nav))
    }

    /// One frontier decision; returns the chosen goal in world coordinates,
    /// or `None` when no reachable frontier remains.
    fn decide(&mut self) -> Result<Option<[f64; 2]>> {
        let (_raw, nav) = self.maps()?;
        let dead = &self.dead_goals;
        let views = frontier_views(&self.map, &nav, self.pos, self.scene.floor_z, self.cfg, |c| {
            dead.iter()
                .any(|g| (g[0] - c.centroid[0]).hypot(g[1] - c.centroid[1]) <= 0.3)
        })?;
        if views.is_empty() {
            return Ok(None);
        }
        if self.pipe.trace_opt {
            if let Some(p) = self.out("trace_opt.csv") {
                for v in &views {
                    write_trace_csv(&p, v.cluster.id, &v.trace)?;
                }
            }
        }
        let (clusters, trajs): (Vec<_>, Vec<_>) =
            views.iter().map(|v| (v.cluster.clone(), v.trajectory.clone())).unzip();
        let fpvs: Vec<AnnotatedFrame> = views.into_iter().map(|v| v.fpv).collect();
        let params = ExploreMapParams {
            floor_height: self.scene.floor_z,
            agent_height: self.cfg.camera_height,
            ..self.cfg.explore
        };
        let bev = render_bev(&self.map, &nav, &params, &self.pose(), &self.history, &clusters, &trajs);
        let instruction = format!("Find a {}.", self.scene.target_category.replace('_', " "));
        let prompt = compose_prompt(
            &fpvs,
            &bev,
            &self.scene.target_category,
            &instruction,
            self.cfg.template,
        )?;
        let ctx = DecisionContext {
            prompt: &prompt,
            explore: &nav,
            frontiers: &clusters,
            trajectories: &trajs,
        };
        let decision = decide_frontier(&ctx, self.pipe.planner);
        if let Some(p) = self.out(&format!("prompt_{:03}.png", self.decisions)) {
            prompt.save_png(&p)?;
        }
        self.decisions += 1;
        let chosen = clusters
            .iter()
            .find(|c| c.id == decision.chosen_frontier)
            .ok_or_else(|| Error::invalid("planner chose an unknown frontier"))?;
        Ok(Some(chosen.centroid))
    }

    /// Follows an FMM route toward `goal` for at most `budget` forward moves,
    /// replanning on the current map each move. Returns once within `tol` of
    /// the goal, on the move budget, or (while exploring) when a target gets
    /// confirmed.
    fn travel(&mut self, goal: [f64; 2], budget: usize, tol: f64) -> std::result::Result<(), Stop> {
        let exploring = self.target.is_none();
        let fail = |e: Error| match e {
            Error::Unreachable(m) => Stop::Fail(FailureKind::Unreachable, Some(m)),
            e => Stop::Fail(FailureKind::Reasoning, Some(e.to_string())),
        };
        let mut moves = 0;
        let mut blocked = 0;
        while moves < budget && (!exploring || self.target.is_none()) {
            if (goal[0] - self.pos[0]).hypot(goal[1] - self.pos[1]) <= tol {
                return Ok(());
            }
            let (_, nav) = self.maps().map_err(fail)?;
            let (Some(s), Some(g)) = (nav.cell_of_world(self.pos), nav.cell_of_world(goal)) else {
                return Ok(());
            };
            if !nav.is_free(g) {
                return Ok(());
            }
            let path = match plan_local_cells(&nav, s, g) {
                Ok(p) => p,
                // the goal got cut off by new observations; decide again
                Err(Error::Unreachable(_)) => return Ok(()),
                Err(e) => return Err(fail(e)),
            };
            let aim = lookahead(&nav, &path, self.pos, 0.4);
            let heading = (aim[1] - self.pos[1]).atan2(aim[0] - self.pos[0]);
            let err = angle_diff(heading, self.yaw);
            let half = self.cfg.turn_deg.to_radians() / 2.0;
            if err > half {
                self.act(AgentAction::TurnLeft)?;
            } else if err < -half {
                self.act(AgentAction::TurnRight)?;
            } else {
                let before = self.pos;
                self.act(AgentAction::Forward)?;
                moves += 1;
                if before == self.pos {
                    blocked += 1;
                    if blocked >= 3 {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// Navigates to within reach of the confirmed target's observed surface
    /// and stops.
    fn approach(&mut self) -> Stop {
        let reach = (self.cfg.success_dist - 0.2).max(self.cfg.success_dist * 0.5);
        let mut stalls = 0;
        let pts = self.target_pts.clone();
        let dist_to = |p: [f64; 2]| {
            pts.iter()
                .map(|q| (q[0] - p[0]).hypot(q[1] - p[1]))
                .fold(f64::INFINITY, f64::min)
        };
        loop {
            if dist_to(self.pos) <= reach {
                return Stop::Done;
            }
            if self.steps >= self.cfg.max_steps {
                return Stop::Fail(FailureKind::StepBudget, None);
            }
            let nav = match self.maps() {
                Ok((_, nav)) => nav,
                Err(e) => return Stop::Fail(FailureKind::Reasoning, Some(e.to_string())),
            };
            let Some(s) = nav.cell_of_world(self.pos) else {
                return Stop::Fail(FailureKind::Unreachable, Some("agent left the map".into()));
            };
            // a reachable cell within reach when there is one, else the
            // frontier that looks shortest toward the target through the unknown
            let times = arrival_times(&nav, s);
            let w = nav.width();
            let res = nav.resolution();
            let dist = |c: Cell| dist_to(nav.world_of_cell(c));
            let reachable = |c: &Cell| times[c.0 * w + c.1].is_finite();
            let by_cost = |cost: &dyn Fn(Cell) -> f64, cells: &mut dyn Iterator<Item = Cell>| {
                cells
                    .map(|c| (cost(c), c))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|x| x.1)
            };
            let time = |c: Cell| times[c.0 * w + c.1];
            let near = by_cost(
                &time,
                &mut nav
                    .cells()
                    .map(|(c, _)| c)
                    .filter(reachable)
                    .filter(|c| dist(*c) <= reach - 0.15),
            );
            let goal = near
                .or_else(|| {
                    let through = |c: Cell| time(c) * res + dist(c);
                    by_cost(&through, &mut extract_frontiers(&nav).into_iter().filter(reachable))
                })
                .or_else(|| by_cost(&dist, &mut nav.cells().map(|(c, _)| c).filter(reachable)));
            let Some(goal) = goal else {
                return Stop::Fail(FailureKind::Unreachable, Some("no free cell toward the target".into()));
            };
            let before = (self.pos, self.steps);
            let g = nav.world_of_cell(goal);
            if let Err(stop) = self.travel(g, 10, 0.1) {
                return stop;
            }
            if (self.pos[0] - before.0[0]).hypot(self.pos[1] - before.0[1]) < 1e-9 {
                stalls += 1;
                if stalls >= 3 || self.steps == before.1 {
                    return Stop::Fail(FailureKind::Unreachable, Some("cannot get closer to the target".into()));
                }
            } else {
                stalls = 0;
            }
        }
    }
}

/// A frontier prepared for the planner: its guidance route and the
/// annotated view from the optimized viewpoint.
#[derive(Debug, Clone)]
pub struct FrontierView {
    pub cluster: FrontierCluster,
    pub trajectory: GuidanceTrajectory,
    pub pose: Pose,
    pub fpv: AnnotatedFrame,
    pub trace: Vec<TraceRow>,
}

/// Frontier clusters of the planning map `nav` reachable from `agent`,
/// minus those `skip` rejects; the `max_frontiers` cheapest by guidance cost
/// each get an optimized viewpoint and an annotated first-person view.
/// Results are ordered by cluster id.
pub fn frontier_views(
    map: &GaussianMap,
    nav: &ExploreMap,
    agent: [f64; 2],
    floor_z: f64,
    cfg: &EpisodeConfig,
    skip: impl Fn(&FrontierCluster) -> bool,
) -> Result<Vec<FrontierView>> {
    let start = nav
        .cell_of_world(agent)
        .ok_or_else(|| Error::invalid("agent outside the exploration map"))?;
    let frontiers = extract_frontiers(nav);
    let df = DistanceField::compute(nav);
    let mut cands: Vec<(FrontierCluster, GuidanceTrajectory)> = cluster_frontiers(nav, &frontiers)
        .into_iter()
        .filter(|c| c.member_cells.len() >= cfg.min_frontier_cells && c.cell != start && !skip(c))
        .filter_map(|c| {
            let t = plan_guidance(nav, &df, start, &c, &cfg.guidance).ok()?;
            Some((c, t))
        })
        .collect();
    cands.sort_by(|a, b| a.1.total_cost().total_cmp(&b.1.total_cost()).then(a.0.id.cmp(&b.0.id)));
    cands.truncate(cfg.max_frontiers);
    cands.sort_by_key(|c| c.0.id);

    let cloud = SplatCloud::from_map(map);
    let k_opt = cfg.opt_camera.intrinsics()?;
    let k_fpv = cfg.fpv_camera.intrinsics()?;
    let mut out = Vec::with_capacity(cands.len());
    for (c, t) in cands {
        let fp = frontier_point(&c, floor_z + cfg.camera_height);
        let init = init_viewpoint(&t, &c, &cfg.viewpoint_init)?;
        let obj = Objective {
            cloud: &cloud,
            intrinsics: &k_opt,
            traj_points: &t.points,
            frontier: fp,
            weights: &cfg.weights,
        };
        let vp = optimize(&obj, &init)?;
        let view = render_cloud(&cloud, &vp.pose, &k_fpv);
        let fpv = annotate_fpv(&view, &fp, cfg.fpv_tau, c.id);
        out.push(FrontierView {
            cluster: c,
            trajectory: t,
            pose: vp.pose,
            fpv,
            trace: vp.trace,
        });
    }
    Ok(out)
}

/// Floor-plane positions of the pixels showing object `instance`, one per
/// 5 cm cell.
fn surface_points(frame: &SensorFrame, pose: &Pose, k: &CameraIntrinsics, instance: usize) -> Vec<[f64; 2]> {
    let mut cells = std::collections::BTreeMap::new();
    for (x, y, s) in frame.surface.enumerate() {
        if *s == Surface::Object(instance) {
            let p = pose.camera_to_world(&k.back_project(x as f64, y as f64, *frame.depth.get(x, y)));
            cells
                .entry(((p.x / 0.05).floor() as i64, (p.y / 0.05).floor() as i64))
                .or_insert([p.x, p.y]);
        }
    }
    cells.into_values().collect()
}

/// First path point at least `dist` meters from `from`, else the last one.
fn lookahead(m: &ExploreMap, path: &[Cell], from: [f64; 2], dist: f64) -> [f64; 2] {
    path.iter()
        .map(|c| m.world_of_cell(*c))
        .find(|p| (p[0] - from[0]).hypot(p[1] - from[1]) >= dist)
        .unwrap_or_else(|| m.world_of_cell(*path.last().expect("non-empty path")))
}

/// Unknown cells within `radius` of `center`, reachable from it without
/// crossing obstacles, become free.
pub fn fill_unknown_reachable(m: &mut ExploreMap, center: [f64; 2], radius: f64) {
    let Some(s) = m.cell_of_world(center) else { return };
    if m.get(s) == CellState::Obstacle {
        return;
    }
    let w = m.width();
    let mut seen = vec![false; w * m.height()];
    seen[s.0 * w + s.1] = true;
    let mut q = VecDeque::from([s]);
    while let Some(c) = q.pop_front() {
        if m.get(c) == CellState::Unknown {
            m.set(c, CellState::Free);
        }
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let Some(n) = m.offset(c, dr, dc) else { continue };
            if seen[n.0 * w + n.1] || m.get(n) == CellState::Obstacle {
                continue;
            }
            let p = m.world_of_cell(n);
            if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
                seen[n.0 * w + n.1] = true;
                q.push_back(n);
            }
        }
    }
}

/// Exploration map over the primitives' footprint, grown to keep every
/// point of `keep` at least a margin inside.
pub fn exploration_map_covering(map: &GaussianMap, params: &ExploreMapParams, keep: &[[f64; 2]]) -> Result<ExploreMap> {
    let (o, w, h) = grid_bounds(map, params);
    let res = params.resolution;
    let (mut lo, mut hi) = (o, [o[0] + w as f64 * res, o[1] + h as f64 * res]);
    for p in keep {
        for i in 0..2 {
            lo[i] = lo[i].min(((p[i] - params.margin) / res).floor() * res);
            hi[i] = hi[i].max(p[i] + params.margin);
        }
    }
    let (w, h) = (
        ((hi[0] - lo[0]) / res).ceil() as usize,
        ((hi[1] - lo[1]) / res).ceil() as usize,
    );
    build_exploration_map_in(map, params, lo, w, h)
}

/// Planning map: obstacles grown by the agent radius, with the cells around
/// the agent kept free unless they are obstacles themselves.
pub fn planning_map(raw: &ExploreMap, agent: [f64; 2], agent_radius: f64) -> ExploreMap {
    let mut nav = inflate(raw, agent_radius);
    if let Some(c) = nav.cell_of_world(agent) {
        for dr in -1..=1 {
            for dc in -1..=1 {
                if let Some(n) = nav.offset(c, dr, dc) {
                    if raw.get(n) != CellState::Obstacle {
                        nav.set(n, CellState::Free);
                    }
                }
            }
        }
        nav.set(c, CellState::Free);
    }
    nav
}

/// Every cell within `radius` meters of an obstacle becomes an obstacle.
pub fn inflate(m: &ExploreMap, radius: f64) -> ExploreMap {
    let mut out = m.clone();
    let rc = (radius / m.resolution()).ceil() as isize;
    let offsets: Vec<(isize, isize)> = (-rc..=rc)
        .flat_map(|dr| (-rc..=rc).map(move |dc| (dr, dc)))
        .filter(|(dr, dc)| (((dr * dr + dc * dc) as f64).sqrt() * m.resolution()) <= radius + 1e-9)
        .collect();
    for (c, s) in m.cells() {
        if s == CellState::Obstacle {
            for &(dr, dc) in &offsets {
                if let Some(n) = m.offset(c, dr, dc) {
                    out.set(n, CellState::Obstacle);
                }
            }
        }
    }
    out
}

/// Writes `dir/episode_<n>` for each result path; helper for batch runners.
pub fn episode_dir(root: &Path, n: usize) -> PathBuf {
    root.join(format!("episode_{n}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(success: bool, shortest: f64, path: f64) -> EpisodeResult {
        EpisodeResult {
            success,
            steps: 1,
            path_length: path,
            shortest_length: shortest,
            spl: spl(success, shortest, path),
            failure_kind: None,
            final_distance: 0.0,
            decisions: 0,
            verifications: 0,
            note: None,
        }
    }

    #[test]
    fn spl_formula() {
        assert_eq!(spl(true, 5.0, 10.0), 0.5);
        assert_eq!(spl(true, 5.0, 5.0), 1.0);
        assert_eq!(spl(false, 5.0, 5.0), 0.0);
        // shorter than the oracle (diagonal shortcuts) still caps at one
        assert_eq!(spl(true, 5.0, 4.0), 1.0);
    }

    #[test]
    fn metrics_average() {
        let m = compute_metrics(&[ok(true, 5.0, 10.0), ok(false, 5.0, 5.0)]).unwrap();
        assert_eq!(m.sr, 0.5);
        assert_eq!(m.spl, 0.25);
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn inflation_grows_obstacles() {
        let m = ExploreMap::from_ascii(&[".....", ".....", "..#..", ".....", "....."], 0.1).unwrap();
        let n = inflate(&m, 0.1);
        assert_eq!(n.count(CellState::Obstacle), 5);
        let n = inflate(&m, 0.15);
        assert_eq!(n.count(CellState::Obstacle), 9);
    }
}
