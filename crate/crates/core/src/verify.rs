//! Target detection interface and virtual-viewpoint re-verification.

use image::RgbImage;
use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{draw, ChatEndpoint};
use crate::splat::{render_cloud, CameraIntrinsics, Pose, RenderedView, SplatCloud};

/// Maximum actions in one verification cycle.
pub const ACTION_BUDGET: usize = 5;
pub const STEP_METERS: f64 = 0.25;
pub const TURN_DEGREES: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// `[x_min, y_min, x_max, y_max]` in continuous pixel coordinates.
    pub bbox: [f64; 4],
    pub category: String,
    pub confidence: f64,
    pub source_pose: Pose,
    pub image_size: (usize, usize),
    /// World position of the detected object when known to the detector.
    pub world_hint: Option<Vector3<f64>>,
    /// Ground-truth object index; `None` for false positives.
    pub instance: Option<usize>,
}

impl Detection {
    pub fn area_fraction(&self) -> f64 {
        let [x0, y0, x1, y1] = self.bbox;
        ((x1 - x0).max(0.0) * (y1 - y0).max(0.0)) / (self.image_size.0 * self.image_size.1) as f64
    }

    /// Box center normalized to [0, 1] on both axes.
    pub fn center_normalized(&self) -> (f64, f64) {
        let [x0, y0, x1, y1] = self.bbox;
        (
            0.5 * (x0 + x1) / self.image_size.0 as f64,
            0.5 * (y0 + y1) / self.image_size.1 as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.bbox;
        let (w, h) = (self.image_size.0 as f64, self.image_size.1 as f64);
        let ok = 0.0 <= x0
            && x0 <= x1
            && x1 <= w
            && 0.0 <= y0
            && y0 <= y1
            && y1 <= h
            && (0.0..=1.0).contains(&self.confidence);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid detection box {:?} in {w}x{h}",
                self.bbox
            )))
        }
    }
}

/// An object the simulator reports as visible from a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleObject {
    pub instance: usize,
    pub category: String,
    /// Number of pixels showing the object.
    pub pixels: usize,
    /// Extent of those pixels, `[x_min, y_min, x_max, y_max]` (exclusive max).
    pub pixel_bbox: [f64; 4],
    pub aabb_min: Vector3<f64>,
    pub aabb_max: Vector3<f64>,
}

/// Ground-truth visibility source for the synthetic detector.
pub trait GroundTruth {
    fn visible_objects(&self, pose: &Pose, k: &CameraIntrinsics) -> Vec<VisibleObject>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Probability of one spurious detection per call.
    pub fp: f64,
    /// Probability of dropping each true detection.
    pub fn_rate: f64,
    /// Fewer visible pixels than this are not detected.
    pub min_pixels: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fp: 0.0,
            fn_rate: 0.0,
            min_pixels: 20,
        }
    }
}

/// Box of the projected AABB corners clipped to the image, or `None` when a
/// corner is behind the camera.
pub fn project_aabb(min: &Vector3<f64>, max: &Vector3<f64>, pose: &Pose, k: &CameraIntrinsics) -> Option<[f64; 4]> {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for i in 0..8 {
        let p = Vector3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        );
        let c = pose.world_to_camera(&p);
        if c.z <= crate::splat::NEAR_PLANE {
            return None;
        }
        let uv = k.project(&c);
        // pixel centers sit at integer coordinates, so pixel edges are at +-0.5
        b[0] = b[0].min(uv.x + 0.5);
        b[1] = b[1].min(uv.y + 0.5);
        b[2] = b[2].max(uv.x + 0.5);
        b[3] = b[3].max(uv.y + 0.5);
    }
    let (w, h) = (k.width as f64, k.height as f64);
    let clipped = [
        b[0].clamp(0.0, w),
        b[1].clamp(0.0, h),
        b[2].clamp(0.0, w),
        b[3].clamp(0.0, h),
    ];
    (clipped[0] < clipped[2] && clipped[1] < clipped[3]).then_some(clipped)
}

/// Synthetic open-vocabulary detector over simulator ground truth.
pub fn detect(
    gt: &dyn GroundTruth,
    pose: &Pose,
    k: &CameraIntrinsics,
    target_category: &str,
    cfg: &DetectorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Detection> {
    let mut out = Vec::new();
    for obj in gt.visible_objects(pose, k) {
        if obj.category != target_category || obj.pixels < cfg.min_pixels {
            continue;
        }
        if cfg.fn_rate > 0.0 && rng.gen::<f64>() < cfg.fn_rate {
            continue;
        }
        let bbox = project_aabb(&obj.aabb_min, &obj.aabb_max, pose, k).unwrap_or(obj.pixel_bbox);
        out.push(Detection {
            bbox,
            category: obj.category.clone(),
            confidence: 0.9,
            source_pose: *pose,
            image_size: (k.width, k.height),
            world_hint: Some((obj.aabb_min + obj.aabb_max) / 2.0),
            instance: Some(obj.instance),
        });
    }
    if cfg.fp > 0.0 && rng.gen::<f64>() < cfg.fp {
        let (w, h) = (k.width as f64, k.height as f64);
        let bw = rng.gen_range(0.05..0.3) * w;
        let bh = rng.gen_range(0.05..0.3) * h;
        let x0 = rng.gen_range(0.0..w - bw);
        let y0 = rng.gen_range(0.0..h - bh);
        // a spurious hit placed two meters down the box's viewing ray
        let ray = k.back_project(x0 + bw / 2.0, y0 + bh / 2.0, 2.0);
        out.push(Detection {
            bbox: [x0, y0, x0 + bw, y0 + bh],
            category: target_category.to_string(),
            confidence: 0.5,
            source_pose: *pose,
            image_size: (k.width, k.height),
            world_hint: Some(pose.camera_to_world(&ray)),
            instance: None,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyAction {
    Forward,
    Backward,
    TurnLeft,
    TurnRight,
    Leave,
}

impl VerifyAction {
    /// Meters for translations, degrees for turns.
    pub fn magnitude(self) -> f64 {
        match self {
            VerifyAction::Forward | VerifyAction::Backward => STEP_METERS,
            VerifyAction::TurnLeft | VerifyAction::TurnRight => TURN_DEGREES,
            VerifyAction::Leave => 0.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "forward" => Some(Self::Forward),
            "backward" => Some(Self::Backward),
            "turn_left" => Some(Self::TurnLeft),
            "turn_right" => Some(Self::TurnRight),
            "leave" => Some(Self::Leave),
            _ => None,
        }
    }
}

/// Pose after the action in the agent frame: translations follow the
/// horizontal heading, turns rotate about world up. Nothing else changes.
pub fn project_action(pose: &Pose, action: VerifyAction) -> Result<Pose> {
    let c = pose.center();
    match action {
        VerifyAction::Leave => Err(Error::invalid("leave has no pose")),
        VerifyAction::Forward | VerifyAction::Backward => {
            let sign = if action == VerifyAction::Forward { 1.0 } else { -1.0 };
            let yaw = pose.yaw();
            let step = Vector3::new(yaw.cos(), yaw.sin(), 0.0) * (sign * STEP_METERS);
            Ok(Pose::from_center_rotation(c + step, &pose.r_wc()))
        }
        VerifyAction::TurnLeft | VerifyAction::TurnRight => {
            let sign = if action == VerifyAction::TurnLeft { 1.0 } else { -1.0 };
            let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), sign * TURN_DEGREES.to_radians());
            Ok(Pose::from_center_rotation(c, &(rz.into_inner() * pose.r_wc())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProviderVerdict {
    Confirm,
    Reject,
    Act(VerifyAction),
}

pub trait VerdictProvider {
    /// Judges the rendered virtual view; `detection` is `None` when the
    /// detector lost the object at this pose.
    fn judge(&mut self, view: &RenderedView, detection: Option<&Detection>) -> Result<ProviderVerdict>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Confirmed(Vector3<f64>),
    Rejected,
    Continue(VerifyAction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyStep {
    pub pose: Pose,
    pub verdict: ProviderVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationVerdict {
    pub outcome: Outcome,
    pub actions_used: usize,
    /// Set when the provider failed and the target was rejected because of it.
    pub failure: Option<String>,
    pub trace: Vec<VerifyStep>,
    /// Virtual views judged, in order.
    pub views: Vec<RenderedView>,
}

impl VerificationVerdict {
    pub fn confirmed(&self) -> Option<Vector3<f64>> {
        match self.outcome {
            Outcome::Confirmed(p) => Some(p),
            _ => None,
        }
    }
}

/// Object position: the detector's hint when it has one, else the rendered
/// depth inside the box. The nearer quartile of depths over the box's inner
/// region is used, so background seen around a thin object does not pull
/// the estimate back.
fn locate(view: &RenderedView, det: &Detection) -> Option<Vector3<f64>> {
    let k = &view.intrinsics;
    if det.world_hint.is_some() || k.width != det.image_size.0 || k.height != det.image_size.1 {
        return det.world_hint;
    }
    let [x0, y0, x1, y1] = det.bbox;
    let (bw, bh) = (x1 - x0, y1 - y0);
    let (ix0, ix1) = (
        (x0 + 0.2 * bw).floor() as usize,
        ((x1 - 0.2 * bw).ceil() as usize).min(k.width),
    );
    let (iy0, iy1) = (
        (y0 + 0.2 * bh).floor() as usize,
        ((y1 - 0.2 * bh).ceil() as usize).min(k.height),
    );
    let mut depths: Vec<f64> = (iy0..iy1.max(iy0 + 1).min(k.height))
        .flat_map(|y| (ix0..ix1.max(ix0 + 1).min(k.width)).map(move |x| (x, y)))
        .filter_map(|(x, y)| view.normalized_depth(x, y, 0.5))
        .collect();
    if depths.is_empty() {
        return None;
    }
    depths.sort_by(f64::total_cmp);
    let d = depths[depths.len() / 4];
    let (u, v) = (0.5 * (x0 + x1) - 0.5, 0.5 * (y0 + y1) - 0.5);
    Some(view.pose.camera_to_world(&k.back_project(u, v, d)))
}

/// Runs the verification loop from `agent_pose` on virtual renders of the
/// map. `redetect` re-runs the detector at a virtual pose. Neither the map
/// nor the agent is modified.
pub fn verify_target(
    cloud: &SplatCloud,
    k: &CameraIntrinsics,
    agent_pose: &Pose,
    detection: &Detection,
    provider: &mut dyn VerdictProvider,
    redetect: &mut dyn FnMut(&Pose) -> Option<Detection>,
) -> Result<VerificationVerdict> {
    detection.validate()?;
    let mut pose = *agent_pose;
    let mut det = Some(detection.clone());
    let mut actions_used = 0;
    let mut trace = Vec::new();
    let mut views = Vec::new();
    let finish = |outcome, actions_used, failure, trace, views| VerificationVerdict {
        outcome,
        actions_used,
        failure,
        trace,
        views,
    };
    loop {
        let view = render_cloud(cloud, &pose, k);
        let verdict = match provider.judge(&view, det.as_ref()) {
            Ok(v) => v,
            Err(e) => {
                views.push(view);
                return Ok(finish(
                    Outcome::Rejected,
                    actions_used,
                    Some(e.to_string()),
                    trace,
                    views,
                ));
            }
        };
        trace.push(VerifyStep { pose, verdict });
        let outcome = match verdict {
            ProviderVerdict::Confirm => match det.as_ref().and_then(|d| locate(&view, d)) {
                Some(p) => Outcome::Confirmed(p),
                None => Outcome::Rejected,
            },
            ProviderVerdict::Reject | ProviderVerdict::Act(VerifyAction::Leave) => Outcome::Rejected,
            ProviderVerdict::Act(a) if actions_used >= ACTION_BUDGET => {
                let _ = a;
                // budget spent: the last virtual pose decides
                match redetect(&pose).and_then(|d| locate(&view, &d)) {
                    Some(p) => Outcome::Confirmed(p),
                    None => Outcome::Rejected,
                }
            }
            ProviderVerdict::Act(a) => {
                views.push(view);
                pose = project_action(&pose, a)?;
                actions_used += 1;
                det = redetect(&pose);
                continue;
            }
        };
        views.push(view);
        return Ok(finish(outcome, actions_used, None, trace, views));
    }
}

/// Rule-based provider: confirm a box covering at least 1% of the frame
/// whose center lies in the central 60%; otherwise turn toward it, approach
/// it when small, or back off when it sits off-center vertically.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleVerdictProvider;

impl VerdictProvider for RuleVerdictProvider {
    fn judge(&mut self, _view: &RenderedView, detection: Option<&Detection>) -> Result<ProviderVerdict> {
        let Some(d) = detection else {
            return Ok(ProviderVerdict::Reject);
        };
        let area = d.area_fraction();
        let (cx, cy) = d.center_normalized();
        let centered_x = (0.2..=0.8).contains(&cx);
        let centered_y = (0.2..=0.8).contains(&cy);
        Ok(if area >= 0.01 && centered_x && centered_y {
            ProviderVerdict::Confirm
        } else if !centered_x {
            ProviderVerdict::Act(if cx < 0.2 {
                VerifyAction::TurnLeft
            } else {
                VerifyAction::TurnRight
            })
        } else if area < 0.01 {
            ProviderVerdict::Act(VerifyAction::Forward)
        } else {
            ProviderVerdict::Act(VerifyAction::Backward)
        })
    }
}

/// Asks a remote multimodal model for a verdict on the view with the box drawn.
#[derive(Debug, Clone)]
pub struct RemoteVerdictProvider {
    pub endpoint: ChatEndpoint,
    pub target_category: String,
}

const VERDICT_PROMPT: &str = "A detector reported a {target} inside the green box of this rendered view.
Decide whether the box really shows a {target} that is fully visible and unobstructed.
If it is, answer confirm. If it is clearly not, answer reject. Otherwise pick one action to get a better view:
forward (0.25 m), backward (0.25 m), turn_left (10 degrees), turn_right (10 degrees), or leave.
End with a final line `VERDICT: <confirm|reject|forward|backward|turn_left|turn_right|leave>`.";

pub fn parse_verdict(reply: &str) -> Option<ProviderVerdict> {
    let line = reply.lines().rev().find(|l| l.contains("VERDICT:"))?;
    let word = line
        .split("VERDICT:")
        .nth(1)?
        .trim()
        .trim_matches(|c: char| c == '`' || c == '.' || c == '*');
    match word.to_ascii_lowercase().as_str() {
        "confirm" => Some(ProviderVerdict::Confirm),
        "reject" => Some(ProviderVerdict::Reject),
        other => VerifyAction::parse(other).map(ProviderVerdict::Act),
    }
}

fn view_image(view: &RenderedView, det: Option<&Detection>) -> RgbImage {
    let k = view.intrinsics;
    let mut img = RgbImage::new(k.width as u32, k.height as u32);
    for (x, y, c) in view.color.enumerate() {
        img.put_pixel(x as u32, y as u32, draw::to_rgb8(*c));
    }
    if let Some(d) = det {
        let [x0, y0, x1, y1] = d.bbox;
        let corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
        for i in 0..4 {
            draw::draw_line(&mut img, corners[i], corners[(i + 1) % 4], 2, draw::GREEN);
        }
    }
    img
}

impl VerdictProvider for RemoteVerdictProvider {
    fn judge(&mut self, view: &RenderedView, detection: Option<&Detection>) -> Result<ProviderVerdict> {
        let text = VERDICT_PROMPT.replace("{target}", &self.target_category);
        let reply = self.endpoint.complete(&text, &view_image(view, detection))?;
        parse_verdict(&reply).ok_or_else(|| Error::parse("verdict reply", "no VERDICT line"))
    }
}
