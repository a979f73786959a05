use image::RgbImage;
use nalgebra::Vector3;

use super::draw::{self, to_rgb8};
use crate::explore::{splat_footprint, ExploreMap, ExploreMapParams, FrontierCluster, HeightBand};
use crate::guidance::GuidanceTrajectory;
use crate::splat::{GaussianMap, Pose, RenderedView, NEAR_PLANE};

pub const GAZE_RADIUS: f64 = 5.0;
/// Linear RGB used for unobserved pixels.
pub const UNOBSERVED_RGB: [f64; 3] = [0.5, 0.0, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Fpv { frontier_id: usize },
    Bev,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    Unobserved {
        pixels: usize,
    },
    Gaze {
        u: f64,
        v: f64,
    },
    /// The frontier did not project inside the image; no gaze was drawn.
    GazeOffFrame,
    History {
        points: usize,
    },
    Agent {
        apex: (f64, f64),
    },
    FrontierMarker {
        id: usize,
        at: (f64, f64),
    },
    Trajectory {
        target: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedFrame {
    pub image: RgbImage,
    pub kind: FrameKind,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedFrame {
    pub fn gaze(&self) -> Option<(f64, f64)> {
        self.annotations.iter().find_map(|a| match a {
            Annotation::Gaze { u, v } => Some((*u, *v)),
            _ => None,
        })
    }

    pub fn gaze_off_frame(&self) -> bool {
        self.annotations.contains(&Annotation::GazeOffFrame)
    }

    pub fn frontier_markers(&self) -> Vec<usize> {
        self.annotations
            .iter()
            .filter_map(|a| match a {
                Annotation::FrontierMarker { id, .. } => Some(*id),
                _ => None,
            })
            .collect()
    }

    pub fn save_png(&self, path: &std::path::Path) -> crate::Result<()> {
        self.image.save(path)?;
        Ok(())
    }
}

/// FPV image with unobserved pixels in purple and a red gaze disc on the
/// frontier. The view's buffers are only read.
pub fn annotate_fpv(
    view: &RenderedView,
    frontier_world: &Vector3<f64>,
    tau: f64,
    frontier_id: usize,
) -> AnnotatedFrame {
    let k = view.intrinsics;
    let mut image = RgbImage::new(k.width as u32, k.height as u32);
    let mut unobserved = 0;
    for (x, y, c) in view.color.enumerate() {
        let o = *view.opacity.get(x, y);
        let px = if o < tau {
            unobserved += 1;
            to_rgb8(UNOBSERVED_RGB)
        } else {
            to_rgb8(*c)
        };
        image.put_pixel(x as u32, y as u32, px);
    }
    let mut annotations = vec![Annotation::Unobserved { pixels: unobserved }];
    let fc = view.pose.world_to_camera(frontier_world);
    let uv = (fc.z > NEAR_PLANE).then(|| k.project(&fc));
    match uv {
        Some(p) if p.x >= -0.5 && p.y >= -0.5 && p.x < k.width as f64 - 0.5 && p.y < k.height as f64 - 0.5 => {
            draw::fill_disc(&mut image, p.x, p.y, GAZE_RADIUS, draw::RED);
            annotations.push(Annotation::Gaze { u: p.x, v: p.y });
        }
        _ => annotations.push(Annotation::GazeOffFrame),
    }
    AnnotatedFrame {
        image,
        kind: FrameKind::Fpv { frontier_id },
        annotations,
    }
}

/// Image pixel (continuous) of a world xy point on a BEV of `explore` drawn
/// at `scale` pixels per cell. Image rows run toward decreasing world y.
pub fn bev_pixel(explore: &ExploreMap, scale: u32, p: [f64; 2]) -> (f64, f64) {
    let o = explore.origin();
    let res = explore.resolution();
    let s = scale as f64;
    let col = (p[0] - o[0]) / res;
    let row = (p[1] - o[1]) / res;
    (col * s - 0.5, (explore.height() as f64 - row) * s - 0.5)
}

/// Pixels per exploration-map cell in the BEV.
pub const BEV_SCALE: u32 = 2;
const AGENT_SIZE: f64 = 7.0;

/// Top-down view: primitives below the ceiling composited from above, unknown
/// cells dark, the agent's history in blue, the agent as a purple triangle,
/// guidance trajectories and numbered frontier markers.
pub fn render_bev(
    map: &GaussianMap,
    explore: &ExploreMap,
    params: &ExploreMapParams,
    agent_pose: &Pose,
    history: &[[f64; 2]],
    frontiers: &[FrontierCluster],
    trajectories: &[GuidanceTrajectory],
) -> AnnotatedFrame {
    let (w, h) = (explore.width(), explore.height());
    let mut color = vec![[0.0f64; 3]; w * h];
    let mut trans = vec![1.0f64; w * h];
    let mut order: Vec<usize> = (0..map.len())
        .filter(|&i| params.band(map.primitives()[i].position.z) != HeightBand::Ceiling)
        .collect();
    // highest first so the view composites from above
    order.sort_by(|&a, &b| {
        let (za, zb) = (map.primitives()[a].position.z, map.primitives()[b].position.z);
        zb.total_cmp(&za).then(a.cmp(&b))
    });
    for i in order {
        let p = &map.primitives()[i];
        splat_footprint(explore, p, |(r, c), a| {
            let j = r * w + c;
            let wgt = a * trans[j];
            for ch in 0..3 {
                color[j][ch] += p.color[ch] * wgt;
            }
            trans[j] *= 1.0 - a;
        });
    }
    let s = BEV_SCALE;
    let mut image = RgbImage::new(w as u32 * s, h as u32 * s);
    for ((r, c), state) in explore.cells() {
        let j = r * w + c;
        let px = if state == crate::explore::CellState::Unknown {
            image::Rgb([40, 40, 40])
        } else {
            let a = 1.0 - trans[j];
            // composite over a light floor so sparse cells stay readable
            to_rgb8([0, 1, 2].map(|ch| color[j][ch] + (1.0 - a) * 0.85))
        };
        let y0 = (h - 1 - r) as i64 * s as i64;
        draw::fill_rect(&mut image, c as i64 * s as i64, y0, s as i64, s as i64, px);
    }
    let mut annotations = Vec::new();
    let to_px = |p: [f64; 2]| bev_pixel(explore, s, p);
    for t in trajectories {
        for seg in t.points.windows(2) {
            draw::draw_line(&mut image, to_px(seg[0]), to_px(seg[1]), 1, draw::YELLOW);
        }
        annotations.push(Annotation::Trajectory { target: t.target });
    }
    if history.len() >= 2 {
        for seg in history.windows(2) {
            draw::draw_line(&mut image, to_px(seg[0]), to_px(seg[1]), 2, draw::BLUE);
        }
        annotations.push(Annotation::History { points: history.len() });
    }
    for f in frontiers {
        let at = to_px(f.centroid);
        draw::fill_disc(&mut image, at.0, at.1, 4.0, draw::GREEN);
        draw::draw_label(
            &mut image,
            f.id,
            at.0 as i64 + 5,
            at.1 as i64 - 12,
            2,
            draw::BLACK,
            draw::WHITE,
        );
        annotations.push(Annotation::FrontierMarker { id: f.id, at });
    }
    let c = agent_pose.center();
    let yaw = agent_pose.yaw();
    let center = to_px([c.x, c.y]);
    // image y points toward decreasing world y
    let dir = (yaw.cos(), -yaw.sin());
    let side = (-dir.1, dir.0);
    let apex = (center.0 + dir.0 * AGENT_SIZE, center.1 + dir.1 * AGENT_SIZE);
    let back = (center.0 - dir.0 * AGENT_SIZE * 0.6, center.1 - dir.1 * AGENT_SIZE * 0.6);
    let left = (back.0 + side.0 * AGENT_SIZE * 0.6, back.1 + side.1 * AGENT_SIZE * 0.6);
    let right = (back.0 - side.0 * AGENT_SIZE * 0.6, back.1 - side.1 * AGENT_SIZE * 0.6);
    draw::fill_triangle(&mut image, [apex, left, right], draw::PURPLE);
    annotations.push(Annotation::Agent { apex });
    AnnotatedFrame {
        image,
        kind: FrameKind::Bev,
        annotations,
    }
}
