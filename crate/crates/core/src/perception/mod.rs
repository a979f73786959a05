//! Panoramic opacity fields and opacity-driven selection of the next look
//! direction.
//!
//! A panorama is `view_count` pinhole views rendered from one position at
//! evenly spaced yaws and concatenated left to right. Column blocks are
//! ordered by decreasing yaw so the strip reads like a real panorama: the
//! leftmost column looks toward +180°, the rightmost toward -180°.

pub mod dbscan;

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::splat::{CameraIntrinsics, GaussianMap, Pose, SplatCloud};
use dbscan::{dbscan, yaw_delta, AnglePoint};

/// Intrinsics for one panorama view: `fx = fy = W / (2 tan(hfov/2))`,
/// `cx = W/2`. The height follows the vertical relation
/// `H = round(2 fy tan(vfov/2))` with `cy = H/2`.
pub fn panorama_intrinsics(per_view_width: usize, hfov_deg: f64, vfov_deg: f64) -> Result<CameraIntrinsics> {
    check_fov(hfov_deg, vfov_deg)?;
    if per_view_width == 0 {
        return Err(Error::invalid("panorama view width must be positive"));
    }
    let f = focal_for(per_view_width, hfov_deg);
    let height = ((2.0 * f * (vfov_deg.to_radians() / 2.0).tan()).round() as usize).max(1);
    CameraIntrinsics::new(
        f,
        f,
        per_view_width as f64 / 2.0,
        height as f64 / 2.0,
        per_view_width,
        height,
    )
}

fn focal_for(width: usize, hfov_deg: f64) -> f64 {
    width as f64 / (2.0 * (hfov_deg.to_radians() / 2.0).tan())
}

fn check_fov(hfov_deg: f64, vfov_deg: f64) -> Result<()> {
    if !(hfov_deg > 0.0 && hfov_deg < 180.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0) {
        return Err(Error::invalid(format!(
            "field of view ({hfov_deg}, {vfov_deg}) outside (0, 180)"
        )));
    }
    Ok(())
}

/// Number of evenly spaced views needed to cover 360° of yaw.
pub fn view_count(hfov_deg: f64) -> usize {
    (360.0 / hfov_deg - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanoramaConfig {
    pub per_view_width: usize,
    /// Fixed per-view height; `None` derives it from `vfov_deg`.
    pub per_view_height: Option<usize>,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
}

impl Default for PanoramaConfig {
    fn default() -> Self {
        Self {
            per_view_width: 120,
            per_view_height: Some(150),
            hfov_deg: 120.0,
            vfov_deg: 150.0,
        }
    }
}

impl PanoramaConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let k = panorama_intrinsics(self.per_view_width, self.hfov_deg, self.vfov_deg)?;
        match self.per_view_height {
            None => Ok(k),
            Some(h) => CameraIntrinsics::new(k.fx, k.fy, k.cx, h as f64 / 2.0, k.width, h),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PanoramaField {
    pub opacity: Grid<f64>,
    pub depth: Grid<f64>,
    pub view_count: usize,
    pub hfov_deg: f64,
    /// Effective vertical field of view of each view.
    pub vfov_deg: f64,
    pub view_intrinsics: CameraIntrinsics,
    /// Center yaw (degrees) of each column block, left to right.
    pub view_yaws: Vec<f64>,
}

impl PanoramaField {
    pub fn per_view_width(&self) -> usize {
        self.view_intrinsics.width
    }

    /// `(pitch, yaw)` in degrees of the ray through pixel `(x, y)`; yaw is
    /// wrapped to `[-180, 180)`.
    pub fn angle_of_pixel(&self, x: usize, y: usize) -> (f64, f64) {
        let k = &self.view_intrinsics;
        let view = x / k.width;
        let u = (x % k.width) as f64;
        let rx = (u - k.cx) / k.fx;
        let ry = (y as f64 - k.cy) / k.fy;
        let yaw = self.view_yaws[view] - rx.atan().to_degrees();
        let pitch = (-ry).atan2((1.0 + rx * rx).sqrt()).to_degrees();
        (pitch, wrap_yaw(yaw))
    }

    /// Nominal half-open yaw interval `[lo, hi)` owned by view `k`.
    pub fn view_yaw_range(&self, view: usize) -> (f64, f64) {
        let spacing = 360.0 / self.view_count as f64;
        let c = self.view_yaws[view];
        (c - spacing / 2.0, c + spacing / 2.0)
    }

    /// Writes the opacity strip as grayscale, with optional crosses at the
    /// given `(pitch, yaw)` marks.
    pub fn save_png(&self, path: &Path, marks: &[(f64, f64)]) -> Result<()> {
        let (w, h) = (self.opacity.width() as u32, self.opacity.height() as u32);
        let gray = GrayImage::from_fn(w, h, |x, y| {
            Luma([(self.opacity.get(x as usize, y as usize) * 255.0).round() as u8])
        });
        let mut img: RgbImage = RgbImage::from_fn(w, h, |x, y| {
            let v = gray.get_pixel(x, y)[0];
            Rgb([v, v, v])
        });
        for &(pitch, yaw) in marks {
            if let Some((px, py)) = self.pixel_of_angle(pitch, yaw) {
                for d in -4i64..=4 {
                    for (x, y) in [(px as i64 + d, py as i64), (px as i64, py as i64 + d)] {
                        if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                            img.put_pixel(x as u32, y as u32, Rgb([255, 0, 0]));
                        }
                    }
                }
            }
        }
        img.save(path)?;
        Ok(())
    }

    /// Inverse of [`angle_of_pixel`](Self::angle_of_pixel), rounded to the nearest pixel.
    pub fn pixel_of_angle(&self, pitch: f64, yaw: f64) -> Option<(usize, usize)> {
        let nominal = (0..self.view_count).find(|&v| {
            let (lo, hi) = self.view_yaw_range(v);
            let d = yaw_delta(yaw, lo);
            d >= 0.0 && d < hi - lo
        });
        // angles on a view boundary can fall just outside the nominal view's image
        nominal
            .into_iter()
            .chain(0..self.view_count)
            .find_map(|view| self.pixel_in_view(view, pitch, yaw))
    }

    fn pixel_in_view(&self, view: usize, pitch: f64, yaw: f64) -> Option<(usize, usize)> {
        let k = &self.view_intrinsics;
        let dyaw = yaw_delta(yaw, self.view_yaws[view]);
        if dyaw.abs() >= 90.0 {
            return None;
        }
        let rx = (-dyaw.to_radians()).tan();
        let ry = -(pitch.to_radians().tan()) * (1.0 + rx * rx).sqrt();
        let u = (rx * k.fx + k.cx).round();
        let v = (ry * k.fy + k.cy).round();
        if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
            return None;
        }
        Some((view * k.width + u as usize, v as usize))
    }
}

#[inline]
pub fn wrap_yaw(yaw: f64) -> f64 {
    (yaw + 180.0).rem_euclid(360.0) - 180.0
}

/// Renders `view_count` yaw views at `center` (pitch 0, roll 0) and
/// concatenates their opacity and depth buffers horizontally.
pub fn render_panorama(map: &GaussianMap, center: &Vector3<f64>, cfg: &PanoramaConfig) -> Result<PanoramaField> {
    render_panorama_cloud(&SplatCloud::from_map(map), center, cfg)
}

pub fn render_panorama_cloud(cloud: &SplatCloud, center: &Vector3<f64>, cfg: &PanoramaConfig) -> Result<PanoramaField> {
    check_fov(cfg.hfov_deg, cfg.vfov_deg)?;
    let k = cfg.intrinsics()?;
    let n = view_count(cfg.hfov_deg);
    let spacing = 360.0 / n as f64;
    let view_yaws: Vec<f64> = (0..n)
        .map(|i| wrap_yaw(180.0 - spacing / 2.0 - i as f64 * spacing))
        .collect();
    let mut opacity = Grid::new(k.width * n, k.height, 0.0);
    let mut depth = Grid::new(k.width * n, k.height, 0.0);
    for (i, yaw) in view_yaws.iter().enumerate() {
        let pose = Pose::from_yaw_pitch(*center, yaw.to_radians(), 0.0);
        let view = crate::splat::render_cloud(cloud, &pose, &k);
        for y in 0..k.height {
            for x in 0..k.width {
                opacity.set(i * k.width + x, y, *view.opacity.get(x, y));
                depth.set(i * k.width + x, y, *view.depth.get(x, y));
            }
        }
    }
    let vfov_deg = 2.0 * (k.height as f64 / 2.0 / k.fy).atan().to_degrees();
    Ok(PanoramaField {
        opacity,
        depth,
        view_count: n,
        hfov_deg: cfg.hfov_deg,
        vfov_deg,
        view_intrinsics: k,
        view_yaws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivePerceptionConfig {
    /// Opacity below which a direction counts as unobserved.
    pub tau: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
}

impl Default for ActivePerceptionConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            dbscan_eps: 6.0,
            dbscan_min_pts: 8,
        }
    }
}

impl ActivePerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) || !(self.dbscan_eps > 0.0) || self.dbscan_min_pts == 0 {
            return Err(Error::invalid(format!("bad active perception config {self:?}")));
        }
        Ok(())
    }
}

/// The chosen look direction and the low-opacity region behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveTarget {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    /// Pixels in the winning cluster.
    pub cluster_size: usize,
    /// All pixels below the threshold.
    pub low_opacity_pixels: usize,
}

/// Clusters low-opacity pixels in angle space and returns the centroid of the
/// largest cluster (circular mean in yaw, arithmetic mean in pitch).
pub fn select_active_viewpoint(pan: &PanoramaField, cfg: &ActivePerceptionConfig) -> Option<(f64, f64)> {
    select_active_target(pan, cfg).map(|t| (t.pitch_deg, t.yaw_deg))
}

pub fn select_active_target(pan: &PanoramaField, cfg: &ActivePerceptionConfig) -> Option<ActiveTarget> {
    let points: Vec<AnglePoint> = pan
        .opacity
        .enumerate()
        .filter(|(_, _, o)| **o < cfg.tau)
        .map(|(x, y, _)| {
            let (pitch, yaw) = pan.angle_of_pixel(x, y);
            AnglePoint { pitch, yaw }
        })
        .collect();
    if points.is_empty() {
        return None;
    }
    let clustering = dbscan(&points, cfg.dbscan_eps, cfg.dbscan_min_pts);
    let sizes = clustering.sizes();
    // first cluster wins ties
    let (best, &size) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &usize)>, (i, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })?;
    let (mut sx, mut sy, mut sp) = (0.0, 0.0, 0.0);
    for i in clustering.members(best) {
        let p = &points[i];
        let r = p.yaw.to_radians();
        sx += r.cos();
        sy += r.sin();
        sp += p.pitch;
    }
    Some(ActiveTarget {
        pitch_deg: sp / size as f64,
        yaw_deg: wrap_yaw(sy.atan2(sx).to_degrees()),
        cluster_size: size,
        low_opacity_pixels: points.len(),
    })
}
