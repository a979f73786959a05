use nalgebra::{UnitQuaternion, Vector3};

use super::camera::{CameraIntrinsics, Pose};
use super::primitive::{GaussianMap, GaussianPrimitive};
use super::render::{render, MAX_RANGE, NEAR_PLANE};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const INITIAL_OPACITY: f64 = 0.9;
/// Longest in-surface standard deviation a surface-aligned seed may get on
/// level surfaces well below the camera, and on everything else. Upright
/// surfaces and furniture tops stay tight so doorways seen at a grazing
/// angle do not close.
const MAX_LEVEL_SIGMA: f64 = 0.5;
const MAX_UPRIGHT_SIGMA: f64 = 0.08;

/// Shape of newly seeded primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedShape {
    /// Sphere with σ = depth/fx · stride/2.
    #[default]
    Isotropic,
    /// Flat disc spanning the gap to the neighboring samples on the same
    /// surface, so grazing surfaces stay closed from every viewpoint.
    Surface,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationSummary {
    pub added: usize,
    /// Sampled pixels rejected for depth outside the valid range.
    pub invalid_depth: usize,
    /// Sampled pixels skipped because the map already covered them.
    pub already_observed: usize,
}

/// Back-projects every `stride`-th pixel into a new isotropic primitive.
///
/// Pixels are sampled at `stride/2 + i·stride`, so exactly
/// `floor(W/stride) · floor(H/stride)` pixels are visited. Depth must lie in
/// `(NEAR_PLANE, MAX_RANGE)`; the sensor reports misses as `MAX_RANGE`.
pub fn integrate_observation(
    map: &mut GaussianMap,
    rgb: &Grid<[f64; 3]>,
    depth: &Grid<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
    stride: usize,
) -> Result<IntegrationSummary> {
    integrate_inner(map, rgb, depth, pose, k, stride, None)
}

/// Like [`integrate_observation`] but only seeds pixels whose rendered
/// opacity from the current map is below `opacity_threshold`.
pub fn integrate_unobserved(
    map: &mut GaussianMap,
    rgb: &Grid<[f64; 3]>,
    depth: &Grid<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
    stride: usize,
    opacity_threshold: f64,
) -> Result<IntegrationSummary> {
    let coverage = if map.is_empty() {
        None
    } else {
        Some((render(map, pose, k).opacity, opacity_threshold))
    };
    integrate_inner(
        map,
        rgb,
        depth,
        pose,
        k,
        stride,
        coverage.as_ref().map(|(g, t)| (g, *t)),
    )
}

/// [`integrate_unobserved`] with a choice of seed shape.
#[allow(clippy::too_many_arguments)]
pub fn integrate_unobserved_shaped(
    map: &mut GaussianMap,
    rgb: &Grid<[f64; 3]>,
    depth: &Grid<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
    stride: usize,
    opacity_threshold: f64,
    shape: SeedShape,
) -> Result<IntegrationSummary> {
    let before = map.len();
    let summary = integrate_unobserved(map, rgb, depth, pose, k, stride, opacity_threshold)?;
    if shape == SeedShape::Surface && map.len() > before {
        map.update(|i, g| {
            if i >= before {
                if let Some(cov) = surface_covariance(depth, pose, k, stride, g) {
                    let (scale, rotation) = factor_covariance(&cov);
                    g.scale = scale;
                    g.rotation = rotation;
                }
            }
        });
    }
    Ok(summary)
}

fn valid(z: f64) -> bool {
    z.is_finite() && z > NEAR_PLANE && z < MAX_RANGE
}

/// Covariance of a disc through the seed at `g` spanning half the distance
/// to the next sample along each image axis. On each axis the shorter side
/// is used, so a depth edge never stretches the disc across the gap.
fn surface_covariance(
    depth: &Grid<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
    stride: usize,
    g: &GaussianPrimitive,
) -> Option<nalgebra::Matrix3<f64>> {
    let p_cam = pose.world_to_camera(&g.position);
    let u = (p_cam.x / p_cam.z * k.fx + k.cx).round() as isize;
    let v = (p_cam.y / p_cam.z * k.fy + k.cy).round() as isize;
    let s = stride as isize;
    let point = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= k.width as isize || y >= k.height as isize {
            return None;
        }
        let z = *depth.get(x as usize, y as usize);
        valid(z).then(|| k.back_project(x as f64, y as f64, z))
    };
    let iso = g.scale.x;
    let axis = |du: isize, dv: isize| -> Option<Vector3<f64>> {
        let a = point(u + du, v + dv).map(|q| q - p_cam);
        let b = point(u - du, v - dv).map(|q| p_cam - q);
        let shortest = match (a, b) {
            (Some(a), Some(b)) => {
                if a.norm() <= b.norm() {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return None,
        };
        Some(shortest / 2.0)
    };
    let (a, b) = (axis(s, 0)?, axis(0, s)?);
    let n = a.cross(&b);
    if n.norm() < 1e-12 {
        return None;
    }
    let r = pose.r_wc();
    let (a, b, n) = (r * a, r * b, r * n.normalize());
    let low = g.position.z < pose.center().z - 0.6;
    let cap = if n.z.abs() > 0.7 && low {
        MAX_LEVEL_SIGMA
    } else {
        MAX_UPRIGHT_SIGMA
    };
    let clamp = |v: Vector3<f64>| if v.norm() > cap { v * (cap / v.norm()) } else { v };
    let (a, b) = (clamp(a), clamp(b));
    // never thinner than the isotropic seed inside the surface
    let floor = iso * iso;
    Some(
        a * a.transpose()
            + b * b.transpose()
            + (n * n.transpose()) * floor
            + nalgebra::Matrix3::identity() * (floor * 1e-2),
    )
}

/// Scale and rotation with `R diag(s²) Rᵀ = cov`.
fn factor_covariance(cov: &nalgebra::Matrix3<f64>) -> (Vector3<f64>, UnitQuaternion<f64>) {
    let eig = nalgebra::SymmetricEigen::new(*cov);
    let mut v = eig.eigenvectors;
    if v.determinant() < 0.0 {
        v.set_column(2, &(-v.column(2)));
    }
    let rot = nalgebra::Rotation3::from_matrix_unchecked(v);
    let scale = eig.eigenvalues.map(|l| l.max(1e-12).sqrt());
    (scale, UnitQuaternion::from_rotation_matrix(&rot))
}

fn integrate_inner(
    map: &mut GaussianMap,
    rgb: &Grid<[f64; 3]>,
    depth: &Grid<f64>,
    pose: &Pose,
    k: &CameraIntrinsics,
    stride: usize,
    coverage: Option<(&Grid<f64>, f64)>,
) -> Result<IntegrationSummary> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    for (name, w, h) in [
        ("rgb", rgb.width(), rgb.height()),
        ("depth", depth.width(), depth.height()),
    ] {
        if w != k.width || h != k.height {
            return Err(Error::invalid(format!(
                "{name} is {w}x{h} but intrinsics are {}x{}",
                k.width, k.height
            )));
        }
    }
    let mut summary = IntegrationSummary::default();
    let mut fresh = Vec::new();
    let offset = stride / 2;
    for j in 0..k.height / stride {
        let v = offset + j * stride;
        for i in 0..k.width / stride {
            let u = offset + i * stride;
            let z = *depth.get(u, v);
            if !(z.is_finite() && z > NEAR_PLANE && z < MAX_RANGE) {
                summary.invalid_depth += 1;
                continue;
            }
            if let Some((opacity, thr)) = coverage {
                if *opacity.get(u, v) >= thr {
                    summary.already_observed += 1;
                    continue;
                }
            }
            let p_cam = k.back_project(u as f64, v as f64, z);
            let color = rgb.get(u, v).map(|c| c.clamp(0.0, 1.0));
            let scale = z / k.fx * stride as f64 / 2.0;
            fresh.push(GaussianPrimitive::isotropic(
                pose.camera_to_world(&p_cam),
                color,
                INITIAL_OPACITY,
                scale,
            ));
        }
    }
    summary.added = fresh.len();
    if !fresh.is_empty() {
        map.extend(fresh)?;
    }
    Ok(summary)
}
