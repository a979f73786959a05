//! Projection and front-to-back alpha compositing of Gaussian primitives.
//!
//! Every frame projects the map once, sorts the surviving splats by camera
//! depth, and composites them per pixel. Each splat's density at a pixel is
//! `min(o · exp(-½ dᵀ Σ'⁻¹ d), 0.999)` where `Σ'` is the projected covariance.
//! The same projected splat list can be sampled at continuous sub-pixel
//! locations, which the viewpoint optimizer uses for smooth depth reads.

use std::cmp::Ordering;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::camera::{CameraIntrinsics, Pose};
use super::primitive::{GaussianMap, GaussianPrimitive};
use crate::grid::Grid;

pub const NEAR_PLANE: f64 = 0.01;
pub const MAX_RANGE: f64 = 10.0;
pub const MAX_ALPHA: f64 = 0.999;
const DET_EPS: f64 = 1e-12;
/// Splats are evaluated inside their 3σ ellipse.
const CUTOFF_MAHALANOBIS2: f64 = 9.0;
/// `exp(-CUTOFF_MAHALANOBIS2 / 2)`.
const CUTOFF_FALLOFF: f64 = 0.011_108_996_538_242_306;

/// A primitive projected onto the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
}

/// Projects one primitive with the affine (EWA) approximation.
///
/// Returns `None` when the primitive center lies at or behind the near plane.
pub fn project_gaussian(g: &GaussianPrimitive, pose: &Pose, k: &CameraIntrinsics) -> Option<ProjectedGaussian> {
    let w = pose.rotation.to_rotation_matrix().into_inner();
    project_with(&g.position, &g.covariance(), &w, &pose.translation, k)
}

#[inline]
fn project_with(
    mu: &Vector3<f64>,
    cov: &Matrix3<f64>,
    w: &Matrix3<f64>,
    t: &Vector3<f64>,
    k: &CameraIntrinsics,
) -> Option<ProjectedGaussian> {
    let p = w * mu + t;
    if p.z <= NEAR_PLANE {
        return None;
    }
    Some(ProjectedGaussian {
        mean2d: k.project(&p),
        cov2d: projected_cov(&p, cov, w, k),
        depth: p.z,
    })
}

/// Bound on `x/z` and `y/z` used in the projection Jacobian. Primitives far
/// off-axis and close to the camera plane would otherwise get unbounded
/// screen-space footprints.
pub const JACOBIAN_SLOPE_LIMIT: f64 = 5.0;

#[inline]
fn projected_cov(p: &Vector3<f64>, cov: &Matrix3<f64>, w: &Matrix3<f64>, k: &CameraIntrinsics) -> Matrix2<f64> {
    let z = p.z;
    let tx = (p.x / z).clamp(-JACOBIAN_SLOPE_LIMIT, JACOBIAN_SLOPE_LIMIT);
    let ty = (p.y / z).clamp(-JACOBIAN_SLOPE_LIMIT, JACOBIAN_SLOPE_LIMIT);
    let j = Matrix2x3::new(k.fx / z, 0.0, -k.fx * tx / z, 0.0, k.fy / z, -k.fy * ty / z);
    let jw = j * w;
    let c = jw * cov * jw.transpose();
    // symmetrize against rounding
    let off = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    Matrix2::new(c[(0, 0)], off, off, c[(1, 1)])
}

/// Color, depth and accumulated opacity buffers for one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub color: Grid<[f64; 3]>,
    /// Alpha-weighted camera-frame depth.
    pub depth: Grid<f64>,
    pub opacity: Grid<f64>,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl RenderedView {
    pub fn empty(pose: Pose, k: CameraIntrinsics) -> Self {
        Self {
            color: Grid::new(k.width, k.height, [0.0; 3]),
            depth: Grid::new(k.width, k.height, 0.0),
            opacity: Grid::new(k.width, k.height, 0.0),
            pose,
            intrinsics: k,
        }
    }

    /// Depth with the unobserved fraction filled by `background`:
    /// `D + (1 - O) · background`.
    pub fn completed_depth(&self, x: usize, y: usize, background: f64) -> f64 {
        self.depth.get(x, y) + (1.0 - self.opacity.get(x, y)) * background
    }

    /// Depth divided by opacity where the pixel is at least `min_opacity` covered.
    pub fn normalized_depth(&self, x: usize, y: usize, min_opacity: f64) -> Option<f64> {
        let o = *self.opacity.get(x, y);
        (o >= min_opacity && o > 0.0).then(|| self.depth.get(x, y) / o)
    }
}

/// A cached flat copy of a map with precomputed world covariances.
#[derive(Debug, Clone, Default)]
pub struct SplatCloud {
    positions: Vec<Vector3<f64>>,
    covariances: Vec<Matrix3<f64>>,
    /// 3σ radius of the largest axis.
    radii: Vec<f64>,
    colors: Vec<[f64; 3]>,
    opacities: Vec<f64>,
}

impl SplatCloud {
    pub fn from_map(map: &GaussianMap) -> Self {
        Self::from_primitives(map.primitives())
    }

    pub fn from_primitives(prims: &[GaussianPrimitive]) -> Self {
        let mut cloud = SplatCloud {
            positions: Vec::with_capacity(prims.len()),
            covariances: Vec::with_capacity(prims.len()),
            radii: Vec::with_capacity(prims.len()),
            colors: Vec::with_capacity(prims.len()),
            opacities: Vec::with_capacity(prims.len()),
        };
        for p in prims {
            cloud.positions.push(p.position);
            cloud.covariances.push(p.covariance());
            cloud.radii.push(3.0 * p.scale.max());
            cloud.colors.push(p.color);
            cloud.opacities.push(p.opacity);
        }
        cloud
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A splat ready for rasterization.
#[derive(Debug, Clone, Copy)]
pub struct Splat {
    /// Index into the source map.
    pub source: usize,
    pub mean: Vector2<f64>,
    /// Inverse of the projected covariance.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Inclusive pixel bounds `[x0, x1] × [y0, y1]`, clipped to the image.
    pub bbox: [usize; 4],
}

impl Splat {
    /// Alpha and falloff at a continuous image location; alpha is clamped to
    /// [0, 0.999]. The Gaussian falloff is shifted and rescaled to reach zero
    /// on the 3σ ellipse, so alpha varies continuously with the pose. `None`
    /// outside the ellipse.
    #[inline]
    pub fn alpha_at(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let dx = u - self.mean.x;
        let dy = v - self.mean.y;
        let m = self.conic[(0, 0)] * dx * dx + 2.0 * self.conic[(0, 1)] * dx * dy + self.conic[(1, 1)] * dy * dy;
        if m > CUTOFF_MAHALANOBIS2 {
            return None;
        }
        let g = ((-0.5 * m).exp() - CUTOFF_FALLOFF) / (1.0 - CUTOFF_FALLOFF);
        Some(((self.opacity * g).min(MAX_ALPHA), g))
    }
}

/// Depth-sorted splats for one camera.
#[derive(Debug, Clone)]
pub struct ProjectedScene {
    pub splats: Vec<Splat>,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

/// Result of compositing at a single image location.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompositeSample {
    pub color: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
}

impl ProjectedScene {
    pub fn new(map: &GaussianMap, pose: &Pose, k: &CameraIntrinsics) -> Self {
        Self::from_cloud(&SplatCloud::from_map(map), pose, k)
    }

    pub fn from_cloud(cloud: &SplatCloud, pose: &Pose, k: &CameraIntrinsics) -> Self {
        let w = pose.rotation.to_rotation_matrix().into_inner();
        let t = pose.translation;
        let (wf, hf) = (k.width as f64, k.height as f64);
        let mut splats = Vec::new();
        for i in 0..cloud.len() {
            let p = w * cloud.positions[i] + t;
            if p.z <= NEAR_PLANE {
                continue;
            }
            // conservative screen-space reach of the 3σ sphere
            let r = cloud.radii[i];
            let slope = ((p.x / p.z).powi(2) + (p.y / p.z).powi(2) + 1.0).sqrt();
            let reach_u = k.fx * r / p.z * slope + 1.0;
            let reach_v = k.fy * r / p.z * slope + 1.0;
            let u = k.fx * p.x / p.z + k.cx;
            let v = k.fy * p.y / p.z + k.cy;
            if u + reach_u < -0.5 || u - reach_u > wf - 0.5 || v + reach_v < -0.5 || v - reach_v > hf - 0.5 {
                continue;
            }
            let cov = projected_cov(&p, &cloud.covariances[i], &w, k);
            let det = cov.determinant();
            if !(det > DET_EPS) {
                continue;
            }
            let conic = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
            let ext_u = 3.0 * cov[(0, 0)].sqrt();
            let ext_v = 3.0 * cov[(1, 1)].sqrt();
            let x0 = (u - ext_u).ceil().max(0.0);
            let x1 = (u + ext_u).floor().min(wf - 1.0);
            let y0 = (v - ext_v).ceil().max(0.0);
            let y1 = (v + ext_v).floor().min(hf - 1.0);
            if x0 > x1 || y0 > y1 {
                continue;
            }
            splats.push(Splat {
                source: i,
                mean: Vector2::new(u, v),
                conic,
                depth: p.z,
                opacity: cloud.opacities[i],
                color: cloud.colors[i],
                bbox: [x0 as usize, x1 as usize, y0 as usize, y1 as usize],
            });
        }
        splats.sort_by(|a, b| match a.depth.total_cmp(&b.depth) {
            Ordering::Equal => a.source.cmp(&b.source),
            o => o,
        });
        Self {
            splats,
            pose: *pose,
            intrinsics: *k,
        }
    }

    pub fn render(&self) -> RenderedView {
        let k = self.intrinsics;
        let mut view = RenderedView::empty(self.pose, k);
        let mut transmittance = vec![1.0f64; k.pixel_count()];
        let color = view.color.as_mut_slice();
        let depth = view.depth.as_mut_slice();
        let opacity = view.opacity.as_mut_slice();
        for s in &self.splats {
            let [x0, x1, y0, y1] = s.bbox;
            for y in y0..=y1 {
                let row = y * k.width;
                for x in x0..=x1 {
                    let Some((alpha, _)) = s.alpha_at(x as f64, y as f64) else {
                        continue;
                    };
                    let i = row + x;
                    let wgt = alpha * transmittance[i];
                    color[i][0] += s.color[0] * wgt;
                    color[i][1] += s.color[1] * wgt;
                    color[i][2] += s.color[2] * wgt;
                    depth[i] += s.depth * wgt;
                    opacity[i] += wgt;
                    transmittance[i] *= 1.0 - alpha;
                }
            }
        }
        for o in opacity.iter_mut() {
            *o = o.min(1.0);
        }
        view
    }

    /// Composites all splats covering the continuous location `(u, v)`.
    pub fn sample(&self, u: f64, v: f64) -> CompositeSample {
        let mut out = CompositeSample::default();
        let mut t = 1.0;
        for s in &self.splats {
            let Some((alpha, _)) = s.alpha_at(u, v) else {
                continue;
            };
            let wgt = alpha * t;
            for c in 0..3 {
                out.color[c] += s.color[c] * wgt;
            }
            out.depth += s.depth * wgt;
            out.opacity += wgt;
            t *= 1.0 - alpha;
        }
        out.opacity = out.opacity.min(1.0);
        out
    }
}

/// Composites the cloud along the viewing ray through the continuous image
/// location `(u, v)` of camera `k`. The location may lie outside the image.
pub fn sample_ray(cloud: &SplatCloud, pose: &Pose, k: &CameraIntrinsics, u: f64, v: f64) -> CompositeSample {
    // a one-pixel camera with the same rotation and focal length whose only
    // pixel sits on (u, v)
    let probe = CameraIntrinsics {
        cx: k.cx - u,
        cy: k.cy - v,
        width: 1,
        height: 1,
        ..*k
    };
    ProjectedScene::from_cloud(cloud, pose, &probe).sample(0.0, 0.0)
}

/// Renders color, depth and opacity of `map` seen from `pose`.
pub fn render(map: &GaussianMap, pose: &Pose, k: &CameraIntrinsics) -> RenderedView {
    ProjectedScene::new(map, pose, k).render()
}

pub fn render_cloud(cloud: &SplatCloud, pose: &Pose, k: &CameraIntrinsics) -> RenderedView {
    ProjectedScene::from_cloud(cloud, pose, k).render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 40.0, 32.0, 24.0, 64, 48).unwrap()
    }

    #[test]
    fn isotropic_on_axis_projection() {
        // J = diag(fx/z, fy/z) on the optical axis
        let (s, z) = (0.05, 2.0);
        let g = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, z), [1.0; 3], 1.0, s);
        let p = project_gaussian(&g, &Pose::identity(), &cam()).unwrap();
        assert_relative_eq!(p.cov2d[(0, 0)], (50.0 * s / z).powi(2), epsilon = 1e-12);
        assert_relative_eq!(p.cov2d[(1, 1)], (40.0 * s / z).powi(2), epsilon = 1e-12);
        assert_relative_eq!(p.cov2d[(0, 1)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.depth, z);
        assert_relative_eq!(p.mean2d, Vector2::new(32.0, 24.0));
    }

    #[test]
    fn doubling_depth_halves_projected_std() {
        let g1 = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 1.5), [1.0; 3], 1.0, 0.1);
        let g2 = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 3.0), [1.0; 3], 1.0, 0.1);
        let p1 = project_gaussian(&g1, &Pose::identity(), &cam()).unwrap();
        let p2 = project_gaussian(&g2, &Pose::identity(), &cam()).unwrap();
        assert_relative_eq!(p1.cov2d[(0, 0)].sqrt() / p2.cov2d[(0, 0)].sqrt(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(p1.cov2d[(1, 1)].sqrt() / p2.cov2d[(1, 1)].sqrt(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn vanishing_scale_gives_vanishing_covariance() {
        let g = GaussianPrimitive::isotropic(Vector3::new(0.2, 0.1, 2.0), [1.0; 3], 1.0, 1e-9);
        let p = project_gaussian(&g, &Pose::identity(), &cam()).unwrap();
        assert!(p.cov2d.norm() < 1e-12);
        // degenerate splats are skipped by the rasterizer
        let map = GaussianMap::from_primitives(vec![g]).unwrap();
        let view = render(&map, &Pose::identity(), &cam());
        assert!(view.opacity.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn near_plane_culls() {
        let g = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 0.005), [1.0; 3], 1.0, 0.1);
        assert!(project_gaussian(&g, &Pose::identity(), &cam()).is_none());
        let g = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, -1.0), [1.0; 3], 1.0, 0.1);
        assert!(project_gaussian(&g, &Pose::identity(), &cam()).is_none());
    }

    #[test]
    fn projected_covariance_is_psd_off_axis() {
        let g = GaussianPrimitive {
            position: Vector3::new(0.7, -0.4, 1.3),
            opacity: 0.5,
            color: [0.5; 3],
            scale: Vector3::new(0.2, 0.01, 0.05),
            rotation: nalgebra::UnitQuaternion::from_euler_angles(0.3, -0.9, 1.7),
        };
        let pose = Pose::from_yaw_pitch(Vector3::new(-0.2, 0.1, 0.0), 0.1, 0.2);
        if let Some(p) = project_gaussian(&g, &pose, &cam()) {
            let c = p.cov2d;
            assert_eq!(c[(0, 1)], c[(1, 0)]);
            assert!(c[(0, 0)] >= 0.0 && c[(1, 1)] >= 0.0 && c.determinant() >= -1e-18);
        }
    }

    #[test]
    fn empty_map_renders_black() {
        let view = render(&GaussianMap::new(), &Pose::identity(), &cam());
        assert!(view.opacity.iter().all(|&o| o == 0.0));
        assert!(view.depth.iter().all(|&d| d == 0.0));
        assert!(view.color.iter().all(|c| *c == [0.0; 3]));
    }

    #[test]
    fn single_opaque_gaussian_saturates_at_clamp() {
        let g = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 2.0), [0.2, 0.4, 0.6], 1.0, 0.1);
        let map = GaussianMap::from_primitives(vec![g]).unwrap();
        let view = render(&map, &Pose::identity(), &cam());
        assert_relative_eq!(*view.opacity.get(32, 24), 0.999, epsilon = 1e-12);
        assert_relative_eq!(view.normalized_depth(32, 24, 0.5).unwrap(), 2.0, epsilon = 1e-12);
        let c = view.color.get(32, 24);
        assert_relative_eq!(c[1] / 0.999, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn point_sample_matches_pixel_render() {
        let prims = vec![
            GaussianPrimitive::isotropic(Vector3::new(0.05, 0.0, 1.0), [1.0, 0.0, 0.0], 0.6, 0.1),
            GaussianPrimitive::isotropic(Vector3::new(-0.05, 0.02, 2.0), [0.0, 0.0, 1.0], 0.9, 0.2),
        ];
        let map = GaussianMap::from_primitives(prims).unwrap();
        let scene = ProjectedScene::new(&map, &Pose::identity(), &cam());
        let view = scene.render();
        for (x, y) in [(30, 20), (32, 24), (40, 30)] {
            let s = scene.sample(x as f64, y as f64);
            assert_relative_eq!(s.opacity, *view.opacity.get(x, y), epsilon = 1e-12);
            assert_relative_eq!(s.depth, *view.depth.get(x, y), epsilon = 1e-12);
        }
    }

    #[test]
    fn ray_sample_matches_pixel_and_works_off_image() {
        let prims = vec![
            GaussianPrimitive::isotropic(Vector3::new(0.05, 0.0, 1.0), [1.0, 0.0, 0.0], 0.6, 0.1),
            GaussianPrimitive::isotropic(Vector3::new(3.0, 0.0, 1.0), [0.0, 0.0, 1.0], 0.9, 0.2),
        ];
        let map = GaussianMap::from_primitives(prims).unwrap();
        let cloud = SplatCloud::from_map(&map);
        let view = render(&map, &Pose::identity(), &cam());
        let s = sample_ray(&cloud, &Pose::identity(), &cam(), 33.0, 24.0);
        assert_relative_eq!(s.depth, *view.depth.get(33, 24), epsilon = 1e-12);
        // the second primitive projects far right of the 64-pixel image
        let off = sample_ray(&cloud, &Pose::identity(), &cam(), 32.0 + 150.0, 24.0);
        assert!(off.opacity > 0.5);
        assert_relative_eq!(off.depth / off.opacity, 1.0, epsilon = 1e-9);
    }
}
