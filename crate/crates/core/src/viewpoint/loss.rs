use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::splat::{sample_ray, CameraIntrinsics, GaussianMap, Pose, RenderedView, SplatCloud, MAX_RANGE, NEAR_PLANE};

/// Mean unobserved fraction `1 - opacity` over the view.
pub fn loss_opacity(view: &RenderedView) -> f64 {
    let n = view.opacity.len();
    if n == 0 {
        return 0.0;
    }
    view.opacity.iter().map(|o| 1.0 - o).sum::<f64>() / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    pub loss: f64,
    /// Mean visibility probability over the ray samples.
    pub mean_prv: f64,
    /// The frontier was behind the camera; the result is fixed at fully occluded.
    pub behind: bool,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn loss_occlusion(
    map: &GaussianMap,
    pose: &Pose,
    k: &CameraIntrinsics,
    frontier: &Vector3<f64>,
    n_samples: usize,
) -> Occlusion {
    loss_occlusion_cloud(&SplatCloud::from_map(map), pose, k, frontier, n_samples)
}

/// Depth-consistency visibility of the frontier. All samples on the
/// camera-to-frontier segment share one image location; each compares the
/// completed depth there (unobserved fraction read as `MAX_RANGE`) with its
/// own camera-frame depth.
pub fn loss_occlusion_cloud(
    cloud: &SplatCloud,
    pose: &Pose,
    k: &CameraIntrinsics,
    frontier: &Vector3<f64>,
    n_samples: usize,
) -> Occlusion {
    let fc = pose.world_to_camera(frontier);
    if fc.z <= NEAR_PLANE || n_samples == 0 {
        return Occlusion {
            loss: 1.0,
            mean_prv: 0.0,
            behind: true,
        };
    }
    let uv = k.project(&fc);
    let s = sample_ray(cloud, pose, k, uv.x, uv.y);
    let depth = s.depth + (1.0 - s.opacity) * MAX_RANGE;
    let mut prv = 0.0;
    for i in 1..=n_samples {
        let z = fc.z * i as f64 / n_samples as f64;
        prv += sigmoid(depth - z);
    }
    let mean_prv = prv / n_samples as f64;
    Occlusion {
        loss: 1.0 - mean_prv,
        mean_prv,
        behind: false,
    }
}

fn unit_to_frontier(pose: &Pose, frontier: &Vector3<f64>) -> Result<(Vector3<f64>, f64)> {
    let d = frontier - pose.center();
    let n = d.norm();
    if n < 1e-9 {
        return Err(Error::invalid("camera coincides with the frontier"));
    }
    Ok((d / n, n))
}

/// `(1 - cos^2 θ) * mean_prv` with θ between the optical axis and the frontier direction.
pub fn loss_alignment(pose: &Pose, frontier: &Vector3<f64>, mean_prv: f64) -> Result<f64> {
    let (u, _) = unit_to_frontier(pose, frontier)?;
    let c = pose.forward().dot(&u);
    Ok((1.0 - c * c) * mean_prv)
}

/// Gradient of `1 - cos^2 θ` on the pose tangent (world center shift, then
/// body-frame rotation).
pub fn misalignment_gradient(pose: &Pose, frontier: &Vector3<f64>) -> Result<(f64, [f64; 6])> {
    let (u, dist) = unit_to_frontier(pose, frontier)?;
    let f = pose.forward();
    let c = f.dot(&u);
    // d cos / d center = -(I - u u^T) f / |P - c|
    let d_center = -(f - u * c) / dist;
    // d cos / d omega = e_z x (R_wc^T u)
    let ub = pose.r_wc().transpose() * u;
    let d_omega = Vector3::z().cross(&ub);
    let s = -2.0 * c;
    Ok((
        1.0 - c * c,
        [
            s * d_center.x,
            s * d_center.y,
            s * d_center.z,
            s * d_omega.x,
            s * d_omega.y,
            s * d_omega.z,
        ],
    ))
}

/// Softmin attraction to the trajectory weighted by opacity-adaptive frontier
/// proximity. `l_opa_detached` is treated as a constant.
///
/// Trajectory nodes are placed at the frontier's height.
pub fn loss_trajectory(
    pos: &Vector3<f64>,
    traj_points: &[[f64; 2]],
    frontier: &Vector3<f64>,
    l_opa_detached: f64,
    beta: f64,
) -> Result<f64> {
    Ok(trajectory_terms(pos, traj_points, frontier, l_opa_detached, beta)?.0)
}

/// Loss value and its gradient with respect to the camera position.
pub fn trajectory_gradient(
    pos: &Vector3<f64>,
    traj_points: &[[f64; 2]],
    frontier: &Vector3<f64>,
    l_opa_detached: f64,
    beta: f64,
) -> Result<(f64, Vector3<f64>)> {
    let (loss, grad, _) = trajectory_terms(pos, traj_points, frontier, l_opa_detached, beta)?;
    Ok((loss, grad))
}

/// Softmax weights `exp(-β d_i) / Σ exp(-β d_j)` of the trajectory nodes.
pub fn softmin_weights(pos: &Vector3<f64>, traj_points: &[[f64; 2]], height: f64, beta: f64) -> Vec<f64> {
    let d: Vec<f64> = traj_points.iter().map(|p| (pos - node(p, height)).norm()).collect();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|x| (-beta * (x - dmin)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn node(p: &[f64; 2], z: f64) -> Vector3<f64> {
    Vector3::new(p[0], p[1], z)
}

fn trajectory_terms(
    pos: &Vector3<f64>,
    traj_points: &[[f64; 2]],
    frontier: &Vector3<f64>,
    l_opa: f64,
    beta: f64,
) -> Result<(f64, Vector3<f64>, Vec<f64>)> {
    if traj_points.is_empty() {
        return Err(Error::invalid("empty guidance trajectory"));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta {beta} must be > 0")));
    }
    let z = frontier.z;
    let diffs: Vec<Vector3<f64>> = traj_points.iter().map(|p| pos - node(p, z)).collect();
    let d: Vec<f64> = diffs.iter().map(|v| v.norm()).collect();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|x| (-beta * (x - dmin)).exp()).collect();
    let zsum: f64 = e.iter().sum();
    // -(1/β) ln Σ exp(-β d_i), evaluated stably
    let softmin = dmin - zsum.ln() / beta;
    let dp_vec = pos - frontier;
    let dp = dp_vec.norm();
    let gate = (1.0 - l_opa) / (2.0 * beta);
    let loss = gate * dp + softmin;
    let mut grad = Vector3::zeros();
    let alphas: Vec<f64> = e.iter().map(|x| x / zsum).collect();
    for i in 0..d.len() {
        if d[i] > 1e-12 {
            grad += alphas[i] * diffs[i] / d[i];
        }
    }
    if dp > 1e-12 {
        grad += gate * dp_vec / dp;
    }
    Ok((loss, grad, alphas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::GaussianPrimitive;
    use approx::assert_relative_eq;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::from_hfov(48, 36, 90.0).unwrap()
    }

    #[test]
    fn opacity_loss_bounds() {
        let mut view = RenderedView::empty(Pose::identity(), cam());
        assert_eq!(loss_opacity(&view), 1.0);
        for o in view.opacity.as_mut_slice() {
            *o = 1.0;
        }
        assert_eq!(loss_opacity(&view), 0.0);
        for (i, o) in view.opacity.as_mut_slice().iter_mut().enumerate() {
            *o = (i % 2) as f64;
        }
        assert_eq!(loss_opacity(&view), 0.5);
    }

    #[test]
    fn occlusion_empty_map() {
        let pose = Pose::from_yaw_pitch(Vector3::zeros(), 0.0, 0.0);
        let o = loss_occlusion(&GaussianMap::new(), &pose, &cam(), &Vector3::new(3.0, 0.0, 0.0), 16);
        assert!(o.loss <= 1e-3);
        assert!(!o.behind);
    }

    #[test]
    fn occlusion_behind_wall() {
        // dense opaque wall 1 m in front of the camera
        let mut prims = Vec::new();
        for i in -10..=10 {
            for j in -10..=10 {
                prims.push(GaussianPrimitive::isotropic(
                    Vector3::new(1.0, i as f64 * 0.05, j as f64 * 0.05),
                    [0.5; 3],
                    1.0,
                    0.05,
                ));
            }
        }
        let map = GaussianMap::from_primitives(prims).unwrap();
        let pose = Pose::from_yaw_pitch(Vector3::zeros(), 0.0, 0.0);
        let o = loss_occlusion(&map, &pose, &cam(), &Vector3::new(3.0, 0.0, 0.0), 1);
        // single sample at the frontier itself
        assert_relative_eq!(o.loss, 1.0 - sigmoid(1.0 + 0.001 * MAX_RANGE - 3.0), epsilon = 1e-2);
        assert!(o.loss > 0.85);
    }

    #[test]
    fn occlusion_behind_camera() {
        let pose = Pose::from_yaw_pitch(Vector3::zeros(), 0.0, 0.0);
        let o = loss_occlusion(&GaussianMap::new(), &pose, &cam(), &Vector3::new(-3.0, 0.0, 0.0), 16);
        assert_eq!(o.loss, 1.0);
        assert_eq!(o.mean_prv, 0.0);
        assert!(o.behind);
    }

    #[test]
    fn alignment_cases() {
        let pose = Pose::from_yaw_pitch(Vector3::zeros(), 0.0, 0.0);
        assert_relative_eq!(
            loss_alignment(&pose, &Vector3::new(2.0, 0.0, 0.0), 0.7).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            loss_alignment(&pose, &Vector3::new(0.0, 2.0, 0.0), 1.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(loss_alignment(&pose, &Vector3::new(0.0, 2.0, 0.0), 0.0).unwrap(), 0.0);
        assert!(loss_alignment(&pose, &Vector3::zeros(), 1.0).is_err());
    }

    #[test]
    fn misalignment_gradient_matches_fd() {
        let pose = Pose::from_yaw_pitch(Vector3::new(0.3, -0.2, 0.9), 0.4, -0.1);
        let f = Vector3::new(2.0, 1.5, 0.88);
        let (_, g) = misalignment_gradient(&pose, &f).unwrap();
        let h = 1e-6;
        for j in 0..6 {
            let mut d = [0.0; 6];
            d[j] = h;
            let p = loss_alignment(&pose.retract(&d), &f, 1.0).unwrap();
            d[j] = -h;
            let m = loss_alignment(&pose.retract(&d), &f, 1.0).unwrap();
            assert_relative_eq!(g[j], (p - m) / (2.0 * h), epsilon = 1e-6);
        }
    }

    #[test]
    fn trajectory_fixed_points() {
        let f = Vector3::new(10.0, 0.0, 0.0);
        let pos = Vector3::new(2.0, 0.0, 0.0);
        assert_relative_eq!(
            loss_trajectory(&pos, &[[0.0, 0.0]], &f, 1.0, 5.0).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let l = loss_trajectory(&Vector3::zeros(), &[[1.0, 0.0], [3.0, 0.0]], &f, 1.0, 5.0).unwrap();
        assert!(l <= 1.0 && l >= 1.0 - 2f64.ln() / 5.0);
        assert!(loss_trajectory(&pos, &[], &f, 1.0, 5.0).is_err());
    }

    #[test]
    fn softmin_weights_sum_to_one() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]];
        let w = softmin_weights(&Vector3::new(0.5, 0.2, 0.0), &pts, 0.0, 5.0);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
