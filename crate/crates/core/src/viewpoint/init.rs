use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explore::FrontierCluster;
use crate::guidance::GuidanceTrajectory;
use crate::splat::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewpointInitConfig {
    /// Weight of curvature against along-path distance in the node score.
    pub alpha: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Height of the virtual camera and of the frontier point.
    pub camera_height: f64,
    /// Node offset used for the three-point curvature estimate.
    pub curvature_span: usize,
}

impl Default for ViewpointInitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            r_min: 1.0,
            r_max: 4.0,
            camera_height: 0.88,
            curvature_span: 3,
        }
    }
}

impl ViewpointInitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha)
            || !(self.r_min > 0.0 && self.r_min < self.r_max)
            || self.curvature_span == 0
        {
            return Err(Error::invalid(format!("invalid viewpoint init config {self:?}")));
        }
        Ok(())
    }
}

/// Menger curvature of three points: `4 * area / (|ab| |bc| |ca|)`.
pub fn menger_curvature(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let bc = ((c[0] - b[0]).powi(2) + (c[1] - b[1]).powi(2)).sqrt();
    let ca = ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt();
    let denom = ab * bc * ca;
    if denom < 1e-12 {
        return 0.0;
    }
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    2.0 * cross.abs() / denom
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// World position of the frontier representative at camera height.
pub fn frontier_point(frontier: &FrontierCluster, camera_height: f64) -> Vector3<f64> {
    Vector3::new(frontier.centroid[0], frontier.centroid[1], camera_height)
}

/// Index of the trajectory node chosen as the initial viewpoint.
pub fn select_init_node(
    traj: &GuidanceTrajectory,
    frontier: &FrontierCluster,
    cfg: &ViewpointInitConfig,
) -> Result<usize> {
    cfg.validate()?;
    let pts = &traj.points;
    let n = pts.len();
    if n == 0 {
        return Err(Error::invalid("empty guidance trajectory"));
    }
    let f = frontier.centroid;
    let radial: Vec<f64> = pts
        .iter()
        .map(|p| ((p[0] - f[0]).powi(2) + (p[1] - f[1]).powi(2)).sqrt())
        .collect();
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| radial[i] > cfg.r_min && radial[i] <= cfg.r_max)
        .collect();
    if candidates.is_empty() {
        let mut best = 0;
        for i in 1..n {
            if (radial[i] - cfg.r_max).abs() < (radial[best] - cfg.r_max).abs() {
                best = i;
            }
        }
        return Ok(best);
    }
    // remaining path length from each node to the frontier end
    let mut along = vec![0.0; n];
    for i in (0..n - 1).rev() {
        let (a, b) = (pts[i], pts[i + 1]);
        along[i] = along[i + 1] + ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    }
    let s = cfg.curvature_span;
    let kappa: Vec<f64> = candidates
        .iter()
        .map(|&i| menger_curvature(pts[i.saturating_sub(s)], pts[i], pts[(i + s).min(n - 1)]))
        .collect();
    let dist: Vec<f64> = candidates.iter().map(|&i| along[i]).collect();
    let (kn, dn) = (min_max(&kappa), min_max(&dist));
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for j in 0..candidates.len() {
        let score = cfg.alpha * kn[j] + (1.0 - cfg.alpha) * dn[j];
        if score > best_score + 1e-12 {
            best = j;
            best_score = score;
        }
    }
    Ok(candidates[best])
}

/// Initial virtual camera: the selected node at camera height, facing the
/// frontier horizontally.
pub fn init_viewpoint(
    traj: &GuidanceTrajectory,
    frontier: &FrontierCluster,
    cfg: &ViewpointInitConfig,
) -> Result<Pose> {
    let i = select_init_node(traj, frontier, cfg)?;
    let p = traj.points[i];
    let f = frontier.centroid;
    let (dx, dy) = (f[0] - p[0], f[1] - p[1]);
    let yaw = if dx.hypot(dy) > 1e-9 {
        dy.atan2(dx)
    } else if i > 0 {
        // standing on the frontier: keep the direction of travel
        let q = traj.points[i - 1];
        (p[1] - q[1]).atan2(p[0] - q[0])
    } else {
        0.0
    };
    Ok(Pose::from_yaw_pitch(
        Vector3::new(p[0], p[1], cfg.camera_height),
        yaw,
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn traj(points: Vec<[f64; 2]>) -> GuidanceTrajectory {
        let n = points.len();
        GuidanceTrajectory {
            nodes: (0..n).map(|i| (0, i)).collect(),
            costs: (0..n).map(|i| i as f64).collect(),
            target: 0,
            points,
        }
    }

    fn frontier_at(p: [f64; 2]) -> FrontierCluster {
        FrontierCluster {
            id: 0,
            member_cells: vec![(0, 0)],
            centroid: p,
            cell: (0, 0),
            mean: p,
        }
    }

    #[test]
    fn curvature_of_right_angle() {
        // circumscribed circle of a right isoceles triangle with legs 1
        assert_relative_eq!(
            menger_curvature([0.0, 0.0], [1.0, 0.0], [1.0, 1.0]),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(menger_curvature([0.0, 0.0], [1.0, 0.0], [2.0, 0.0]), 0.0);
    }

    #[test]
    fn single_node_in_annulus() {
        let t = traj(vec![[0.0, 0.0], [3.5, 0.0], [4.5, 0.0]]);
        let f = frontier_at([5.0, 0.0]);
        assert_eq!(select_init_node(&t, &f, &ViewpointInitConfig::default()).unwrap(), 1);
    }

    #[test]
    fn straight_line_prefers_farthest() {
        let t = traj((0..5).map(|i| [i as f64, 0.0]).collect());
        let f = frontier_at([4.0, 0.0]);
        // radial distances 4,3,2,1,0: nodes 0..=2 are candidates
        assert_eq!(select_init_node(&t, &f, &ViewpointInitConfig::default()).unwrap(), 0);
        let pose = init_viewpoint(&t, &f, &ViewpointInitConfig::default()).unwrap();
        assert_relative_eq!(pose.yaw(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(pose.pitch(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(pose.center().z, 0.88, epsilon = 1e-12);
    }

    #[test]
    fn pure_curvature_picks_corner() {
        // L-shape with the corner at (0, 3)
        let mut pts: Vec<[f64; 2]> = (0..=3).map(|i| [0.0, i as f64 * 0.5]).collect();
        pts.extend((1..=6).map(|i| [i as f64 * 0.5, 1.5]));
        let t = traj(pts);
        let f = frontier_at([3.0, 1.5]);
        let cfg = ViewpointInitConfig {
            alpha: 1.0,
            curvature_span: 1,
            r_max: 4.0,
            ..Default::default()
        };
        assert_eq!(select_init_node(&t, &f, &cfg).unwrap(), 3);
    }

    #[test]
    fn empty_annulus_falls_back() {
        let t = traj(vec![[0.0, 0.0], [0.5, 0.0]]);
        let f = frontier_at([0.6, 0.0]);
        assert_eq!(select_init_node(&t, &f, &ViewpointInitConfig::default()).unwrap(), 0);
        assert!(init_viewpoint(&traj(vec![]), &f, &ViewpointInitConfig::default()).is_err());
    }
}
