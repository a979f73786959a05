use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::loss::{loss_occlusion_cloud, loss_opacity, misalignment_gradient, trajectory_gradient};
use crate::error::{Error, Result};
use crate::splat::{render_cloud, CameraIntrinsics, GaussianMap, Pose, SplatCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_opa: f64,
    pub w_vis: f64,
    pub w_cos: f64,
    pub w_traj: f64,
    pub beta: f64,
    pub iterations: usize,
    pub ray_samples: usize,
    pub step_size: f64,
    /// Central-difference step for rendered terms (meters and radians).
    pub fd_step: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_opa: 0.01,
            w_vis: 1.0,
            w_cos: 0.01,
            w_traj: 0.1,
            beta: 5.0,
            iterations: 40,
            ray_samples: 16,
            step_size: 0.05,
            fd_step: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.w_opa, self.w_vis, self.w_cos, self.w_traj]
            .iter()
            .all(|w| *w >= 0.0)
            && self.beta > 0.0
            && self.ray_samples >= 2
            && self.step_size > 0.0
            && self.fd_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid loss weights {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub opa: f64,
    pub vis: f64,
    pub cos: f64,
    pub traj: f64,
    pub total: f64,
    /// The frontier was behind the camera at this pose.
    pub behind: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lr: f64,
    pub accepted: bool,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointPose {
    pub pose: Pose,
    pub loss_breakdown: LossBreakdown,
    pub initial_loss: LossBreakdown,
    pub iterations_run: usize,
    pub trace: Vec<TraceRow>,
}

/// Everything the composite objective needs besides the pose.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub cloud: &'a SplatCloud,
    pub intrinsics: &'a CameraIntrinsics,
    pub traj_points: &'a [[f64; 2]],
    pub frontier: Vector3<f64>,
    pub weights: &'a LossWeights,
}

impl Objective<'_> {
    fn opacity(&self, pose: &Pose) -> f64 {
        loss_opacity(&render_cloud(self.cloud, pose, self.intrinsics))
    }

    fn occlusion(&self, pose: &Pose) -> super::loss::Occlusion {
        loss_occlusion_cloud(
            self.cloud,
            pose,
            self.intrinsics,
            &self.frontier,
            self.weights.ray_samples,
        )
    }

    /// All loss terms at `pose`.
    pub fn evaluate(&self, pose: &Pose) -> Result<LossBreakdown> {
        let opa = self.opacity(pose);
        self.evaluate_detached(pose, opa, opa)
    }

    /// Loss terms with the trajectory gate held at `l_opa_detached`; `opa`
    /// is the already-rendered opacity loss at `pose`.
    pub fn evaluate_detached(&self, pose: &Pose, opa: f64, l_opa_detached: f64) -> Result<LossBreakdown> {
        let w = self.weights;
        let occ = self.occlusion(pose);
        let (mis, _) = misalignment_gradient(pose, &self.frontier)?;
        let cos = mis * occ.mean_prv;
        let (traj, _) = trajectory_gradient(&pose.center(), self.traj_points, &self.frontier, l_opa_detached, w.beta)?;
        Ok(LossBreakdown {
            opa,
            vis: occ.loss,
            cos,
            traj,
            total: w.w_opa * opa + w.w_vis * occ.loss + w.w_cos * cos + w.w_traj * traj,
            behind: occ.behind,
        })
    }

    /// Composite loss with the opacity gate held fixed, re-rendering the opacity term.
    pub fn total_detached(&self, pose: &Pose, l_opa_detached: f64) -> Result<f64> {
        let opa = if self.weights.w_opa > 0.0 {
            self.opacity(pose)
        } else {
            0.0
        };
        Ok(self.evaluate_detached(pose, opa, l_opa_detached)?.total)
    }

    fn central_difference(&self, pose: &Pose, f: impl Fn(&Pose) -> f64) -> [f64; 6] {
        let h = self.weights.fd_step;
        let mut g = [0.0; 6];
        for (j, gj) in g.iter_mut().enumerate() {
            let mut d = [0.0; 6];
            d[j] = h;
            let plus = f(&pose.retract(&d));
            d[j] = -h;
            let minus = f(&pose.retract(&d));
            *gj = (plus - minus) / (2.0 * h);
        }
        g
    }

    /// Loss terms and the gradient of the total on the pose tangent. Rendered
    /// terms use central differences; alignment geometry and the trajectory
    /// term are analytic. The opacity gate of the trajectory term is detached.
    pub fn gradient(&self, pose: &Pose) -> Result<(LossBreakdown, [f64; 6])> {
        let w = self.weights;
        let base = self.evaluate(pose)?;
        let mut g = [0.0; 6];
        if w.w_opa > 0.0 {
            let go = self.central_difference(pose, |p| self.opacity(p));
            for j in 0..6 {
                g[j] += w.w_opa * go[j];
            }
        }
        if w.w_vis > 0.0 || w.w_cos > 0.0 {
            let gv = self.central_difference(pose, |p| self.occlusion(p).loss);
            let (mis, gm) = misalignment_gradient(pose, &self.frontier)?;
            let prv = 1.0 - base.vis;
            for j in 0..6 {
                // mean_prv = 1 - vis, so its gradient is -gv
                g[j] += w.w_vis * gv[j] + w.w_cos * (mis * -gv[j] + prv * gm[j]);
            }
        }
        if w.w_traj > 0.0 {
            let (_, gt) = trajectory_gradient(&pose.center(), self.traj_points, &self.frontier, base.opa, w.beta)?;
            for j in 0..3 {
                g[j] += w.w_traj * gt[j];
            }
        }
        Ok((base, g))
    }
}

pub fn optimize_viewpoint(
    map: &GaussianMap,
    k: &CameraIntrinsics,
    init: &Pose,
    traj_points: &[[f64; 2]],
    frontier: &Vector3<f64>,
    weights: &LossWeights,
) -> Result<ViewpointPose> {
    let cloud = SplatCloud::from_map(map);
    let obj = Objective {
        cloud: &cloud,
        intrinsics: k,
        traj_points,
        frontier: *frontier,
        weights,
    };
    optimize(&obj, init)
}

/// Normalized first-moment descent on the pose tangent. A step that does not
/// lower the total is rejected and halves the learning rate, so the returned
/// pose is the best iterate seen.
pub fn optimize(obj: &Objective<'_>, init: &Pose) -> Result<ViewpointPose> {
    obj.weights.validate()?;
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    let mut pose = *init;
    let (mut cur, mut g) = obj.gradient(&pose)?;
    let initial = cur;
    let mut m = [0.0; 6];
    let mut v = [0.0; 6];
    let mut lr = obj.weights.step_size;
    let mut trace = Vec::with_capacity(obj.weights.iterations);
    for it in 1..=obj.weights.iterations {
        let mut delta = [0.0; 6];
        let (c1, c2) = (1.0 - B1.powi(it as i32), 1.0 - B2.powi(it as i32));
        for j in 0..6 {
            m[j] = B1 * m[j] + (1.0 - B1) * g[j];
            v[j] = B2 * v[j] + (1.0 - B2) * g[j] * g[j];
            delta[j] = -lr * (m[j] / c1) / ((v[j] / c2).sqrt() + 1e-8);
        }
        let cand = pose.retract(&delta);
        let cand_loss = obj.evaluate(&cand)?;
        let accepted = cand_loss.total < cur.total;
        if accepted {
            pose = cand;
            (cur, g) = obj.gradient(&pose)?;
        } else {
            lr *= 0.5;
        }
        trace.push(TraceRow {
            iteration: it,
            lr,
            accepted,
            loss: if accepted { cur } else { cand_loss },
        });
    }
    Ok(ViewpointPose {
        pose,
        loss_breakdown: cur,
        initial_loss: initial,
        iterations_run: obj.weights.iterations,
        trace,
    })
}

/// Writes per-iteration losses as CSV.
pub fn write_trace_csv(path: &Path, frontier_id: usize, trace: &[TraceRow]) -> Result<()> {
    let exists = path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    if !exists {
        out.push_str("frontier,iteration,lr,accepted,opa,vis,cos,traj,total\n");
    }
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            frontier_id,
            r.iteration,
            r.lr,
            r.accepted as u8,
            r.loss.opa,
            r.loss.vis,
            r.loss.cos,
            r.loss.traj,
            r.loss.total
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
