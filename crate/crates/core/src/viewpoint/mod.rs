//! Free-viewpoint placement: initialization on the guidance trajectory and
//! pose refinement under the composite visibility loss.

mod init;
mod loss;
mod optimize;

pub use init::{frontier_point, init_viewpoint, menger_curvature, select_init_node, ViewpointInitConfig};
pub use loss::{
    loss_alignment, loss_occlusion, loss_occlusion_cloud, loss_opacity, loss_trajectory, misalignment_gradient,
    sigmoid, softmin_weights, trajectory_gradient, Occlusion,
};
pub use optimize::{
    optimize, optimize_viewpoint, write_trace_csv, LossBreakdown, LossWeights, Objective, TraceRow, ViewpointPose,
};
