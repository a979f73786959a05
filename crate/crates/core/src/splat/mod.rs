//! Gaussian-splat scene memory: primitives, camera model, rasterization,
//! observation integration and photometric refinement.

pub mod camera;
pub mod integrate;
pub mod primitive;
pub mod refine;
pub mod render;
pub mod ssim;

pub use camera::{CameraIntrinsics, Pose};
pub use integrate::{
    integrate_observation, integrate_unobserved, integrate_unobserved_shaped, IntegrationSummary, SeedShape,
};
pub use primitive::{GaussianMap, GaussianPrimitive};
pub use refine::{evaluate_map_loss, map_loss, refine_map, MapOptConfig, ObservedFrame};
pub use render::{
    project_gaussian, render, render_cloud, sample_ray, CompositeSample, ProjectedGaussian, ProjectedScene,
    RenderedView, SplatCloud, MAX_RANGE, NEAR_PLANE,
};
