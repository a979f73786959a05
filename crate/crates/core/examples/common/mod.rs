//! Helpers shared by the examples.

#![allow(dead_code)]

use std::path::PathBuf;

use image::RgbImage;
use nalgebra::Vector3;

use gsnav::explore::{ExploreMap, ExploreMapParams};
use gsnav::prompt::draw::to_rgb8;
use gsnav::sim::{
    exploration_map_covering, fill_unknown_reachable, generate_scene, planning_map, sense, EpisodeConfig, Scene,
    SceneSpec,
};
use gsnav::splat::{integrate_unobserved_shaped, CameraIntrinsics, GaussianMap, Pose};
use gsnav::Grid;

/// First CLI argument parsed as a seed, else `default`.
pub fn seed_arg(default: u64) -> u64 {
    std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(default)
}

/// Second CLI argument as an output directory, created on demand.
pub fn out_dir_arg() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::args().nth(2)?);
    std::fs::create_dir_all(&dir).ok()?;
    Some(dir)
}

pub fn scene(seed: u64) -> gsnav::Result<Scene> {
    generate_scene(seed, &SceneSpec::default())
}

pub fn start_center(scene: &Scene, cfg: &EpisodeConfig) -> Vector3<f64> {
    Vector3::new(
        scene.start.pos[0],
        scene.start.pos[1],
        scene.floor_z + cfg.camera_height,
    )
}

/// Senses `views` evenly spaced yaws from `center` and integrates each frame.
pub fn sweep_map(scene: &Scene, center: Vector3<f64>, views: usize, cfg: &EpisodeConfig) -> gsnav::Result<GaussianMap> {
    let k = cfg.sensor.intrinsics()?;
    let mut map = GaussianMap::new();
    for i in 0..views {
        let yaw = scene.start.yaw.to_radians() + i as f64 * std::f64::consts::TAU / views as f64;
        integrate_frame(&mut map, scene, &Pose::from_yaw_pitch(center, yaw, 0.0), &k, cfg)?;
    }
    Ok(map)
}

pub fn explore_params(scene: &Scene, cfg: &EpisodeConfig) -> ExploreMapParams {
    ExploreMapParams {
        floor_height: scene.floor_z,
        agent_height: cfg.camera_height,
        ..cfg.explore
    }
}

/// Exploration map around the start, with the floor under the camera's blind
/// spot filled in, and the planning map with obstacles inflated.
pub fn start_maps(map: &GaussianMap, scene: &Scene, cfg: &EpisodeConfig) -> gsnav::Result<(ExploreMap, ExploreMap)> {
    let mut raw = exploration_map_covering(map, &explore_params(scene, cfg), &[scene.start.pos])?;
    fill_unknown_reachable(&mut raw, scene.start.pos, cfg.blind_radius()?);
    let nav = planning_map(&raw, scene.start.pos, cfg.agent_radius);
    Ok((raw, nav))
}

pub fn integrate_frame(
    map: &mut GaussianMap,
    scene: &Scene,
    pose: &Pose,
    k: &CameraIntrinsics,
    cfg: &EpisodeConfig,
) -> gsnav::Result<()> {
    let f = sense(scene, pose, k);
    integrate_unobserved_shaped(
        map,
        &f.rgb,
        &f.depth,
        pose,
        k,
        cfg.integrate_stride,
        cfg.coverage_threshold,
        cfg.seed_shape,
    )?;
    Ok(())
}

pub fn to_image(g: &Grid<[f64; 3]>) -> RgbImage {
    RgbImage::from_fn(g.width() as u32, g.height() as u32, |x, y| {
        to_rgb8(*g.get(x as usize, y as usize))
    })
}

pub fn psnr(a: &Grid<[f64; 3]>, b: &Grid<[f64; 3]>) -> f64 {
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>() / 3.0)
        .sum::<f64>()
        / a.len() as f64;
    10.0 * (1.0 / mse).log10()
}
