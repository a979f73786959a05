//! Builds a Gaussian-splat map from a 360 degree sweep and compares renders
//! against held-out sensor views.
//!
//! `cargo run --release --example splat_map -- [seed] [out_dir]`

#[path = "common/mod.rs"]
mod common;

use nalgebra::Vector3;

use gsnav::sim::{sense, EpisodeConfig};
use gsnav::splat::ssim::ssim;
use gsnav::splat::{render, Pose};

fn main() -> gsnav::Result<()> {
    let seed = common::seed_arg(0);
    let cfg = EpisodeConfig::default();
    let scene = common::scene(seed)?;
    let center = common::start_center(&scene, &cfg);
    let map = common::sweep_map(&scene, center, 12, &cfg)?;
    println!("{} primitives from 12 views", map.len());

    let k = cfg.sensor.intrinsics()?;
    for yaw in [15.0f64, 135.0, 255.0] {
        let pose = Pose::from_yaw_pitch(
            center + Vector3::new(0.05, 0.05, 0.0),
            (scene.start.yaw + yaw).to_radians(),
            0.0,
        );
        let truth = sense(&scene, &pose, &k);
        let view = render(&map, &pose, &k);
        let covered = view.opacity.iter().filter(|o| **o >= 0.5).count() as f64 / view.opacity.len() as f64;
        println!(
            "yaw +{yaw:>3}: PSNR {:.2} dB  SSIM {:.3}  coverage {:.1}%",
            common::psnr(&view.color, &truth.rgb),
            ssim(&view.color, &truth.rgb),
            100.0 * covered
        );
    }

    if let Some(dir) = common::out_dir_arg() {
        map.save(&dir.join("map.txt"))?;
        let pose = Pose::from_yaw_pitch(center, scene.start.yaw.to_radians(), 0.0);
        common::to_image(&render(&map, &pose, &k).color).save(dir.join("render.png"))?;
        common::to_image(&sense(&scene, &pose, &k).rgb).save(dir.join("sensed.png"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
