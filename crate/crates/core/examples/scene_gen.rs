//! Generates a multi-room scene and senses it from the start pose.
//!
//! `cargo run --release --example scene_gen -- [seed] [out_dir]`

#[path = "common/mod.rs"]
mod common;

use gsnav::sim::{check_scene, sense, EpisodeConfig, Surface};
use gsnav::splat::Pose;

fn main() -> gsnav::Result<()> {
    let seed = common::seed_arg(0);
    let cfg = EpisodeConfig::default();
    let scene = common::scene(seed)?;
    let (lo, hi) = scene.bounds();
    println!(
        "seed {seed}: {} rooms, {} walls, {} objects",
        scene.rooms.len(),
        scene.walls.len(),
        scene.objects.len()
    );
    println!(
        "bounds [{:.1}, {:.1}] to [{:.1}, {:.1}], target {}",
        lo[0], lo[1], hi[0], hi[1], scene.target_category
    );
    for (i, o) in scene.targets() {
        println!("  target instance {i} at ({:.2}, {:.2})", o.center().x, o.center().y);
    }
    match check_scene(&scene, cfg.agent_radius) {
        Ok(()) => println!("scene is navigable"),
        Err(e) => println!("scene check failed: {e}"),
    }

    let k = cfg.sensor.intrinsics()?;
    let pose = Pose::from_yaw_pitch(common::start_center(&scene, &cfg), scene.start.yaw.to_radians(), 0.0);
    let frame = sense(&scene, &pose, &k);
    let objects = frame.surface.iter().filter(|s| matches!(s, Surface::Object(_))).count();
    let near = frame.depth.iter().copied().fold(f64::INFINITY, f64::min);
    println!("start view: {objects} object pixels, nearest surface {near:.2} m");

    if let Some(dir) = common::out_dir_arg() {
        scene.save(&dir.join("scene.json"))?;
        common::to_image(&frame.rgb).save(dir.join("start_rgb.png"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
