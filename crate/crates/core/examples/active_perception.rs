//! Renders the opacity panorama around the agent after a single forward
//! view and picks the direction of the largest unobserved region.
//!
//! `cargo run --release --example active_perception -- [seed] [out_dir]`

#[path = "common/mod.rs"]
mod common;

use gsnav::perception::{render_panorama, select_active_target};
use gsnav::sim::EpisodeConfig;
use gsnav::splat::{GaussianMap, Pose};

fn main() -> gsnav::Result<()> {
    let seed = common::seed_arg(0);
    let cfg = EpisodeConfig::default();
    let scene = common::scene(seed)?;
    let center = common::start_center(&scene, &cfg);
    let k = cfg.sensor.intrinsics()?;
    let mut map = GaussianMap::new();
    common::integrate_frame(
        &mut map,
        &scene,
        &Pose::from_yaw_pitch(center, scene.start.yaw.to_radians(), 0.0),
        &k,
        &cfg,
    )?;

    let pan = render_panorama(&map, &center, &cfg.panorama)?;
    println!(
        "panorama {}x{} from {} views",
        pan.opacity.width(),
        pan.opacity.height(),
        pan.view_count
    );
    for v in 0..pan.view_count {
        let (lo, hi) = pan.view_yaw_range(v);
        println!("  view {v}: yaw [{lo:.1}, {hi:.1})");
    }
    let mut marks = Vec::new();
    match select_active_target(&pan, &cfg.active) {
        Some(t) => {
            println!(
                "look at pitch {:.1} yaw {:.1}: cluster of {} of {} unobserved pixels (start yaw {:.1})",
                t.pitch_deg, t.yaw_deg, t.cluster_size, t.low_opacity_pixels, scene.start.yaw
            );
            marks.push((t.pitch_deg, t.yaw_deg));
        }
        None => println!("everything around the agent is observed"),
    }

    if let Some(dir) = common::out_dir_arg() {
        pan.save_png(&dir.join("panorama.png"), &marks)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
