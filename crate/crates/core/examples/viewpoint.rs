//! Optimizes a virtual viewpoint toward each frontier and reports the loss
//! terms before and after.
//!
//! `cargo run --release --example viewpoint -- [seed]`

#[path = "common/mod.rs"]
mod common;

use gsnav::explore::{cluster_frontiers, extract_frontiers, DistanceField};
use gsnav::guidance::plan_guidance;
use gsnav::sim::EpisodeConfig;
use gsnav::viewpoint::{frontier_point, init_viewpoint, optimize_viewpoint, LossBreakdown};

fn show(l: &LossBreakdown) -> String {
    format!(
        "opa {:.3} vis {:.3} cos {:.3} traj {:.3} total {:.4}",
        l.opa, l.vis, l.cos, l.traj, l.total
    )
}

fn main() -> gsnav::Result<()> {
    let seed = common::seed_arg(0);
    let cfg = EpisodeConfig::default();
    let scene = common::scene(seed)?;
    let map = common::sweep_map(&scene, common::start_center(&scene, &cfg), 12, &cfg)?;
    let (_, nav) = common::start_maps(&map, &scene, &cfg)?;
    let start = nav.cell_of_world(scene.start.pos).expect("start lies on the map");
    let df = DistanceField::compute(&nav);
    let k = cfg.opt_camera.intrinsics()?;

    let clusters = cluster_frontiers(&nav, &extract_frontiers(&nav));
    for c in clusters
        .iter()
        .filter(|c| c.member_cells.len() >= cfg.min_frontier_cells && c.cell != start)
    {
        let Ok(t) = plan_guidance(&nav, &df, start, c, &cfg.guidance) else {
            println!("frontier #{}: unreachable", c.id);
            continue;
        };
        let fp = frontier_point(c, scene.floor_z + cfg.camera_height);
        let init = init_viewpoint(&t, c, &cfg.viewpoint_init)?;
        let vp = optimize_viewpoint(&map, &k, &init, &t.points, &fp, &cfg.weights)?;
        let moved = (vp.pose.center() - init.center()).norm();
        println!(
            "frontier #{} ({:.2}, {:.2}), path {:.2} m",
            c.id,
            fp.x,
            fp.y,
            t.length()
        );
        println!("  init  {}", show(&vp.initial_loss));
        println!("  final {}", show(&vp.loss_breakdown));
        println!("  {} iterations, camera moved {moved:.2} m", vp.iterations_run);
    }
    Ok(())
}
