//! Composes the planner prompt (frontier views plus bird's-eye map) and lets
//! the mock planner choose a frontier.
//!
//! `cargo run --release --example prompt -- [seed] [out_dir]`

#[path = "common/mod.rs"]
mod common;

use gsnav::prompt::{compose_prompt, decide_frontier, fill_template, render_bev, DecisionContext, MockPlanner};
use gsnav::sim::{frontier_views, EpisodeConfig};
use gsnav::splat::Pose;

fn main() -> gsnav::Result<()> {
    let seed = common::seed_arg(0);
    let cfg = EpisodeConfig::default();
    let scene = common::scene(seed)?;
    let center = common::start_center(&scene, &cfg);
    let map = common::sweep_map(&scene, center, 12, &cfg)?;
    let params = common::explore_params(&scene, &cfg);
    let (_, nav) = common::start_maps(&map, &scene, &cfg)?;

    let views = frontier_views(&map, &nav, scene.start.pos, scene.floor_z, &cfg, |_| false)?;
    if views.is_empty() {
        println!("no reachable frontier");
        return Ok(());
    }
    let clusters: Vec<_> = views.iter().map(|v| v.cluster.clone()).collect();
    let trajs: Vec<_> = views.iter().map(|v| v.trajectory.clone()).collect();
    let fpvs: Vec<_> = views.iter().map(|v| v.fpv.clone()).collect();
    for v in &views {
        println!("frontier #{}: {:?}", v.cluster.id, v.fpv.annotations);
    }

    let agent = Pose::from_yaw_pitch(center, scene.start.yaw.to_radians(), 0.0);
    let bev = render_bev(&map, &nav, &params, &agent, &[scene.start.pos], &clusters, &trajs);
    let instruction = format!("Find a {}.", scene.target_category.replace('_', " "));
    let prompt = compose_prompt(&fpvs, &bev, &scene.target_category, &instruction, cfg.template)?;
    println!(
        "{}\n",
        fill_template(cfg.template, &scene.target_category, &instruction, &prompt.frontier_ids)
    );

    let planner = MockPlanner {
        seed,
        ..Default::default()
    };
    let ctx = DecisionContext {
        prompt: &prompt,
        explore: &nav,
        frontiers: &clusters,
        trajectories: &trajs,
    };
    let d = decide_frontier(&ctx, &planner);
    println!("chosen frontier {} ({})", d.chosen_frontier, d.rationale);
    if let Some(why) = d.fallback {
        println!("fallback: {why}");
    }

    if let Some(dir) = common::out_dir_arg() {
        prompt.save_png(&dir.join("prompt.png"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
