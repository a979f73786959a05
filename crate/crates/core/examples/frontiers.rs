//! Projects a splat map to a 2D exploration map and clusters its frontiers.
//!
//! `cargo run --release --example frontiers -- [seed] [out_dir]`

#[path = "common/mod.rs"]
mod common;

use gsnav::explore::{cluster_frontiers, extract_frontiers, CellState, DistanceField};
use gsnav::sim::EpisodeConfig;

fn main() -> gsnav::Result<()> {
    let seed = common::seed_arg(0);
    let cfg = EpisodeConfig::default();
    let scene = common::scene(seed)?;
    let map = common::sweep_map(&scene, common::start_center(&scene, &cfg), 12, &cfg)?;

    let (m, _) = common::start_maps(&map, &scene, &cfg)?;
    println!(
        "{}x{} cells at {} m: free {} obstacle {} unknown {}",
        m.width(),
        m.height(),
        m.resolution(),
        m.count(CellState::Free),
        m.count(CellState::Obstacle),
        m.count(CellState::Unknown)
    );

    let df = DistanceField::compute(&m);
    if let Some(c) = m.cell_of_world(scene.start.pos) {
        println!("obstacle clearance at the start {} cells", df.get(c));
    }

    let cells = extract_frontiers(&m);
    let clusters = cluster_frontiers(&m, &cells);
    println!("{} frontier cells in {} clusters", cells.len(), clusters.len());
    for c in &clusters {
        println!(
            "  #{:<2} {:>4} cells, representative ({:.2}, {:.2})",
            c.id,
            c.member_cells.len(),
            c.centroid[0],
            c.centroid[1]
        );
    }

    if let Some(dir) = common::out_dir_arg() {
        m.save(&dir.join("explore.pgm"), &cells)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
