//! Plans guidance trajectories through a doorway and shows how the safety
//! weight trades path length for obstacle clearance.
//!
//! `cargo run --release --example guidance`

use gsnav::explore::{cluster_frontiers, extract_frontiers, DistanceField, ExploreMap};
use gsnav::guidance::{penalty, plan_guidance, GuidanceConfig};

const ROWS: [&str; 15] = [
    "############################",
    "#..........#...............?",
    "#..........#...............?",
    "#..........#...............?",
    "#..........#...............?",
    "#..........................?",
    "#..........................?",
    "#..........................?",
    "#..........................?",
    "#..........................?",
    "#..........#...............?",
    "#..........#...............?",
    "#..........#...............?",
    "#..........#...............?",
    "############################",
];

const DOOR_COLUMN: usize = 11;

fn main() -> gsnav::Result<()> {
    let m = ExploreMap::from_ascii(&ROWS, 0.05)?;
    let df = DistanceField::compute(&m);
    let clusters = cluster_frontiers(&m, &extract_frontiers(&m));
    let goal = clusters.first().expect("the open edge is a frontier");
    let start = (2, 2);
    println!("start {start:?} -> frontier #{} at cell {:?}", goal.id, goal.cell);

    for omega in [0.0, 0.05, 5.0] {
        let cfg = GuidanceConfig {
            omega,
            safety_cells: 4.0,
            ..Default::default()
        };
        let t = plan_guidance(&m, &df, start, goal, &cfg)?;
        let door = t
            .nodes
            .iter()
            .find(|c| c.1 == DOOR_COLUMN)
            .copied()
            .expect("every route crosses the door");
        println!(
            "omega {omega:>4}: length {:.2} m, cost {:>6.1}, door crossed at row {} with clearance {} cells, penalty at 1 cell {:.1}",
            t.length(),
            t.total_cost(),
            door.0,
            df.get(door),
            penalty(1.0, &cfg)
        );
    }
    Ok(())
}
