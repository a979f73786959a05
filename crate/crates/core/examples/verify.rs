//! Detects a target from an off-center pose and runs the verification loop
//! on virtual renders of the map.
//!
//! `cargo run --release --example verify`

#[path = "common/mod.rs"]
mod common;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gsnav::sim::{sense, EpisodeConfig, Room, Scene, SceneObject, SensedTruth, Start, Wall};
use gsnav::splat::{Pose, SplatCloud};
use gsnav::verify::{detect, verify_target, RuleVerdictProvider};

fn room() -> Scene {
    let grey = [0.75, 0.75, 0.72];
    let wall = |min: [f64; 2], max: [f64; 2]| Wall {
        min: [min[0], min[1], 0.0],
        max: [max[0], max[1], 2.5],
        color: grey,
    };
    Scene {
        rooms: vec![Room {
            min: [0.0, 0.0],
            max: [6.0, 6.0],
        }],
        walls: vec![
            wall([-0.1, -0.1], [6.1, 0.0]),
            wall([-0.1, 6.0], [6.1, 6.1]),
            wall([-0.1, 0.0], [0.0, 6.0]),
            wall([6.0, 0.0], [6.1, 6.0]),
        ],
        objects: vec![SceneObject {
            category: "chair".into(),
            min: [4.0, 4.2, 0.0],
            max: [4.5, 4.7, 0.9],
            color: [0.8, 0.25, 0.15],
        }],
        floor_z: 0.0,
        ceiling_z: 2.5,
        start: Start {
            pos: [1.0, 3.0],
            yaw: 0.0,
        },
        target_category: "chair".into(),
        floor_color: [0.55, 0.45, 0.35],
    }
}

fn main() -> gsnav::Result<()> {
    let scene = room();
    let cfg = EpisodeConfig::default();
    let center = common::start_center(&scene, &cfg);
    let map = common::sweep_map(&scene, center, 12, &cfg)?;
    let cloud = SplatCloud::from_map(&map);
    let k = cfg.sensor.intrinsics()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // the chair sits near the left edge of this view
    let pose = Pose::from_yaw_pitch(center, 0.2, 0.0);
    let frame = sense(&scene, &pose, &k);
    let truth = SensedTruth {
        scene: &scene,
        frame: &frame,
        pose,
    };
    let dets = detect(&truth, &pose, &k, &scene.target_category, &cfg.detector, &mut rng);
    let Some(det) = dets.first() else {
        println!("nothing detected");
        return Ok(());
    };
    let (cx, cy) = det.center_normalized();
    println!(
        "detected {} at normalized ({cx:.2}, {cy:.2}), {:.2}% of the frame",
        det.category,
        100.0 * det.area_fraction()
    );

    let mut redetect = |p: &Pose| {
        detect(&scene, p, &k, &scene.target_category, &cfg.detector, &mut rng)
            .into_iter()
            .next()
    };
    let revision = map.revision();
    let v = verify_target(&cloud, &k, &pose, det, &mut RuleVerdictProvider, &mut redetect)?;
    for (i, step) in v.trace.iter().enumerate() {
        println!(
            "  step {i}: yaw {:>6.1} -> {:?}",
            step.pose.yaw().to_degrees(),
            step.verdict
        );
    }
    println!("outcome {:?} after {} actions", v.outcome, v.actions_used);
    if let Some(p) = v.confirmed() {
        let truth_center = scene.objects[0].center();
        println!(
            "located within {:.2} m of the chair",
            (p - Vector3::new(truth_center.x, truth_center.y, p.z)).norm()
        );
    }
    assert_eq!(map.revision(), revision);
    Ok(())
}
