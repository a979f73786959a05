use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use gsnav::guidance::{penalty, GuidanceConfig};
use gsnav::sim::{generate_scene, Scene, SceneSpec};
use gsnav::splat::{render, CameraIntrinsics, GaussianMap, GaussianPrimitive, Pose};
use gsnav::viewpoint::softmin_weights;

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

prop_compose! {
    fn primitive()(
        x in 0.5..4.0f64, y in -1.5..1.5f64, z in -1.0..1.0f64,
        r in unit(), g in unit(), b in unit(), o in unit(),
        sx in 0.02..0.5f64, sy in 0.02..0.5f64, sz in 0.02..0.5f64,
        roll in -3.0..3.0f64, pitch in -1.5..1.5f64, yaw in -3.0..3.0f64,
    ) -> GaussianPrimitive {
        GaussianPrimitive {
            position: Vector3::new(x, y, z),
            opacity: o,
            color: [r, g, b],
            scale: Vector3::new(sx, sy, sz),
            rotation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
        }
    }
}

fn camera() -> (Pose, CameraIntrinsics) {
    let pose = Pose::from_yaw_pitch(Vector3::zeros(), 0.0, 0.0);
    (pose, CameraIntrinsics::from_hfov(24, 18, 90.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn opacity_is_bounded_and_grows_with_insertion(prims in prop::collection::vec(primitive(), 1..12), extra in primitive()) {
        let (pose, k) = camera();
        let mut map = GaussianMap::from_primitives(prims).unwrap();
        let before = render(&map, &pose, &k);
        map.push(extra).unwrap();
        let after = render(&map, &pose, &k);
        for (a, b) in before.opacity.iter().zip(after.opacity.iter()) {
            prop_assert!((0.0..=1.0).contains(a) && (0.0..=1.0).contains(b));
            prop_assert!(b + 1e-12 >= *a);
        }
    }

    #[test]
    fn map_text_round_trips(prims in prop::collection::vec(primitive(), 0..8)) {
        let map = GaussianMap::from_primitives(prims).unwrap();
        let back = GaussianMap::from_text(&map.to_text()).unwrap();
        prop_assert_eq!(back.primitives(), map.primitives());
    }

    #[test]
    fn retraction_keeps_unit_quaternion(steps in prop::collection::vec(prop::array::uniform6(-0.5..0.5f64), 1..40)) {
        let mut pose = Pose::from_yaw_pitch(Vector3::new(1.0, 2.0, 0.9), 0.3, -0.1);
        for d in &steps {
            pose = pose.retract(d);
            prop_assert!((pose.quaternion_norm() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn softmin_weights_form_a_distribution(
        pts in prop::collection::vec(prop::array::uniform2(-5.0..5.0f64), 1..30),
        x in -5.0..5.0f64, y in -5.0..5.0f64, beta in 1e-3..1e3f64,
    ) {
        let w = softmin_weights(&Vector3::new(x, y, 1.2), &pts, 0.9, beta);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn penalty_never_increases_with_clearance(a in 0u32..30, b in 0u32..30, omega in 0.0..10.0f64) {
        let cfg = GuidanceConfig { omega, ..Default::default() };
        let (near, far) = (a.min(b) as f64, a.max(b) as f64);
        prop_assert!(penalty(near, &cfg) >= penalty(far, &cfg));
        prop_assert!(penalty(far, &cfg) >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_scenes_round_trip_through_json(seed in 0u64..10_000) {
        let scene = generate_scene(seed, &SceneSpec::default()).unwrap();
        prop_assert_eq!(Scene::from_json(&scene.to_json()).unwrap(), scene);
    }
}
