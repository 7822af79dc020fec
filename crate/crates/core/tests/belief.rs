mod common;

use std::collections::BTreeSet;

use common::{object, separated_objects, table_world};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twin_core::belief::{belief_diff, BeliefScene, Provenance};
use twin_core::camera::CameraId;
use twin_core::kinematics::JointConfig;
use twin_core::math::{Pose, Vec3};
use twin_core::perception::{sense, Detection, DetectionSet, PerceptionConfig};
use twin_core::world::Workspace;

const CATEGORIES: [&str; 3] = ["cup", "box", "ball"];

fn ws() -> Workspace {
    Workspace { min: Vec3::new(0.2, -0.5, 0.0), max: Vec3::new(0.8, 0.5, 0.5) }
}

#[derive(Debug, Clone)]
enum Op {
    Detect(Vec<(usize, [f64; 3])>),
    Add(usize, [f64; 3]),
    Move(usize, [f64; 3]),
    Remove(usize),
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    // a coarse grid so detections regularly land inside the association gate
    (0..13i32, -10..11i32, 1..4i32).prop_map(|(x, y, z)| [0.2 + 0.05 * x as f64, 0.05 * y as f64, 0.03 * z as f64])
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => prop::collection::vec((0..3usize, point()), 0..6).prop_map(Op::Detect),
        1 => (0..3usize, point()).prop_map(|(c, p)| Op::Add(c, p)),
        1 => (0..8usize, point()).prop_map(|(i, p)| Op::Move(i, p)),
        1 => (0..8usize).prop_map(Op::Remove),
    ]
}

fn detections(items: &[(usize, [f64; 3])], seq: u64) -> DetectionSet {
    DetectionSet {
        camera: CameraId::Main,
        items: items
            .iter()
            .map(|(c, p)| Detection {
                category: CATEGORIES[*c].into(),
                position: Vec3::from(*p),
                est_size: Vec3::new(0.06, 0.06, 0.08),
                confidence: 1.0,
                camera: CameraId::Main,
            })
            .collect(),
        robot_config: JointConfig(vec![]),
        seq,
        stamp_ms: seq * 10,
    }
}

fn check_invariants(s: &BeliefScene) {
    let ids: BTreeSet<_> = s.objects.iter().map(|o| o.id.as_str()).collect();
    assert_eq!(ids.len(), s.objects.len(), "duplicate ids");
    for o in &s.objects {
        assert_eq!(o.pinned, o.provenance == Provenance::UserAdded);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scene_invariants_hold_under_any_stream(ops in prop::collection::vec(op(), 1..30)) {
        let mut scene = BeliefScene::new();
        for (seq, op) in ops.iter().enumerate() {
            let before = scene.clone();
            match op {
                Op::Detect(items) => {
                    scene = scene.integrate_detections(&detections(items, seq as u64));
                    prop_assert!(scene.revision >= before.revision);
                    for p in before.objects.iter().filter(|o| o.pinned) {
                        let after = scene.object(&p.id).unwrap();
                        prop_assert_eq!(after.pose, p.pose);
                        prop_assert_eq!(after.half_extents, p.half_extents);
                    }
                    if scene.revision == before.revision {
                        prop_assert_eq!(scene.objects.len(), before.objects.len());
                    }
                }
                Op::Add(c, p) => {
                    scene = scene.add_user_object(&ws(), CATEGORIES[*c], Pose::from_translation(p[0], p[1], p[2]), Vec3::new(0.03, 0.03, 0.03)).unwrap();
                    prop_assert_eq!(scene.revision, before.revision + 1);
                }
                Op::Move(i, p) => {
                    if let Some(id) = scene.objects.get(*i).map(|o| o.id.clone()) {
                        scene = scene.move_object(&ws(), &id, Pose::from_translation(p[0], p[1], p[2])).unwrap();
                        prop_assert_eq!(scene.revision, before.revision + 1);
                        prop_assert!(scene.object(&id).unwrap().pinned);
                    }
                }
                Op::Remove(i) => {
                    if let Some(id) = scene.objects.get(*i).map(|o| o.id.clone()) {
                        scene = scene.remove_object(&id).unwrap();
                        prop_assert_eq!(scene.revision, before.revision + 1);
                        prop_assert!(scene.object(&id).is_none());
                    }
                }
            }
            check_invariants(&scene);
        }
    }

    #[test]
    fn repeated_detection_set_is_a_fixed_point(items in prop::collection::vec((0..3usize, point()), 0..8), seq in 0u64..100) {
        let ds = detections(&items, seq);
        let once = BeliefScene::new().integrate_detections(&ds);
        let twice = once.integrate_detections(&ds);
        prop_assert_eq!(once.objects.len(), twice.objects.len());
        prop_assert_eq!(once.revision, twice.revision);
        for (a, b) in once.objects.iter().zip(&twice.objects) {
            prop_assert_eq!(a.pose, b.pose);
            prop_assert_eq!(a.half_extents, b.half_extents);
        }
    }
}

#[test]
fn noiseless_sensing_reproduces_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = PerceptionConfig { tau_occ: 1.0, ..PerceptionConfig::noiseless(0) };
    for _ in 0..20 {
        let world = table_world(separated_objects(&mut rng, 5, 0.12));
        let ds = sense(&world, &world.main_camera, &cfg, &JointConfig(vec![]), 0, 0);
        let scene = BeliefScene::new().integrate_detections(&ds);
        let diff = belief_diff(&scene, &world);
        assert_eq!(diff.missed_count(), 0);
        assert_eq!(diff.spurious_count(), 0);
        assert!(diff.max_placement_error() < 1e-9);
        assert_eq!(diff.placement_errors.len() + diff.missed_count(), world.objects.len());
    }
}

#[test]
fn diff_counts_partition_truth() {
    let world = table_world(vec![
        object("c1", "cup", [0.4, -0.2, 0.05], [0.04, 0.04, 0.05], true),
        object("c2", "cup", [0.4, 0.2, 0.05], [0.04, 0.04, 0.05], true),
        object("b1", "box", [0.6, 0.0, 0.05], [0.05, 0.05, 0.05], true),
    ]);
    let h = Vec3::new(0.04, 0.04, 0.05);
    let scene = BeliefScene::new()
        .add_user_object(&ws(), "cup", Pose::from_translation(0.4, -0.2, 0.05), h)
        .unwrap()
        .add_user_object(&ws(), "cup", Pose::from_translation(0.4, 0.2, 0.05), h)
        .unwrap()
        .add_user_object(&ws(), "box", Pose::from_translation(0.6, 0.004, 0.05), h)
        .unwrap();
    let diff = belief_diff(&scene, &world);
    assert_eq!((diff.missed_count(), diff.spurious_count()), (0, 0));
    assert!((diff.max_placement_error() - 0.004).abs() < 1e-12);

    let diff = belief_diff(&BeliefScene::new(), &world);
    assert_eq!((diff.missed_count(), diff.spurious_count()), (3, 0));

    // a box of the wrong category is spurious, and its truth is missed
    let scene = BeliefScene::new().add_user_object(&ws(), "ball", Pose::from_translation(0.6, 0.0, 0.05), h).unwrap();
    let diff = belief_diff(&scene, &world);
    assert_eq!((diff.missed_count(), diff.spurious_count()), (3, 1));
}
