mod common;

use common::oracle::marched_occlusion;
use common::{object, random_clutter, table_world};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twin_core::camera::{CameraId, CameraModel, Intrinsics};
use twin_core::kinematics::JointConfig;
use twin_core::math::{Pose, Vec3};
use twin_core::perception::{occlusion_fraction, render_passthrough, sense, PerceptionConfig};
use twin_core::world::Workspace;

#[test]
fn occlusion_agrees_with_ray_marching() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mut occluded_seen = 0;
    for _ in 0..50 {
        let world = table_world(random_clutter(&mut rng, 6));
        for target in &world.objects {
            let fast = occlusion_fraction(&world, &world.main_camera, target);
            let slow = marched_occlusion(&world, &world.main_camera, target);
            assert!((fast - slow).abs() <= 1.0 / 26.0 + 1e-12, "{}: {fast} vs {slow}", target.id);
            if fast > 0.0 {
                occluded_seen += 1;
            }
        }
    }
    // the scenes must actually exercise occlusion
    assert!(occluded_seen > 20, "{occluded_seen}");
}

#[test]
fn half_shadow_blocks_nine_samples() {
    // camera 2 m above a 0.2 m cube; a plate at z = 1 covers x < -0.04, so
    // exactly the nine samples on the x = -0.1 face are hidden
    let cam = CameraModel::looking_down(CameraId::Main, Vec3::new(0.0, 0.0, 2.0), Intrinsics::arm_default());
    let mut world = table_world(vec![
        object("cube", "box", [0.0, 0.0, 0.1], [0.1, 0.1, 0.1], true),
        object("plate", "box", [-0.52, 0.0, 1.0], [0.48, 1.0, 0.01], false),
    ]);
    world.main_camera = cam;
    let f = occlusion_fraction(&world, &cam, &world.objects[0]);
    assert_eq!(f, 9.0 / 26.0);
    assert_eq!(marched_occlusion(&world, &cam, &world.objects[0]), 9.0 / 26.0);
}

#[test]
fn occlusion_extremes() {
    let world = table_world(vec![object("a", "box", [0.5, 0.0, 0.05], [0.05, 0.05, 0.05], true)]);
    assert_eq!(occlusion_fraction(&world, &world.main_camera, &world.objects[0]), 0.0);
    let world = table_world(vec![
        object("a", "box", [0.5, 0.0, 0.05], [0.05, 0.05, 0.05], true),
        object("lid", "box", [0.5, 0.0, 0.4], [0.3, 0.3, 0.05], false),
    ]);
    assert_eq!(occlusion_fraction(&world, &world.main_camera, &world.objects[0]), 1.0);
}

#[test]
fn noiseless_detections_are_exact() {
    let world = table_world(vec![
        object("a", "cup", [0.4, -0.2, 0.05], [0.04, 0.04, 0.05], true),
        object("b", "box", [0.6, 0.2, 0.03], [0.05, 0.06, 0.03], true),
    ]);
    let ds = sense(&world, &world.main_camera, &PerceptionConfig::noiseless(9), &JointConfig(vec![]), 1, 0);
    assert_eq!(ds.items.len(), 2);
    for (d, o) in ds.items.iter().zip(&world.objects) {
        assert_eq!(d.position, o.pose.position);
        assert_eq!(d.est_size, o.half_extents * 2.0);
        assert_eq!(d.confidence, 1.0);
        assert_eq!(d.category, o.category);
    }
}

#[test]
fn sensing_is_deterministic_and_keyed_per_object() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = PerceptionConfig { p_miss: 0.2, seed: 77, ..Default::default() };
    let q = JointConfig(vec![]);
    for seq in 0..20 {
        let world = table_world(random_clutter(&mut rng, 5));
        let a = sense(&world, &world.main_camera, &cfg, &q, seq, 5);
        let b = sense(&world, &world.main_camera, &cfg, &q, seq, 5);
        assert_eq!(a, b);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));

        // dropping the first object leaves everyone else's draws alone,
        // unless it was the one occluding them
        let mut fewer = world.clone();
        let gone = fewer.objects.remove(0);
        let c = sense(&fewer, &fewer.main_camera, &cfg, &q, seq, 5);
        for d in &c.items {
            let o = fewer.objects.iter().find(|o| o.pose.position.distance(&d.position) < 0.1).unwrap();
            if occlusion_fraction(&world, &world.main_camera, o) == 0.0 {
                let before = a.items.iter().find(|x| x.position.distance(&d.position) < 1e-12);
                assert!(before.is_some(), "noise for {} changed after removing {}", o.id, gone.id);
            }
        }
    }
}

#[test]
fn confidence_is_one_minus_occlusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = PerceptionConfig { tau_occ: 1.0, ..PerceptionConfig::noiseless(1) };
    for _ in 0..30 {
        let world = table_world(random_clutter(&mut rng, 6));
        let ds = sense(&world, &world.main_camera, &cfg, &JointConfig(vec![]), 0, 0);
        for d in &ds.items {
            let o = world.objects.iter().find(|o| o.pose.position == d.position).unwrap();
            assert_eq!(d.confidence, 1.0 - occlusion_fraction(&world, &world.main_camera, o));
        }
    }
}

#[test]
fn forced_miss_is_per_camera() {
    let world = table_world(vec![object("a", "cup", [0.5, 0.0, 0.05], [0.04, 0.04, 0.05], true)]);
    let mut cfg = PerceptionConfig::noiseless(0);
    cfg.add_forced_miss("a", CameraId::Main);
    let q = JointConfig(vec![]);
    assert!(sense(&world, &world.main_camera, &cfg, &q, 0, 0).items.is_empty());
    let arm = CameraModel { id: CameraId::Arm, ..world.main_camera };
    assert_eq!(sense(&world, &arm, &cfg, &q, 0, 0).items.len(), 1);
}

#[test]
fn passthrough_rectangle_has_predicted_extent() {
    // 1 cm pixels; a 0.2 x 0.4 m footprint centered in the workspace covers
    // columns 40..=59 and rows 30..=69
    let mut world = table_world(vec![object("a", "box", [0.5, 0.0, 0.05], [0.1, 0.2, 0.05], true)]);
    world.workspace = Workspace { min: Vec3::new(0.0, -0.5, 0.0), max: Vec3::new(1.0, 0.5, 0.5) };
    let r = render_passthrough(&world, 100, 100);
    for row in 0..100 {
        for col in 0..100 {
            let lit = (40..60).contains(&col) && (30..70).contains(&row);
            assert_eq!(r.get(col, row) == 255, lit, "pixel ({col}, {row})");
        }
    }
    assert_eq!(render_passthrough(&world, 100, 100), r);
    world.objects.clear();
    assert!(render_passthrough(&world, 37, 23).pixels.iter().all(|&p| p == 0));
}

#[test]
fn pinhole_projection_by_hand() {
    let cam = CameraModel {
        id: CameraId::Arm,
        pose: Pose::IDENTITY,
        intrinsics: Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 320.0, width: 640, height: 640 },
    };
    match cam.project(Vec3::new(0.1, 0.0, 1.0)) {
        twin_core::camera::Projection::Pixel { u, v } => assert_eq!((u, v), (370.0, 320.0)),
        p => panic!("{p:?}"),
    }
    assert_eq!(cam.project(Vec3::new(0.0, 0.0, -1.0)), twin_core::camera::Projection::Behind);
}
