#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use twin_core::camera::{CameraId, CameraModel, Intrinsics};
use twin_core::math::{Pose, Quat, Vec3};
use twin_core::world::{GroundTruthWorld, ObjectInstance, Workspace};

pub fn table_world(objects: Vec<ObjectInstance>) -> GroundTruthWorld {
    GroundTruthWorld {
        workspace: Workspace { min: Vec3::new(0.2, -0.5, 0.0), max: Vec3::new(0.8, 0.5, 0.5) },
        table_height: 0.0,
        chain: "arm7".into(),
        robot_base: Pose::IDENTITY,
        main_camera: CameraModel::looking_down(
            CameraId::Main,
            Vec3::new(0.5, 0.0, 1.3),
            Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 },
        ),
        objects,
    }
}

pub fn object(id: &str, category: &str, center: [f64; 3], half: [f64; 3], graspable: bool) -> ObjectInstance {
    ObjectInstance {
        id: id.into(),
        category: category.into(),
        pose: Pose::from_translation(center[0], center[1], center[2]),
        half_extents: Vec3::from(half),
        graspable,
    }
}

pub fn yawed(mut o: ObjectInstance, yaw: f64) -> ObjectInstance {
    o.pose = Pose::new(o.pose.position, Quat::from_axis_angle(Vec3::Z, yaw));
    o
}

/// Boxes resting on the table plus a few floating slabs that cast shadows.
pub fn random_clutter(rng: &mut ChaCha8Rng, n: usize) -> Vec<ObjectInstance> {
    let mut out = Vec::new();
    for i in 0..n {
        let h = [rng.gen_range(0.02..0.08), rng.gen_range(0.02..0.08), rng.gen_range(0.02..0.1)];
        let floating = rng.gen_bool(0.3);
        let z = if floating { rng.gen_range(0.25..0.45) } else { h[2] };
        let c = [rng.gen_range(0.3..0.7), rng.gen_range(-0.3..0.3), z];
        let o = object(&format!("o{i}"), "box", c, h, true);
        out.push(yawed(o, rng.gen_range(-1.5..1.5)));
    }
    out
}

/// Resting boxes of mixed categories whose centers are at least `gap` apart.
pub fn separated_objects(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<ObjectInstance> {
    let cats = ["cup", "box", "ball", "bottle"];
    let mut out: Vec<ObjectInstance> = Vec::new();
    while out.len() < n {
        let h = [rng.gen_range(0.02..0.05), rng.gen_range(0.02..0.05), rng.gen_range(0.02..0.06)];
        let c = [rng.gen_range(0.3..0.7), rng.gen_range(-0.35..0.35), h[2]];
        let far = out.iter().all(|o| {
            let d = o.pose.position - Vec3::from(c);
            (d.x * d.x + d.y * d.y).sqrt() > gap
        });
        if far {
            let id = format!("o{}", out.len());
            out.push(object(&id, cats[out.len() % cats.len()], c, h, true));
        }
    }
    out
}

/// A tabletop with a graspable cup, a free place location, both within
/// reach, and up to three obstacles that touch neither. Returns the world and the place pose.
pub fn pick_place_scene(rng: &mut ChaCha8Rng) -> (GroundTruthWorld, Pose) {
    let cup_h = [0.035, 0.035, 0.05];
    // tool-down reach of arm7 at grasp height ends near 0.61 m
    let spot = |rng: &mut ChaCha8Rng| -> [f64; 2] {
        loop {
            let p: [f64; 2] = [rng.gen_range(0.3..0.55), rng.gen_range(-0.4..0.4)];
            if (0.3..0.55).contains(&p[0].hypot(p[1])) {
                return p;
            }
        }
    };
    let cup = spot(rng);
    let mut place = spot(rng);
    while (place[0] - cup[0]).hypot(place[1] - cup[1]) < 0.2 {
        place = spot(rng);
    }
    let mut objects = vec![object("target", "cup", [cup[0], cup[1], cup_h[2]], cup_h, true)];
    let n = rng.gen_range(0..=3);
    let mut tries = 0;
    while objects.len() < n + 1 && tries < 200 {
        tries += 1;
        let h = [rng.gen_range(0.02..0.06), rng.gen_range(0.02..0.1), rng.gen_range(0.03..0.15)];
        let c = spot(rng);
        let clear = |p: [f64; 2]| (c[0] - p[0]).abs() > h[0] + 0.12 || (c[1] - p[1]).abs() > h[1] + 0.12;
        if clear(cup) && clear(place) && objects.iter().skip(1).all(|o| clear([o.pose.position.x, o.pose.position.y])) {
            let id = format!("obs{}", objects.len());
            objects.push(object(&id, "block", [c[0], c[1], h[2]], h, false));
        }
    }
    (table_world(objects), Pose::from_translation(place[0], place[1], cup_h[2]))
}
