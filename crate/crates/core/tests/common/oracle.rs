//! Brute-force oracles. Collision: capsules and held boxes are point-sampled
//! and tested against boxes in their local frames, sharing no code with the
//! planner's checker beyond forward kinematics. Visibility: camera rays are
//! marched in small steps.

use twin_core::kinematics::{JointConfig, Robot};
use twin_core::math::{Pose, Vec3};
use twin_core::camera::CameraModel;
use twin_core::planner::Trajectory;
use twin_core::world::{GroundTruthWorld, ObjectInstance};

#[derive(Debug, Clone)]
pub struct BoxObs {
    pub id: String,
    pub pose: Pose,
    pub half: Vec3,
}

fn local(b: &BoxObs, p: Vec3) -> Vec3 {
    b.pose.inverse_transform_point(p)
}

fn distance_to_box(b: &BoxObs, p: Vec3) -> f64 {
    let l = local(b, p);
    let dx = (l.x.abs() - b.half.x).max(0.0);
    let dy = (l.y.abs() - b.half.y).max(0.0);
    let dz = (l.z.abs() - b.half.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn strictly_inside(b: &BoxObs, p: Vec3) -> bool {
    let l = local(b, p);
    let e = 1e-9;
    l.x.abs() < b.half.x - e && l.y.abs() < b.half.y - e && l.z.abs() < b.half.z - e
}

fn surface_grid(pose: &Pose, half: Vec3, n: usize) -> Vec<Vec3> {
    let mut out = Vec::new();
    let ticks: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            for &u in &ticks {
                for &v in &ticks {
                    let mut c = [0.0; 3];
                    c[axis] = sign;
                    c[(axis + 1) % 3] = u;
                    c[(axis + 2) % 3] = v;
                    out.push(pose.transform_point(Vec3::new(c[0] * half.x, c[1] * half.y, c[2] * half.z)));
                }
            }
        }
    }
    out
}

fn boxes_overlap(a_pose: &Pose, a_half: Vec3, b: &BoxObs) -> bool {
    let a = BoxObs { id: String::new(), pose: *a_pose, half: a_half };
    surface_grid(a_pose, a_half, 12).into_iter().any(|p| strictly_inside(b, p))
        || surface_grid(&b.pose, b.half, 12).into_iter().any(|p| strictly_inside(&a, p))
}

/// First obstacle hit by the arm (or the held box) at `q`.
pub fn config_hit(robot: &Robot, q: &JointConfig, obstacles: &[BoxObs], ignore: Option<&str>, held: Option<(&Pose, Vec3)>) -> Option<String> {
    let fk = robot.forward_kinematics(q).unwrap();
    let n = fk.joint_frames.len();
    for i in 0..n {
        let a = fk.joint_frames[i].position;
        let b = if i + 1 < n { fk.joint_frames[i + 1].position } else { fk.ee.position };
        let r = robot.chain.link_radii[i];
        let samples = ((b - a).norm() / 0.002).ceil().max(1.0) as usize;
        for o in obstacles.iter().filter(|o| Some(o.id.as_str()) != ignore) {
            for k in 0..=samples {
                let p = a + (b - a) * (k as f64 / samples as f64);
                if distance_to_box(o, p) < r - 1e-9 {
                    return Some(o.id.clone());
                }
            }
        }
    }
    if let Some((offset, half)) = held {
        let pose = fk.ee.compose(offset);
        for o in obstacles.iter().filter(|o| Some(o.id.as_str()) != ignore) {
            if boxes_overlap(&pose, half, o) {
                return Some(o.id.clone());
            }
        }
    }
    None
}

/// Sweeps every segment at `step` radians per joint with the pick-and-place
/// attach rules: the target is an obstacle until the approach segment,
/// ignored from then on, and carried after the grasp.
pub fn dense_check(robot: &Robot, traj: &Trajectory, obstacles: &[BoxObs], step: f64) -> Result<usize, (usize, String)> {
    let g = traj.grasp_index;
    let target = traj.target_object_id.as_str();
    let mut checked = 0;
    for s in 0..traj.waypoints.len() - 1 {
        let (a, b) = (&traj.waypoints[s].q, &traj.waypoints[s + 1].q);
        let ignore = if s + 1 >= g { Some(target) } else { None };
        let held = if s >= g { Some((&traj.held.offset, traj.held.half_extents)) } else { None };
        let dmax = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let n = (dmax / step).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let q = JointConfig(a.0.iter().zip(&b.0).map(|(x, y)| x + (y - x) * t).collect());
            if let Some(id) = config_hit(robot, &q, obstacles, ignore, held) {
                return Err((s, id));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Sample points in the order and layout used for occlusion: every
/// combination of {-1, 0, 1} per axis except the center.
pub fn samples(o: &ObjectInstance) -> Vec<Vec3> {
    let h = o.half_extents;
    let mut out = Vec::new();
    for i in [-1.0, 0.0, 1.0] {
        for j in [-1.0, 0.0, 1.0] {
            for k in [-1.0, 0.0, 1.0] {
                if (i, j, k) != (0.0, 0.0, 0.0) {
                    out.push(o.pose.transform_point(Vec3::new(i * h.x, j * h.y, k * h.z)));
                }
            }
        }
    }
    out
}

pub fn inside(o: &ObjectInstance, p: Vec3) -> bool {
    let l = o.pose.inverse_transform_point(p);
    l.x.abs() <= o.half_extents.x && l.y.abs() <= o.half_extents.y && l.z.abs() <= o.half_extents.z
}

/// Marches each camera ray in small steps and looks for any point inside a
/// blocker before the sample is reached.
pub fn marched_occlusion(world: &GroundTruthWorld, cam: &CameraModel, target: &ObjectInstance) -> f64 {
    let origin = cam.center();
    let steps = 4000;
    let blocked = samples(target)
        .into_iter()
        .filter(|s| {
            (0..steps).any(|k| {
                let t = (k as f64 + 0.5) / steps as f64;
                let p = origin + (*s - origin) * t;
                world.objects.iter().filter(|o| o.id != target.id).any(|o| inside(o, p))
            })
        })
        .count();
    blocked as f64 / 26.0
}
