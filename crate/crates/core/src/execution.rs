//! Running an approved trajectory on the real (ground-truth) tabletop, where
//! objects the belief missed still get in the way.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::kinematics::{JointConfig, Robot};
use crate::planner::{obstacles_from_world, validate_trajectory, Collider, HeldObject, SweepRules, Trajectory};
use crate::world::GroundTruthWorld;

/// The gripper closes on the real object whose box is nearest the tool tip,
/// if that box is within this distance.
pub const GRASP_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision { object_id: String, segment: usize, q: JointConfig, collider: Collider },
    /// The gripper closed on nothing graspable, so nothing was carried.
    DropViolation,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision { .. } => "collision",
            Outcome::DropViolation => "drop_violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    /// Target moved to the place pose on success, otherwise unchanged.
    pub final_world: GroundTruthWorld,
    pub duration_steps: usize,
}

/// The real object that would be gripped at the grasp waypoint, held with
/// its true offset from the tool.
pub fn truth_target(robot: &Robot, traj: &Trajectory, world: &GroundTruthWorld) -> Option<HeldObject> {
    let ee = robot.ee_pose(&traj.waypoints.get(traj.grasp_index)?.q).ok()?;
    let (obj, d) = world
        .objects
        .iter()
        .map(|o| (o, o.obb().distance_to_point(ee.position)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    if d > GRASP_TOLERANCE || !obj.graspable {
        return None;
    }
    Some(HeldObject { id: obj.id.clone(), offset: ee.inverse().compose(&obj.pose), half_extents: obj.half_extents })
}

/// Sweep rules against ground truth. With no graspable object at the grasp
/// point the held placeholder matches no id, so every real object stays an
/// obstacle.
pub fn truth_rules(robot: &Robot, traj: &Trajectory, world: &GroundTruthWorld) -> (SweepRules, bool) {
    let rules = SweepRules::for_trajectory(traj);
    match truth_target(robot, traj, world) {
        Some(held) => (SweepRules { held, ..rules }, true),
        None => (SweepRules { held: HeldObject { id: String::new(), ..traj.held.clone() }, ..rules }, false),
    }
}

pub fn execute_on_real(robot: &Robot, traj: &Trajectory, world: &GroundTruthWorld) -> ExecutionResult {
    let (rules, gripped) = truth_rules(robot, traj, world);
    let obstacles = obstacles_from_world(world);
    if !gripped {
        // sweep up to the grasp; without a real object the run ends there
        let mut prefix = traj.clone();
        prefix.waypoints.truncate(traj.grasp_index + 1);
        let (outcome, steps) = match validate_trajectory(robot, &prefix, &obstacles, &rules) {
            Ok(steps) => (Outcome::DropViolation, steps),
            Err(v) => {
                let steps = v.step;
                (collision(v), steps)
            }
        };
        return ExecutionResult { outcome, final_world: world.clone(), duration_steps: steps };
    }
    match validate_trajectory(robot, traj, &obstacles, &rules) {
        Ok(steps) => ExecutionResult {
            outcome: Outcome::Success,
            final_world: world.with_object_pose(&rules.held.id, traj.place_pose),
            duration_steps: steps,
        },
        Err(v) => {
            let steps = v.step;
            ExecutionResult { outcome: collision(v), final_world: world.clone(), duration_steps: steps }
        }
    }
}

fn collision(v: crate::planner::Violation) -> Outcome {
    Outcome::Collision { object_id: v.contact.object_id, segment: v.segment, q: v.q, collider: v.contact.collider }
}
