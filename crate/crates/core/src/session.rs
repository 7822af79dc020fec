//! The operator session: one serialized command stream driving perception,
//! belief corrections, planning and execution through a small phase machine.
//!
//! ```text
//! Perceive --sense/correct--> Review --plan--> Planned --execute--> Executed
//!                               ^                 |                     |
//!                               +---reset_virtual-+                     |
//!                               +-------------sense/correct-------------+
//! ```

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefError, BeliefScene};
use crate::camera::{CameraId, CameraModel, Intrinsics};
use crate::digest::Digest64;
use crate::execution::{execute_on_real, Outcome};
use crate::kinematics::{JointConfig, Robot};
use crate::math::{Pose, Vec3};
use crate::perception::{render_passthrough, sense, DetectionSet, PerceptionConfig, Raster};
use crate::planner::{
    collide_config, edit_waypoint, interpolation_steps, obstacles_from_scene, plan_pick_place, EditError, PlanError, PlanRequest,
    PlannerConfig, Trajectory,
};
use crate::world::{GroundTruthWorld, Palette};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perceive,
    Review,
    Planned,
    Executed,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Perceive => "perceive",
            Phase::Review => "review",
            Phase::Planned => "planned",
            Phase::Executed => "executed",
        }
    }
}

/// Study trial parameters; see `study::generate_trial`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_index: u32,
    /// Hash of the world the trial was generated for.
    pub world_hash: u64,
    pub forced_miss_object: String,
    /// "vr" or "screen"; a logging label only.
    pub interface_label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TrialControl {
    Start { spec: TrialSpec, participant: String },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Command {
    /// Run one camera; the arm camera senses from the current arm pose.
    Sense { camera: CameraId },
    RequestPassthrough { width: u32, height: u32 },
    /// `half_extents` defaults to the palette size of `category`.
    AddObject { category: String, pose: Pose, half_extents: Option<Vec3> },
    MoveObject { id: String, pose: Pose },
    RemoveObject { id: String },
    /// Move the real arm, then sense with the arm camera.
    MoveArm { q: JointConfig },
    SelectAndPlan { request: PlanRequest, seed: u64 },
    EditWaypoint { index: usize, position: Vec3 },
    ResetVirtual,
    Execute,
    Trial(TrialControl),
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::Sense { .. } => "sense",
            Command::RequestPassthrough { .. } => "request_passthrough",
            Command::AddObject { .. } => "add_object",
            Command::MoveObject { .. } => "move_object",
            Command::RemoveObject { .. } => "remove_object",
            Command::MoveArm { .. } => "move_arm",
            Command::SelectAndPlan { .. } => "select_and_plan",
            Command::EditWaypoint { .. } => "edit_waypoint",
            Command::ResetVirtual => "reset_virtual",
            Command::Execute => "execute",
            Command::Trial(TrialControl::Start { .. }) => "trial_start",
            Command::Trial(TrialControl::Stop) => "trial_stop",
        }
    }

    fn legal_in(&self, phase: Phase) -> bool {
        use Command::*;
        match self {
            RequestPassthrough { .. } | Trial(_) => true,
            Sense { .. } | AddObject { .. } | MoveObject { .. } | RemoveObject { .. } | MoveArm { .. } => phase != Phase::Planned,
            SelectAndPlan { .. } => phase == Phase::Review,
            EditWaypoint { .. } | ResetVirtual | Execute => phase == Phase::Planned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub outcome: Outcome,
    pub duration_steps: usize,
    /// Segments fully swept before the run ended.
    pub segments_completed: usize,
    pub world_hash: u64,
}

/// Something the session publishes.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Detections(DetectionSet),
    Scene(BeliefScene),
    Passthrough(Raster),
    Trajectory(Trajectory),
    Execution(ExecutionReport),
    Trial(TrialControl),
    Error { code: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceOutcome {
    Applied,
    Rejected { code: String },
    Sensed { detections: DetectionSet },
    Added { id: String },
    Executed { outcome: Outcome },
}

/// What happened to one command, in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stamp_ms: u64,
    pub command: Command,
    pub outcome: TraceOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub perception: PerceptionConfig,
    pub planner: PlannerConfig,
    pub arm_intrinsics: Intrinsics,
    pub home: JointConfig,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub robot: Robot,
    pub initial_world: GroundTruthWorld,
    /// Ground truth as it is now; changes only when the real robot places an object.
    pub world: GroundTruthWorld,
    pub palette: Palette,
    pub config: SessionConfig,
    pub belief: BeliefScene,
    pub phase: Phase,
    pub trajectory: Option<Trajectory>,
    /// Configuration of the real arm.
    pub robot_q: JointConfig,
    pub sense_seq: u64,
    pub trace: Vec<TraceEntry>,
}

struct Rejection {
    code: &'static str,
    message: String,
}

impl Rejection {
    fn new(code: &'static str, message: impl ToString) -> Self {
        Rejection { code, message: message.to_string() }
    }
}

impl From<BeliefError> for Rejection {
    fn from(e: BeliefError) -> Self {
        let code = match e {
            BeliefError::OutsideWorkspace => "outside_workspace",
            BeliefError::UnknownId(_) => "unknown_id",
            BeliefError::BadExtents => "bad_extents",
        };
        Rejection::new(code, e)
    }
}

impl From<PlanError> for Rejection {
    fn from(e: PlanError) -> Self {
        let code = match e {
            PlanError::UnknownTarget(_) => "unknown_target",
            PlanError::NotGraspable(_) => "not_graspable",
            PlanError::IkUnreachable(_) => "ik_unreachable",
            PlanError::PlanningFailed(_) => "planning_failed",
            PlanError::StartInCollision(_) => "start_in_collision",
            PlanError::BadStart => "bad_config",
            PlanError::OutsideWorkspace => "outside_workspace",
        };
        Rejection::new(code, e)
    }
}

impl From<EditError> for Rejection {
    fn from(e: EditError) -> Self {
        let code = match e {
            EditError::EndpointImmutable => "endpoint_immutable",
            EditError::BadIndex => "bad_index",
            EditError::IkUnreachable => "ik_unreachable",
            EditError::SegmentInCollision(_) => "segment_in_collision",
            EditError::StaleRevision { .. } => "stale_revision",
        };
        Rejection::new(code, e)
    }
}

impl Session {
    pub fn new(robot: Robot, world: GroundTruthWorld, config: SessionConfig) -> Self {
        Session {
            palette: Palette::for_world(&world),
            robot_q: config.home.clone(),
            robot,
            initial_world: world.clone(),
            world,
            config,
            belief: BeliefScene::new(),
            phase: Phase::Perceive,
            trajectory: None,
            sense_seq: 0,
            trace: Vec::new(),
        }
    }

    pub fn arm_camera(&self, q: &JointConfig) -> Option<CameraModel> {
        let pose = self.robot.camera_pose(q).ok()?;
        Some(CameraModel { id: CameraId::Arm, pose, intrinsics: self.config.arm_intrinsics })
    }

    /// Applies one command at logical time `stamp_ms` and returns what to
    /// publish. Rejected commands change nothing but are still traced.
    pub fn apply(&mut self, cmd: Command, stamp_ms: u64) -> Vec<Event> {
        let mut events = Vec::new();
        let outcome = if !cmd.legal_in(self.phase) {
            Err(Rejection::new("illegal_in_phase", alloc::format!("{} is not allowed in phase {}", cmd.kind(), self.phase.as_str())))
        } else {
            self.dispatch(&cmd, stamp_ms, &mut events)
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(r) => {
                events.push(Event::Error { code: r.code, message: r.message });
                TraceOutcome::Rejected { code: r.code.into() }
            }
        };
        self.trace.push(TraceEntry { stamp_ms, command: cmd, outcome });
        events
    }

    fn dispatch(&mut self, cmd: &Command, stamp_ms: u64, events: &mut Vec<Event>) -> Result<TraceOutcome, Rejection> {
        let ws = self.world.workspace;
        match cmd {
            Command::Sense { camera } => {
                let cam = match camera {
                    CameraId::Main => self.world.main_camera,
                    CameraId::Arm => self.arm_camera(&self.robot_q.clone()).ok_or_else(|| Rejection::new("bad_config", "no camera pose"))?,
                };
                let ds = self.sense_with(&cam, stamp_ms);
                self.after_sense(ds.clone(), events);
                Ok(TraceOutcome::Sensed { detections: ds })
            }
            Command::RequestPassthrough { width, height } => {
                if *width == 0 || *height == 0 || *width > 4096 || *height > 4096 {
                    return Err(Rejection::new("bad_request", "passthrough size must be within 1..=4096"));
                }
                events.push(Event::Passthrough(render_passthrough(&self.world, *width, *height)));
                Ok(TraceOutcome::Applied)
            }
            Command::AddObject { category, pose, half_extents } => {
                let half = match half_extents {
                    Some(h) => *h,
                    None => self.palette.get(category).map(|c| c.half_extents).ok_or_else(|| Rejection::new("unknown_category", category))?,
                };
                self.belief = self.belief.add_user_object(&ws, category, *pose, half)?;
                let id = self.belief.objects.last().map(|o| o.id.clone()).unwrap_or_default();
                self.corrected(events);
                Ok(TraceOutcome::Added { id })
            }
            Command::MoveObject { id, pose } => {
                self.belief = self.belief.move_object(&ws, id, *pose)?;
                self.corrected(events);
                Ok(TraceOutcome::Applied)
            }
            Command::RemoveObject { id } => {
                self.belief = self.belief.remove_object(id)?;
                self.corrected(events);
                Ok(TraceOutcome::Applied)
            }
            Command::MoveArm { q } => {
                if !self.robot.chain.within_limits(q) {
                    return Err(Rejection::new("bad_config", "configuration has the wrong length or violates joint limits"));
                }
                let obstacles = obstacles_from_scene(&self.belief);
                let n = interpolation_steps(&self.robot_q, q, 0.02);
                for k in 0..=n {
                    let qk = self.robot_q.lerp(q, k as f64 / n as f64);
                    if let Some(c) = collide_config(&self.robot, &qk, &obstacles, &[]) {
                        return Err(Rejection::new("segment_in_collision", alloc::format!("arm motion collides with `{}`", c.object_id)));
                    }
                }
                self.robot_q = q.clone();
                let cam = self.arm_camera(q).ok_or_else(|| Rejection::new("bad_config", "no camera pose"))?;
                let ds = self.sense_with(&cam, stamp_ms);
                self.after_sense(ds.clone(), events);
                Ok(TraceOutcome::Sensed { detections: ds })
            }
            Command::SelectAndPlan { request, seed } => {
                if !ws.contains(&request.place_pose.position) {
                    return Err(PlanError::OutsideWorkspace.into());
                }
                let traj = plan_pick_place(&self.robot, &self.belief, &self.palette, request, &self.robot_q, *seed, &self.config.planner)?;
                events.push(Event::Trajectory(traj.clone()));
                self.trajectory = Some(traj);
                self.phase = Phase::Planned;
                Ok(TraceOutcome::Applied)
            }
            Command::EditWaypoint { index, position } => {
                let traj = self.trajectory.as_ref().ok_or_else(|| Rejection::new("no_trajectory", "nothing planned"))?;
                let edited = edit_waypoint(&self.robot, traj, *index, *position, &self.belief)?;
                events.push(Event::Trajectory(edited.clone()));
                self.trajectory = Some(edited);
                Ok(TraceOutcome::Applied)
            }
            Command::ResetVirtual => {
                self.trajectory = None;
                self.phase = Phase::Review;
                events.push(Event::Scene(self.belief.clone()));
                Ok(TraceOutcome::Applied)
            }
            Command::Execute => {
                let traj = self.trajectory.as_ref().ok_or_else(|| Rejection::new("no_trajectory", "nothing planned"))?;
                if traj.plan_revision != self.belief.revision {
                    return Err(EditError::StaleRevision { planned: traj.plan_revision, current: self.belief.revision }.into());
                }
                let result = execute_on_real(&self.robot, traj, &self.world);
                let segments_completed = match &result.outcome {
                    Outcome::Collision { segment, .. } => *segment,
                    Outcome::DropViolation => traj.grasp_index,
                    Outcome::Success => traj.waypoints.len() - 1,
                };
                // after a successful run the arm rests at the place pose;
                // otherwise it is backed out to where it started
                self.robot_q = match result.outcome {
                    Outcome::Success => traj.waypoints[traj.last_index()].q.clone(),
                    _ => traj.waypoints[0].q.clone(),
                };
                self.world = result.final_world;
                self.phase = Phase::Executed;
                events.push(Event::Execution(ExecutionReport {
                    outcome: result.outcome.clone(),
                    duration_steps: result.duration_steps,
                    segments_completed,
                    world_hash: self.world.hash(),
                }));
                Ok(TraceOutcome::Executed { outcome: result.outcome })
            }
            Command::Trial(ctl) => {
                if let TrialControl::Start { spec, .. } = ctl {
                    if self.initial_world.object(&spec.forced_miss_object).is_none() {
                        return Err(Rejection::new("unknown_id", alloc::format!("no object `{}` in the world", spec.forced_miss_object)));
                    }
                    self.world = self.initial_world.clone();
                    self.config.perception.forced_miss.clear();
                    self.config.perception.add_forced_miss(&spec.forced_miss_object, CameraId::Main);
                    self.belief = self.belief.cleared();
                    self.trajectory = None;
                    self.robot_q = self.config.home.clone();
                    self.phase = Phase::Perceive;
                    events.push(Event::Scene(self.belief.clone()));
                }
                events.push(Event::Trial(ctl.clone()));
                Ok(TraceOutcome::Applied)
            }
        }
    }

    fn sense_with(&mut self, cam: &CameraModel, stamp_ms: u64) -> DetectionSet {
        self.sense_seq += 1;
        sense(&self.world, cam, &self.config.perception, &self.robot_q, self.sense_seq, stamp_ms)
    }

    fn after_sense(&mut self, ds: DetectionSet, events: &mut Vec<Event>) {
        self.belief = self.belief.integrate_detections(&ds);
        events.push(Event::Detections(ds));
        self.corrected(events);
    }

    fn corrected(&mut self, events: &mut Vec<Event>) {
        self.phase = Phase::Review;
        events.push(Event::Scene(self.belief.clone()));
    }

    /// Digest of everything observable: belief, phase, trajectory, arm and truth.
    pub fn digest(&self) -> u64 {
        let mut d = Digest64::new("session/v1");
        d.u64(self.belief.digest()).str(self.phase.as_str());
        d.u64(self.trajectory.as_ref().map_or(0, |t| t.digest()));
        for v in self.robot_q.as_slice() {
            d.f64(*v);
        }
        d.u64(self.world.hash()).u64(self.sense_seq);
        d.finish()
    }
}
