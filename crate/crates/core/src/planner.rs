//! Collision-checked pick-and-place planning over the believed scene, plus
//! operator waypoint edits.
//!
//! Collision rules depend on where a segment sits relative to the grasp:
//! before the approach the target is an ordinary obstacle, during the
//! approach segment (pregrasp to grasp) it is ignored, and from the grasp
//! onward it rides rigidly on the end effector and its box is swept against
//! every other obstacle.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::BeliefScene;
use crate::collision::{Capsule, Obb};
use crate::digest::Digest64;
use crate::kinematics::{IkOptions, JointConfig, Robot};
use crate::math::{Pose, Quat, Vec3};
use crate::world::{GroundTruthWorld, Palette};

/// A named box the arm must not touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: String,
    pub obb: Obb,
}

pub fn obstacles_from_scene(scene: &BeliefScene) -> Vec<Obstacle> {
    scene.objects.iter().map(|o| Obstacle { id: o.id.clone(), obb: o.obb() }).collect()
}

pub fn obstacles_from_world(world: &GroundTruthWorld) -> Vec<Obstacle> {
    world.objects.iter().map(|o| Obstacle { id: o.id.clone(), obb: o.obb() }).collect()
}

/// Which part of the robot touched an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collider {
    Link(usize),
    /// The object carried by the gripper.
    Held,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub object_id: String,
    pub collider: Collider,
}

/// First capsule-versus-box overlap of the arm at `q`, skipping `ignore_ids`.
/// `q` must have the chain's length; limits are not checked here.
pub fn collide_config(robot: &Robot, q: &JointConfig, obstacles: &[Obstacle], ignore_ids: &[&str]) -> Option<Contact> {
    let fk = robot.forward_kinematics(q).ok()?;
    for (link, (a, b)) in fk.link_segments().into_iter().enumerate() {
        let capsule = Capsule { a, b, radius: robot.chain.link_radii[link] };
        for o in obstacles {
            if !ignore_ids.contains(&o.id.as_str()) && capsule.hits(&o.obb) {
                return Some(Contact { object_id: o.id.clone(), collider: Collider::Link(link) });
            }
        }
    }
    None
}

/// Number of equal steps so that no joint moves more than `step` per step.
pub fn interpolation_steps(a: &JointConfig, b: &JointConfig, step: f64) -> usize {
    let n = libm::ceil(a.max_abs_diff(b) / step) as usize;
    n.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Target is an obstacle.
    Free,
    /// Target ignored, not yet carried.
    Approach,
    /// Target carried.
    Carry,
}

fn segment_phase(segment: usize, grasp_index: usize) -> Phase {
    if segment + 1 < grasp_index {
        Phase::Free
    } else if segment + 1 == grasp_index {
        Phase::Approach
    } else {
        Phase::Carry
    }
}

/// The carried object: its box and where it sits in the end-effector frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldObject {
    pub id: String,
    pub offset: Pose,
    pub half_extents: Vec3,
}

/// Everything needed to judge one configuration or segment.
#[derive(Debug, Clone)]
struct Checker<'a> {
    robot: &'a Robot,
    obstacles: Vec<Obstacle>,
    held: HeldObject,
    step: f64,
}

impl<'a> Checker<'a> {
    fn new(robot: &'a Robot, obstacles: &[Obstacle], held: HeldObject, step: f64, margin: f64) -> Self {
        let obstacles = obstacles.iter().map(|o| Obstacle { id: o.id.clone(), obb: o.obb.inflated(margin) }).collect();
        Checker { robot, obstacles, held, step }
    }

    fn config(&self, q: &JointConfig, phase: Phase) -> Option<Contact> {
        let target = self.held.id.as_str();
        let ignore: &[&str] = if phase == Phase::Free { &[] } else { core::slice::from_ref(&target) };
        if let Some(c) = collide_config(self.robot, q, &self.obstacles, ignore) {
            return Some(c);
        }
        if phase == Phase::Carry {
            let ee = self.robot.ee_pose(q).ok()?;
            let held = Obb::new(ee.compose(&self.held.offset), self.held.half_extents);
            for o in &self.obstacles {
                if o.id != target && held.overlaps(&o.obb) {
                    return Some(Contact { object_id: o.id.clone(), collider: Collider::Held });
                }
            }
        }
        None
    }

    /// First contact along the straight joint-space segment, endpoints included.
    fn edge(&self, a: &JointConfig, b: &JointConfig, phase: Phase) -> Option<(Contact, JointConfig)> {
        self.edge_at(a, b, phase).map(|(c, q, _)| (c, q))
    }

    fn edge_at(&self, a: &JointConfig, b: &JointConfig, phase: Phase) -> Option<(Contact, JointConfig, usize)> {
        let n = interpolation_steps(a, b, self.step);
        for k in 0..=n {
            let q = a.lerp(b, k as f64 / n as f64);
            if let Some(c) = self.config(&q, phase) {
                return Some((c, q, k));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub q: JointConfig,
    /// Always `FK(q)`; recomputed whenever `q` changes.
    pub ee: Pose,
    pub edited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Waypoint at which the target is gripped. The approach segment ends here.
    pub grasp_index: usize,
    pub target_object_id: String,
    pub plan_revision: u64,
    pub place_pose: Pose,
    pub held: HeldObject,
}

impl Trajectory {
    pub fn configs(&self) -> Vec<JointConfig> {
        self.waypoints.iter().map(|w| w.q.clone()).collect()
    }

    pub fn last_index(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn digest(&self) -> u64 {
        let mut d = Digest64::new("trajectory/v1");
        d.u64(self.waypoints.len() as u64).u64(self.grasp_index as u64).u64(self.plan_revision);
        d.str(&self.target_object_id).pose(&self.place_pose).pose(&self.held.offset).vec3(&self.held.half_extents);
        for w in &self.waypoints {
            for v in w.q.as_slice() {
                d.f64(*v);
            }
            d.bool(w.edited);
        }
        d.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub target_object_id: String,
    pub place_pose: Pose,
    #[serde(default = "default_pregrasp")]
    pub pregrasp_offset: f64,
}

fn default_pregrasp() -> f64 {
    0.10
}

impl PlanRequest {
    pub fn new(target: &str, place_pose: Pose) -> Self {
        PlanRequest { target_object_id: target.into(), place_pose, pregrasp_offset: default_pregrasp() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// RRT extension step, L-infinity over joints, radians.
    pub rrt_step: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
    pub shortcut_attempts: usize,
    /// Per-joint interpolation step for edge checks, radians.
    pub check_step: f64,
    /// Obstacle inflation during search only, meters.
    pub search_margin: f64,
    pub waypoint_count: usize,
    /// Largest per-joint change between consecutive waypoints, radians.
    pub max_segment: f64,
    pub ik_restarts: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            rrt_step: 0.1,
            goal_bias: 0.1,
            max_iterations: 5000,
            shortcut_attempts: 100,
            check_step: 0.02,
            search_margin: 0.015,
            waypoint_count: 10,
            max_segment: 0.5,
            ik_restarts: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no object `{0}` in the scene")]
    UnknownTarget(String),
    #[error("object `{0}` is not graspable")]
    NotGraspable(String),
    #[error("no inverse kinematics solution for the {0} pose")]
    IkUnreachable(&'static str),
    #[error("planning failed: {0}")]
    PlanningFailed(&'static str),
    #[error("start configuration collides with `{0}`")]
    StartInCollision(String),
    #[error("start configuration has the wrong length or violates joint limits")]
    BadStart,
    #[error("place pose lies outside the workspace")]
    OutsideWorkspace,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("the first and last waypoints cannot be edited")]
    EndpointImmutable,
    #[error("waypoint index out of range")]
    BadIndex,
    #[error("no inverse kinematics solution for the edited waypoint")]
    IkUnreachable,
    #[error("edited path collides with `{0}`")]
    SegmentInCollision(String),
    #[error("belief changed since planning (planned at {planned}, now {current})")]
    StaleRevision { planned: u64, current: u64 },
}

/// Tool frame +z pointing straight down, rotated `yaw` about world z.
pub fn tool_down(yaw: f64) -> Quat {
    Quat::from_axis_angle(Vec3::Z, yaw) * Quat::from_axis_angle(Vec3::X, PI)
}

fn stream(domain: &str, seed: u64, tag: u64) -> ChaCha8Rng {
    let mut d = Digest64::new(domain);
    d.u64(seed).u64(tag);
    ChaCha8Rng::from_seed(d.finish_bytes())
}

fn sample_config(robot: &Robot, rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig(robot.chain.joints.iter().map(|j| rng.gen_range(j.limits[0]..=j.limits[1])).collect())
}

fn translate_z(p: &Pose, dz: f64) -> Pose {
    Pose { position: p.position + Vec3::Z * dz, orientation: p.orientation }
}

fn ik_from_seeds<'a>(robot: &'a Robot, target: &Pose, seeds: &'a [JointConfig]) -> impl Iterator<Item = JointConfig> + 'a {
    let target = *target;
    seeds.iter().filter_map(move |s| robot.solve_ik(&target, s, &IkOptions::default()).ok())
}

/// Key configurations of one pick-and-place attempt.
struct Keys {
    pregrasp: JointConfig,
    grasp: JointConfig,
    lift: JointConfig,
    above_place: JointConfig,
    place: JointConfig,
    held: HeldObject,
}

fn solve_keys(
    robot: &Robot,
    exact: &[Obstacle],
    target: (&str, &Pose, Vec3),
    req: &PlanRequest,
    seeds: &[JointConfig],
    cfg: &PlannerConfig,
) -> Result<Keys, PlanError> {
    let (target_id, target_pose, half) = target;
    let top_z = Obb::new(*target_pose, half).aabb_half_extents().z;
    let grasp_pos = target_pose.position + Vec3::Z * top_z;
    let mut grasp_found = false;
    let mut place_found = false;
    let mut best: Option<(f64, Keys)> = None;
    let start = &seeds[0];
    for yaw in [0.0, FRAC_PI_2, -FRAC_PI_2, PI] {
        let grasp_target = Pose { position: grasp_pos, orientation: tool_down(yaw) };
        // one candidate per yaw: the first seed that yields a complete key set
        'seeds: for grasp in ik_from_seeds(robot, &grasp_target, seeds) {
            grasp_found = true;
            let grasp_ee = robot.ee_pose(&grasp).map_err(|_| PlanError::BadStart)?;
            let held = HeldObject { id: target_id.into(), offset: grasp_ee.inverse().compose(target_pose), half_extents: half };
            let check = Checker::new(robot, exact, held.clone(), cfg.check_step, 0.0);
            let search = Checker::new(robot, exact, held.clone(), cfg.check_step, cfg.search_margin);

            let one = |t: &Pose, s: &JointConfig| robot.solve_ik(t, s, &IkOptions::default()).ok();
            let Some(pregrasp) = one(&translate_z(&grasp_ee, req.pregrasp_offset), &grasp) else { continue };
            if search.config(&pregrasp, Phase::Free).is_some() || check.edge(&pregrasp, &grasp, Phase::Approach).is_some() {
                continue;
            }
            // lifting retraces the approach
            let lift = pregrasp.clone();
            if check.edge(&grasp, &lift, Phase::Carry).is_some() || search.config(&lift, Phase::Carry).is_some() {
                continue;
            }
            let place_ee = req.place_pose.compose(&held.offset.inverse());
            let mut place_seeds = alloc::vec![lift.clone()];
            place_seeds.extend_from_slice(seeds);
            for place in ik_from_seeds(robot, &place_ee, &place_seeds) {
                place_found = true;
                let Some(above) = one(&translate_z(&place_ee, req.pregrasp_offset), &place) else { continue };
                if search.config(&above, Phase::Carry).is_some() || check.edge(&above, &place, Phase::Carry).is_some() {
                    continue;
                }
                // prefer the solution needing the least joint travel
                let cost = start.max_abs_diff(&pregrasp) + lift.max_abs_diff(&above);
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    let held = held.clone();
                    best = Some((cost, Keys { pregrasp: pregrasp.clone(), grasp: grasp.clone(), lift: lift.clone(), above_place: above, place, held }));
                }
                break 'seeds;
            }
        }
    }
    if let Some((_, keys)) = best {
        return Ok(keys);
    }
    Err(if !grasp_found {
        PlanError::IkUnreachable("grasp")
    } else if !place_found {
        PlanError::IkUnreachable("place")
    } else {
        PlanError::PlanningFailed("no collision-free grasp and place configurations")
    })
}

/// Bidirectional RRT-Connect in joint space.
fn rrt_connect(
    checker: &Checker,
    phase: Phase,
    start: &JointConfig,
    goal: &JointConfig,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<JointConfig>> {
    if checker.edge(start, goal, phase).is_none() {
        return Some(alloc::vec![start.clone(), goal.clone()]);
    }
    struct Tree {
        nodes: Vec<(JointConfig, usize)>,
    }
    impl Tree {
        fn nearest(&self, q: &JointConfig) -> usize {
            let mut best = (0, f64::INFINITY);
            for (i, (n, _)) in self.nodes.iter().enumerate() {
                let d = n.distance(q);
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        }
        fn path_to_root(&self, mut i: usize) -> Vec<JointConfig> {
            let mut out = alloc::vec![self.nodes[i].0.clone()];
            while i != 0 {
                i = self.nodes[i].1;
                out.push(self.nodes[i].0.clone());
            }
            out
        }
    }
    let steer = |from: &JointConfig, to: &JointConfig| {
        let d = from.max_abs_diff(to);
        if d <= cfg.rrt_step {
            to.clone()
        } else {
            from.lerp(to, cfg.rrt_step / d)
        }
    };

    let mut a = Tree { nodes: alloc::vec![(start.clone(), 0)] };
    let mut b = Tree { nodes: alloc::vec![(goal.clone(), 0)] };
    let mut a_is_start = true;
    for _ in 0..cfg.max_iterations {
        let sample = if rng.gen::<f64>() < cfg.goal_bias { b.nodes[0].0.clone() } else { sample_config(checker.robot, rng) };
        let near = a.nearest(&sample);
        let new = steer(&a.nodes[near].0, &sample);
        if checker.edge(&a.nodes[near].0, &new, phase).is_none() {
            a.nodes.push((new.clone(), near));
            let new_a = a.nodes.len() - 1;
            // greedily grow the other tree toward the new node
            let mut cur = b.nearest(&new);
            loop {
                let next = steer(&b.nodes[cur].0, &new);
                if checker.edge(&b.nodes[cur].0, &next, phase).is_some() {
                    break;
                }
                b.nodes.push((next.clone(), cur));
                cur = b.nodes.len() - 1;
                if next == new {
                    let mut from_a = a.path_to_root(new_a);
                    from_a.reverse();
                    let from_b = b.path_to_root(cur);
                    from_a.extend(from_b.into_iter().skip(1));
                    if !a_is_start {
                        from_a.reverse();
                    }
                    return Some(from_a);
                }
            }
        }
        core::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    None
}

fn shortcut(checker: &Checker, phase: Phase, path: &mut Vec<JointConfig>, attempts: usize, rng: &mut ChaCha8Rng) {
    for _ in 0..attempts {
        if path.len() < 3 {
            return;
        }
        let i = rng.gen_range(0..path.len() - 2);
        let j = rng.gen_range(i + 2..path.len());
        if checker.edge(&path[i], &path[j], phase).is_none() {
            path.drain(i + 1..j);
        }
    }
}

/// Drops removable interior vertices down to `target`, then splits the
/// longest segments (never the approach) until there are `target`
/// vertices and every segment respects `max_segment`.
fn resample(
    checker: &Checker,
    mut path: Vec<JointConfig>,
    mut grasp: usize,
    anchors: &mut [usize],
    cfg: &PlannerConfig,
) -> (Vec<JointConfig>, usize) {
    let mut i = 1;
    while path.len() > cfg.waypoint_count && i + 1 < path.len() {
        let phase = segment_phase(i - 1, grasp);
        let keep = anchors.contains(&i)
            || segment_phase(i, grasp) != phase
            || checker.edge(&path[i - 1], &path[i + 1], phase).is_some();
        if keep {
            i += 1;
            continue;
        }
        path.remove(i);
        for a in anchors.iter_mut().filter(|a| **a > i) {
            *a -= 1;
        }
        if grasp > i {
            grasp -= 1;
        }
    }
    loop {
        let longest = (0..path.len() - 1)
            .filter(|&s| segment_phase(s, grasp) != Phase::Approach)
            .map(|s| (s, path[s].max_abs_diff(&path[s + 1])))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
        let Some((s, len)) = longest else { break };
        if path.len() >= cfg.waypoint_count && len <= cfg.max_segment {
            break;
        }
        let mid = path[s].lerp(&path[s + 1], 0.5);
        path.insert(s + 1, mid);
        if grasp > s {
            grasp += 1;
        }
    }
    (path, grasp)
}

fn waypoint(robot: &Robot, q: JointConfig) -> Waypoint {
    let ee = robot.ee_pose(&q).unwrap_or(Pose::IDENTITY);
    Waypoint { q, ee, edited: false }
}

/// Plans start -> pregrasp -> grasp -> lift -> above place -> place.
///
/// Free-space legs use RRT-Connect against obstacles inflated by
/// `search_margin`; the output is then re-validated against the exact boxes
/// and, should that ever fail, planning is repeated with a wider margin.
pub fn plan_pick_place(
    robot: &Robot,
    scene: &BeliefScene,
    palette: &Palette,
    req: &PlanRequest,
    start_q: &JointConfig,
    seed: u64,
    cfg: &PlannerConfig,
) -> Result<Trajectory, PlanError> {
    let target = scene.object(&req.target_object_id).ok_or_else(|| PlanError::UnknownTarget(req.target_object_id.clone()))?;
    if !palette.is_graspable(&target.category) {
        return Err(PlanError::NotGraspable(target.id.clone()));
    }
    if !robot.chain.within_limits(start_q) {
        return Err(PlanError::BadStart);
    }
    if !req.place_pose.is_finite() {
        return Err(PlanError::OutsideWorkspace);
    }
    let exact = obstacles_from_scene(scene);
    if let Some(c) = collide_config(robot, start_q, &exact, &[]) {
        return Err(PlanError::StartInCollision(c.object_id));
    }

    let mut restart_rng = stream("plan/ik-restart", seed, 0);
    let mut seeds = alloc::vec![start_q.clone()];
    for _ in 0..cfg.ik_restarts {
        seeds.push(sample_config(robot, &mut restart_rng));
    }
    let keys = solve_keys(robot, &exact, (&target.id, &target.pose, target.half_extents), req, &seeds, cfg)?;

    let mut last_err = PlanError::PlanningFailed("search exhausted");
    for attempt in 0..3u64 {
        let margin = cfg.search_margin * (1 << attempt) as f64;
        let search = Checker::new(robot, &exact, keys.held.clone(), cfg.check_step, margin);
        let mut rng = stream("plan/rrt", seed, attempt);
        let Some(mut to_pregrasp) = rrt_connect(&search, Phase::Free, start_q, &keys.pregrasp, cfg, &mut rng) else {
            last_err = PlanError::PlanningFailed("no path to the pregrasp configuration");
            continue;
        };
        let Some(mut transit) = rrt_connect(&search, Phase::Carry, &keys.lift, &keys.above_place, cfg, &mut rng) else {
            last_err = PlanError::PlanningFailed("no path to the place configuration");
            continue;
        };
        shortcut(&search, Phase::Free, &mut to_pregrasp, cfg.shortcut_attempts, &mut rng);
        shortcut(&search, Phase::Carry, &mut transit, cfg.shortcut_attempts, &mut rng);

        let mut path = to_pregrasp;
        let pregrasp_idx = path.len() - 1;
        path.push(keys.grasp.clone());
        let grasp = path.len() - 1;
        path.extend(transit);
        let above_idx = path.len() - 1;
        path.push(keys.place.clone());
        let mut anchors = alloc::vec![0, pregrasp_idx, grasp, grasp + 1, above_idx, path.len() - 1];
        let (path, grasp) = resample(&search, path, grasp, &mut anchors, cfg);

        let traj = Trajectory {
            waypoints: path.into_iter().map(|q| waypoint(robot, q)).collect(),
            grasp_index: grasp,
            target_object_id: target.id.clone(),
            plan_revision: scene.revision,
            place_pose: Pose::new(req.place_pose.position, req.place_pose.orientation),
            held: keys.held.clone(),
        };
        if validate_trajectory(robot, &traj, &exact, &SweepRules::for_trajectory(&traj)).is_ok() {
            return Ok(traj);
        }
        last_err = PlanError::PlanningFailed("smoothed path failed exact validation");
    }
    Err(last_err)
}

/// Attach and ignore rules for a sweep: which obstacle is the target, how
/// it is held, and the interpolation step.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRules {
    pub held: HeldObject,
    pub step: f64,
}

impl SweepRules {
    /// Rules implied by the trajectory itself, at the validation step of 0.02 rad.
    pub fn for_trajectory(traj: &Trajectory) -> Self {
        SweepRules { held: traj.held.clone(), step: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub segment: usize,
    pub contact: Contact,
    /// Configuration at the first contact sample.
    pub q: JointConfig,
    /// Interpolation steps completed before contact, over the whole sweep.
    pub step: usize,
}

/// Densely sweeps every segment in order and reports the first contact.
/// On success returns the total number of interpolation steps.
pub fn validate_trajectory(robot: &Robot, traj: &Trajectory, obstacles: &[Obstacle], rules: &SweepRules) -> Result<usize, Violation> {
    let checker = Checker::new(robot, obstacles, rules.held.clone(), rules.step, 0.0);
    let mut steps = 0;
    for s in 0..traj.waypoints.len().saturating_sub(1) {
        let (a, b) = (&traj.waypoints[s].q, &traj.waypoints[s + 1].q);
        if let Some((contact, q, k)) = checker.edge_at(a, b, segment_phase(s, traj.grasp_index)) {
            return Err(Violation { segment: s, contact, q, step: steps + k });
        }
        steps += interpolation_steps(a, b, rules.step);
    }
    Ok(steps)
}

/// Moves one interior waypoint's end effector to `new_position`, keeping its
/// orientation as a soft goal, and revalidates the two adjacent segments.
pub fn edit_waypoint(robot: &Robot, traj: &Trajectory, index: usize, new_position: Vec3, scene: &BeliefScene) -> Result<Trajectory, EditError> {
    if index >= traj.waypoints.len() {
        return Err(EditError::BadIndex);
    }
    if index == 0 || index == traj.last_index() {
        return Err(EditError::EndpointImmutable);
    }
    if traj.plan_revision != scene.revision {
        return Err(EditError::StaleRevision { planned: traj.plan_revision, current: scene.revision });
    }
    let old = &traj.waypoints[index];
    let target = Pose { position: new_position, orientation: old.ee.orientation };
    let q = robot.solve_ik(&target, &old.q, &IkOptions::position_only()).map_err(|_| EditError::IkUnreachable)?;

    let mut next = traj.clone();
    next.waypoints[index] = Waypoint { edited: true, ..waypoint(robot, q) };
    let rules = SweepRules::for_trajectory(traj);
    let checker = Checker::new(robot, &obstacles_from_scene(scene), rules.held, rules.step, 0.0);
    for s in [index - 1, index] {
        let phase = segment_phase(s, traj.grasp_index);
        if let Some((c, _)) = checker.edge(&next.waypoints[s].q, &next.waypoints[s + 1].q, phase) {
            return Err(EditError::SegmentInCollision(c.object_id));
        }
    }
    Ok(next)
}
