//! Golden scenarios: a world with one obstacle the main camera is forced to
//! miss, and scripted operators that either do nothing, add the obstacle by
//! hand from the passthrough silhouette, or sweep the arm camera until it is
//! detected. Policies talk to a live server over TCP.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;
use twin_core::belief::BeliefObject;
use twin_core::camera::{CameraId, CameraModel, Intrinsics};
use twin_core::execution::Outcome;
use twin_core::kinematics::{builtin, JointConfig, KinematicChain, Robot};
use twin_core::math::{Pose, Vec3};
use twin_core::perception::{PerceptionConfig, Raster};
use twin_core::planner::{PlanRequest, PlannerConfig};
use twin_core::session::{Command, ExecutionReport, SessionConfig, TrialControl, TrialSpec};
use twin_core::study::{probe_configs, CorrectionMethod, TrialRecord};
use twin_core::world::{GroundTruthWorld, ObjectInstance, Palette, Workspace};

use crate::client::{Client, ClientError, Reply};
use crate::log::trial_records;
use crate::pgm;
use crate::server::{serve, ClockMode, ServeError, ServerConfig};
use crate::wire::Message;

pub const FORCED_MISS: &str = "block1";
pub const TARGET_CATEGORY: &str = "cup";
/// Operator placement noise when adding an object by hand, meters.
pub const JITTER_SIGMA: f64 = 0.003;
/// Passthrough resolution used by the object adder, meters per pixel.
const PASSTHROUGH_PIXEL: f64 = 0.005;

pub fn place_pose() -> Pose {
    Pose::from_translation(0.5, 0.25, 0.05)
}

/// A cup beside a tall block that stands between it and the place location.
pub fn golden_world() -> GroundTruthWorld {
    let obj = |id: &str, category: &str, c: [f64; 3], h: [f64; 3], graspable| ObjectInstance {
        id: id.into(),
        category: category.into(),
        pose: Pose::from_translation(c[0], c[1], c[2]),
        half_extents: Vec3::from(h),
        graspable,
    };
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
        objects: vec![
            obj("cup1", "cup", [0.5, -0.25, 0.05], [0.04, 0.04, 0.05], true),
            obj(FORCED_MISS, "block", [0.5, 0.0, 0.14], [0.05, 0.15, 0.14], false),
        ],
    }
    .validated()
    .expect("golden world is valid")
}

pub fn golden_config(seed: u64) -> SessionConfig {
    SessionConfig {
        perception: PerceptionConfig { p_miss: 0.0, seed, ..PerceptionConfig::default() },
        planner: PlannerConfig::default(),
        arm_intrinsics: Intrinsics::arm_default(),
        home: builtin::arm7_home(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    NoCorrection,
    ObjectAdder,
    CameraMover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub name: &'static str,
    pub policy: Policy,
}

pub const SCENARIOS: [Scenario; 3] = [
    Scenario { name: "undetected_obstacle_uncorrected", policy: Policy::NoCorrection },
    Scenario { name: "undetected_obstacle_object_adder", policy: Policy::ObjectAdder },
    Scenario { name: "undetected_obstacle_camera_mover", policy: Policy::CameraMover },
];

impl Scenario {
    pub fn by_name(name: &str) -> Option<Scenario> {
        SCENARIOS.iter().copied().find(|s| s.name == name)
    }

    /// Whether `run` ended the way this scenario is designed to.
    pub fn expected(&self, run: &ScenarioRun) -> bool {
        let method = run.record.correction_method;
        match (self.policy, &run.report.outcome) {
            (Policy::NoCorrection, Outcome::Collision { object_id, .. }) => object_id == FORCED_MISS,
            (Policy::ObjectAdder, Outcome::Success) => method == CorrectionMethod::ManualAdd,
            (Policy::CameraMover, Outcome::Success) => method == CorrectionMethod::CameraMove,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("client: {0}")]
    Client(#[from] ClientError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scripted operator stuck: {0}")]
    Policy(String),
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub seed: u64,
    pub report: ExecutionReport,
    pub record: TrialRecord,
    pub log_path: PathBuf,
    pub world_path: PathBuf,
    pub digest: u64,
}

/// Runs a scenario against a fresh server on `addr` (port 0 picks one),
/// writing `<name>.log` and `<name>.world.json` into `out_dir`.
pub fn run_scenario(name: &str, seed: u64, out_dir: &Path, addr: &str) -> Result<ScenarioRun, ScenarioError> {
    let scenario = Scenario::by_name(name).ok_or_else(|| ScenarioError::UnknownScenario(name.into()))?;
    let world = golden_world();
    let chain = builtin::arm7();
    let world_path = out_dir.join(format!("{name}.world.json"));
    let log_path = out_dir.join(format!("{name}.log"));
    let text = serde_json::to_string_pretty(&world).expect("worlds serialize");
    std::fs::write(&world_path, text).map_err(|source| ScenarioError::Io { path: world_path.clone(), source })?;

    let config = ServerConfig {
        world: world.clone(),
        chain: chain.clone(),
        session: golden_config(seed),
        log_path: log_path.clone(),
        clock: ClockMode::default(),
    };
    let server = serve(addr, config)?;
    let outcome = Operator::connect(server.addr(), &world, chain, seed).and_then(|mut op| op.run(scenario.policy));
    let session = server.shutdown();
    let report = outcome?;
    let record = trial_records(&session)
        .pop()
        .ok_or_else(|| ScenarioError::Policy("session recorded no complete trial".into()))?;
    Ok(ScenarioRun { scenario, seed, report, record, log_path, world_path, digest: session.digest() })
}

/// What the scripted operator knows: the robot, the workspace and the
/// palette, never the ground-truth objects.
struct Operator {
    client: Client,
    workspace: Workspace,
    table_height: f64,
    palette: Palette,
    world_hash: u64,
    probes: Vec<JointConfig>,
    seed: u64,
    objects: Vec<BeliefObject>,
}

impl Operator {
    fn connect(addr: std::net::SocketAddr, world: &GroundTruthWorld, chain: KinematicChain, seed: u64) -> Result<Self, ScenarioError> {
        let mut client = Client::connect(addr)?;
        // greeting scene
        let objects = match client.recv()?.payload {
            Message::SceneState(s) => s.objects,
            _ => Vec::new(),
        };
        let robot = Robot::new(chain, world.robot_base);
        let probes = probe_configs(&robot, world, &builtin::arm7_home());
        Ok(Operator {
            client,
            workspace: world.workspace,
            table_height: world.table_height,
            palette: Palette::for_world(world),
            world_hash: world.hash(),
            probes,
            seed,
            objects,
        })
    }

    fn request(&mut self, cmd: Command) -> Result<Reply, ScenarioError> {
        let reply = self.client.request(&cmd)?;
        for m in &reply.messages {
            if let Message::SceneState(s) = m {
                self.objects = s.objects.clone();
            }
        }
        Ok(reply)
    }

    /// Like `request`, but a server-side rejection is a policy failure.
    fn must(&mut self, cmd: Command) -> Result<Reply, ScenarioError> {
        let kind = cmd.kind();
        let reply = self.request(cmd)?;
        match reply.error() {
            Some((code, msg)) => Err(ScenarioError::Policy(format!("{kind} rejected: {code}: {msg}"))),
            None => Ok(reply),
        }
    }

    fn run(&mut self, policy: Policy) -> Result<ExecutionReport, ScenarioError> {
        let spec = TrialSpec {
            trial_index: 1,
            world_hash: self.world_hash,
            forced_miss_object: FORCED_MISS.into(),
            interface_label: "scripted".into(),
            seed: self.seed,
        };
        self.must(Command::Trial(TrialControl::Start { spec, participant: "scripted".into() }))?;
        self.must(Command::Sense { camera: CameraId::Main })?;
        match policy {
            Policy::NoCorrection => {}
            Policy::ObjectAdder => self.add_missing_objects()?,
            Policy::CameraMover => self.sweep_arm_camera()?,
        }
        let target = self
            .objects
            .iter()
            .find(|o| o.category == TARGET_CATEGORY)
            .map(|o| o.id.clone())
            .ok_or_else(|| ScenarioError::Policy("no cup in the belief".into()))?;
        let request = PlanRequest::new(&target, place_pose());
        self.must(Command::SelectAndPlan { request, seed: self.seed })?;
        let reply = self.must(Command::Execute)?;
        let report = reply
            .messages
            .iter()
            .find_map(|m| match m {
                Message::ExecutionResult(r) => Some(r.clone()),
                _ => None,
            })
            .ok_or_else(|| ScenarioError::Policy("execute produced no result".into()))?;
        self.must(Command::Trial(TrialControl::Stop))?;
        Ok(report)
    }

    fn add_missing_objects(&mut self) -> Result<(), ScenarioError> {
        let ws = self.workspace;
        let width = ((ws.max.x - ws.min.x) / PASSTHROUGH_PIXEL).round() as u32;
        let height = ((ws.max.y - ws.min.y) / PASSTHROUGH_PIXEL).round() as u32;
        let reply = self.must(Command::RequestPassthrough { width, height })?;
        let raster = reply
            .messages
            .iter()
            .find_map(|m| match m {
                Message::Passthrough(p) => pgm::from_base64(&p.pgm).ok(),
                _ => None,
            })
            .ok_or_else(|| ScenarioError::Policy("no passthrough image".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = Normal::new(0.0, JITTER_SIGMA).expect("positive sigma");
        for blob in footprints(&raster, &ws) {
            let explained = self.objects.iter().any(|o| blob.contains(o.pose.position.x, o.pose.position.y, 0.01));
            if explained {
                continue;
            }
            let Some(entry) = self.palette.entries.iter().min_by(|a, b| {
                blob.mismatch(a.half_extents).total_cmp(&blob.mismatch(b.half_extents))
            }) else {
                continue;
            };
            let (cx, cy) = blob.center();
            let pose = Pose::from_translation(
                cx + jitter.sample(&mut rng),
                cy + jitter.sample(&mut rng),
                self.table_height + entry.half_extents.z,
            );
            let category = entry.category.clone();
            self.must(Command::AddObject { category, pose, half_extents: None })?;
        }
        Ok(())
    }

    fn sweep_arm_camera(&mut self) -> Result<(), ScenarioError> {
        let probes = self.probes.clone();
        for q in probes {
            let before = self.objects.len();
            // unreachable or blocked probes are simply skipped
            self.request(Command::MoveArm { q })?;
            if self.objects.len() > before {
                return Ok(());
            }
        }
        Err(ScenarioError::Policy("no probe revealed a new object".into()))
    }

}

/// Axis-aligned extent of one silhouette blob, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl Footprint {
    pub fn center(&self) -> (f64, f64) {
        ((self.min.0 + self.max.0) / 2.0, (self.min.1 + self.max.1) / 2.0)
    }

    fn contains(&self, x: f64, y: f64, slack: f64) -> bool {
        x >= self.min.0 - slack && x <= self.max.0 + slack && y >= self.min.1 - slack && y <= self.max.1 + slack
    }

    /// L1 distance between the footprint half-sizes and `h`, either way round.
    fn mismatch(&self, h: Vec3) -> f64 {
        let (hx, hy) = ((self.max.0 - self.min.0) / 2.0, (self.max.1 - self.min.1) / 2.0);
        let straight = (hx - h.x).abs() + (hy - h.y).abs();
        let turned = (hx - h.y).abs() + (hy - h.x).abs();
        straight.min(turned)
    }
}

/// 4-connected components of lit pixels, mapped back to table coordinates
/// with the same orthographic convention the renderer uses.
pub fn footprints(r: &Raster, ws: &Workspace) -> Vec<Footprint> {
    let (w, h) = (r.width as usize, r.height as usize);
    let sx = (ws.max.x - ws.min.x) / w as f64;
    let sy = (ws.max.y - ws.min.y) / h as f64;
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || r.pixels[start] == 0 {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let (mut c0, mut c1, mut r0, mut r1) = (usize::MAX, 0, usize::MAX, 0);
        while let Some(i) = stack.pop() {
            let (c, row) = (i % w, i / w);
            c0 = c0.min(c);
            c1 = c1.max(c);
            r0 = r0.min(row);
            r1 = r1.max(row);
            let mut push = |j: usize| {
                if !seen[j] && r.pixels[j] != 0 {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                push(i - 1);
            }
            if c + 1 < w {
                push(i + 1);
            }
            if row > 0 {
                push(i - w);
            }
            if row + 1 < h {
                push(i + w);
            }
        }
        // column c covers [min.x + c*sx, min.x + (c+1)*sx]; row r counts down from max.y
        out.push(Footprint {
            min: (ws.min.x + c0 as f64 * sx, ws.max.y - (r1 + 1) as f64 * sy),
            max: (ws.min.x + (c1 + 1) as f64 * sx, ws.max.y - r0 as f64 * sy),
        });
    }
    out
}
