//! Envelope codec: one compact JSON object per frame or line,
//! `{"type":..,"seq":..,"stamp_ms":..,"payload":{..}}`, fields in that order.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::belief::{BeliefObject, BeliefScene};
use twin_core::camera::CameraId;
use twin_core::kinematics::JointConfig;
use twin_core::math::{Pose, Vec3};
use twin_core::perception::{Detection, DetectionSet, Raster};
use twin_core::planner::{PlanRequest, Trajectory};
use twin_core::session::{Command, Event, ExecutionReport, Phase, TrialControl};

use crate::pgm;

/// Frames larger than this are refused before parsing.
pub const MAX_FRAME: usize = 1 << 20;

/// Wire quantum for positions and sizes: 0.1 mm.
const LENGTH_QUANTUM: f64 = 1e-4;
/// Wire quantum for joint angles: 1 microradian.
const ANGLE_QUANTUM: f64 = 1e-6;

/// One detection as `[category, position, size, confidence]`, lengths in
/// tenths of a millimeter and confidence in thousandths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireDetection(pub String, pub [i32; 3], pub [i32; 3], pub u16);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSetMsg {
    pub camera: CameraId,
    pub seq: u64,
    pub stamp_ms: u64,
    /// Microradians.
    pub robot_config: Vec<i32>,
    pub items: Vec<WireDetection>,
}

fn quantize(v: f64, q: f64) -> i32 {
    (v / q).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

impl DetectionSetMsg {
    pub fn from_set(ds: &DetectionSet) -> Self {
        let v = |p: &Vec3| [quantize(p.x, LENGTH_QUANTUM), quantize(p.y, LENGTH_QUANTUM), quantize(p.z, LENGTH_QUANTUM)];
        DetectionSetMsg {
            camera: ds.camera,
            seq: ds.seq,
            stamp_ms: ds.stamp_ms,
            robot_config: ds.robot_config.as_slice().iter().map(|a| quantize(*a, ANGLE_QUANTUM)).collect(),
            items: ds
                .items
                .iter()
                .map(|d| WireDetection(d.category.clone(), v(&d.position), v(&d.est_size), (d.confidence * 1000.0).round().clamp(0.0, 1000.0) as u16))
                .collect(),
        }
    }

    /// Reconstructs the set, up to the wire quantization.
    pub fn to_set(&self) -> DetectionSet {
        let v = |a: &[i32; 3]| Vec3::new(a[0] as f64 * LENGTH_QUANTUM, a[1] as f64 * LENGTH_QUANTUM, a[2] as f64 * LENGTH_QUANTUM);
        DetectionSet {
            camera: self.camera,
            items: self
                .items
                .iter()
                .map(|d| Detection { category: d.0.clone(), position: v(&d.1), est_size: v(&d.2), confidence: d.3 as f64 / 1000.0, camera: self.camera })
                .collect(),
            robot_config: JointConfig(self.robot_config.iter().map(|a| *a as f64 * ANGLE_QUANTUM).collect()),
            seq: self.seq,
            stamp_ms: self.stamp_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStateMsg {
    pub revision: u64,
    pub phase: Phase,
    pub objects: Vec<BeliefObject>,
}

impl SceneStateMsg {
    pub fn scene(&self) -> BeliefScene {
        BeliefScene { objects: self.objects.clone(), revision: self.revision }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassthroughMsg {
    pub width: u32,
    pub height: u32,
    /// Base64 of a binary PGM.
    pub pgm: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseCmd {
    pub camera: CameraId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestPassthroughCmd {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddObjectCmd {
    pub category: String,
    pub pose: Pose,
    #[serde(default)]
    pub half_extents: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveObjectCmd {
    pub id: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoveObjectCmd {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveArmCmd {
    pub q: JointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectAndPlanCmd {
    pub request: PlanRequest,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditWaypointCmd {
    pub index: usize,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Empty {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub code: String,
    pub message: String,
}

/// Sent to the issuing client once its command has been applied (or rejected).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckMsg {
    pub command_seq: u64,
    pub ok: bool,
    pub phase: Phase,
    pub revision: u64,
}

/// Trailer written to a command log on clean shutdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEndMsg {
    /// Hex session digest.
    pub digest: String,
    pub commands: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    DetectionSet(DetectionSetMsg),
    SceneState(SceneStateMsg),
    Passthrough(PassthroughMsg),
    Sense(SenseCmd),
    RequestPassthrough(RequestPassthroughCmd),
    AddObject(AddObjectCmd),
    MoveObject(MoveObjectCmd),
    RemoveObject(RemoveObjectCmd),
    MoveArm(MoveArmCmd),
    SelectAndPlan(SelectAndPlanCmd),
    Trajectory(Trajectory),
    EditWaypoint(EditWaypointCmd),
    ResetVirtual(Empty),
    Execute(Empty),
    ExecutionResult(ExecutionReport),
    Error(ErrorMsg),
    TrialControl(TrialControl),
    Ack(AckMsg),
    SessionEnd(SessionEndMsg),
}

pub const MESSAGE_TYPES: [&str; 19] = [
    "detection_set",
    "scene_state",
    "passthrough",
    "sense",
    "request_passthrough",
    "add_object",
    "move_object",
    "remove_object",
    "move_arm",
    "select_and_plan",
    "trajectory",
    "edit_waypoint",
    "reset_virtual",
    "execute",
    "execution_result",
    "error",
    "trial_control",
    "ack",
    "session_end",
];

impl Message {
    pub fn type_tag(&self) -> &'static str {
        use Message::*;
        match self {
            DetectionSet(_) => "detection_set",
            SceneState(_) => "scene_state",
            Passthrough(_) => "passthrough",
            Sense(_) => "sense",
            RequestPassthrough(_) => "request_passthrough",
            AddObject(_) => "add_object",
            MoveObject(_) => "move_object",
            RemoveObject(_) => "remove_object",
            MoveArm(_) => "move_arm",
            SelectAndPlan(_) => "select_and_plan",
            Trajectory(_) => "trajectory",
            EditWaypoint(_) => "edit_waypoint",
            ResetVirtual(_) => "reset_virtual",
            Execute(_) => "execute",
            ExecutionResult(_) => "execution_result",
            Error(_) => "error",
            TrialControl(_) => "trial_control",
            Ack(_) => "ack",
            SessionEnd(_) => "session_end",
        }
    }

    /// The session command this message carries, if it is one.
    pub fn to_command(&self) -> Option<Command> {
        use Message as M;
        Some(match self {
            M::Sense(c) => Command::Sense { camera: c.camera },
            M::RequestPassthrough(c) => Command::RequestPassthrough { width: c.width, height: c.height },
            M::AddObject(c) => Command::AddObject { category: c.category.clone(), pose: c.pose, half_extents: c.half_extents },
            M::MoveObject(c) => Command::MoveObject { id: c.id.clone(), pose: c.pose },
            M::RemoveObject(c) => Command::RemoveObject { id: c.id.clone() },
            M::MoveArm(c) => Command::MoveArm { q: c.q.clone() },
            M::SelectAndPlan(c) => Command::SelectAndPlan { request: c.request.clone(), seed: c.seed },
            M::EditWaypoint(c) => Command::EditWaypoint { index: c.index, position: c.position },
            M::ResetVirtual(_) => Command::ResetVirtual,
            M::Execute(_) => Command::Execute,
            M::TrialControl(t) => Command::Trial(t.clone()),
            _ => return None,
        })
    }

    pub fn from_command(cmd: &Command) -> Message {
        match cmd {
            Command::Sense { camera } => Message::Sense(SenseCmd { camera: *camera }),
            Command::RequestPassthrough { width, height } => Message::RequestPassthrough(RequestPassthroughCmd { width: *width, height: *height }),
            Command::AddObject { category, pose, half_extents } => {
                Message::AddObject(AddObjectCmd { category: category.clone(), pose: *pose, half_extents: *half_extents })
            }
            Command::MoveObject { id, pose } => Message::MoveObject(MoveObjectCmd { id: id.clone(), pose: *pose }),
            Command::RemoveObject { id } => Message::RemoveObject(RemoveObjectCmd { id: id.clone() }),
            Command::MoveArm { q } => Message::MoveArm(MoveArmCmd { q: q.clone() }),
            Command::SelectAndPlan { request, seed } => Message::SelectAndPlan(SelectAndPlanCmd { request: request.clone(), seed: *seed }),
            Command::EditWaypoint { index, position } => Message::EditWaypoint(EditWaypointCmd { index: *index, position: *position }),
            Command::ResetVirtual => Message::ResetVirtual(Empty {}),
            Command::Execute => Message::Execute(Empty {}),
            Command::Trial(t) => Message::TrialControl(t.clone()),
        }
    }

    /// Wire form of a session event. Scene broadcasts carry the current phase.
    pub fn from_event(ev: &Event, phase: Phase) -> Message {
        match ev {
            Event::Detections(ds) => Message::DetectionSet(DetectionSetMsg::from_set(ds)),
            Event::Scene(s) => Message::SceneState(SceneStateMsg { revision: s.revision, phase, objects: s.objects.clone() }),
            Event::Passthrough(r) => Message::Passthrough(passthrough(r)),
            Event::Trajectory(t) => Message::Trajectory(t.clone()),
            Event::Execution(r) => Message::ExecutionResult(r.clone()),
            Event::Trial(t) => Message::TrialControl(t.clone()),
            Event::Error { code, message } => Message::Error(ErrorMsg { code: (*code).into(), message: message.clone() }),
        }
    }
}

pub fn passthrough(r: &Raster) -> PassthroughMsg {
    PassthroughMsg { width: r.width, height: r.height, pgm: pgm::to_base64(r) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub stamp_ms: u64,
    pub payload: Message,
}

impl Envelope {
    pub fn new(seq: u64, stamp_ms: u64, payload: Message) -> Self {
        Envelope { seq, stamp_ms, payload }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("frame exceeds {MAX_FRAME} bytes")]
    TooLarge,
    #[error("frame is not UTF-8")]
    NotUtf8,
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("bad `{kind}` payload: {message}")]
    BadPayload { kind: String, message: String },
    #[error("sequence number {got} does not follow {last}")]
    SeqRegression { last: u64, got: u64 },
}

#[derive(Serialize)]
struct OutEnvelope<'a, P: Serialize> {
    #[serde(rename = "type")]
    ty: &'a str,
    seq: u64,
    stamp_ms: u64,
    payload: &'a P,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InEnvelope {
    #[serde(rename = "type")]
    ty: String,
    seq: u64,
    stamp_ms: u64,
    payload: serde_json::Value,
}

fn write<P: Serialize>(ty: &str, e: &Envelope, p: &P) -> String {
    serde_json::to_string(&OutEnvelope { ty, seq: e.seq, stamp_ms: e.stamp_ms, payload: p }).expect("wire types always serialize")
}

pub fn encode(e: &Envelope) -> String {
    use Message::*;
    let t = e.payload.type_tag();
    match &e.payload {
        DetectionSet(p) => write(t, e, p),
        SceneState(p) => write(t, e, p),
        Passthrough(p) => write(t, e, p),
        Sense(p) => write(t, e, p),
        RequestPassthrough(p) => write(t, e, p),
        AddObject(p) => write(t, e, p),
        MoveObject(p) => write(t, e, p),
        RemoveObject(p) => write(t, e, p),
        MoveArm(p) => write(t, e, p),
        SelectAndPlan(p) => write(t, e, p),
        Trajectory(p) => write(t, e, p),
        EditWaypoint(p) => write(t, e, p),
        ResetVirtual(p) | Execute(p) => write(t, e, p),
        ExecutionResult(p) => write(t, e, p),
        Error(p) => write(t, e, p),
        TrialControl(p) => write(t, e, p),
        Ack(p) => write(t, e, p),
        SessionEnd(p) => write(t, e, p),
    }
}

fn payload<T: DeserializeOwned>(kind: &str, v: serde_json::Value) -> Result<T, DecodeError> {
    serde_json::from_value(v).map_err(|e| DecodeError::BadPayload { kind: kind.into(), message: e.to_string() })
}

/// Stateless decode of one frame.
pub fn decode(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    if bytes.len() > MAX_FRAME {
        return Err(DecodeError::TooLarge);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| DecodeError::NotUtf8)?;
    let raw: InEnvelope =
        serde_json::from_str(text.trim_end_matches(['\r', '\n'])).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let k = raw.ty.as_str();
    let v = raw.payload;
    use Message as M;
    let msg = match k {
        "detection_set" => M::DetectionSet(payload(k, v)?),
        "scene_state" => M::SceneState(payload(k, v)?),
        "passthrough" => M::Passthrough(payload(k, v)?),
        "sense" => M::Sense(payload(k, v)?),
        "request_passthrough" => M::RequestPassthrough(payload(k, v)?),
        "add_object" => M::AddObject(payload(k, v)?),
        "move_object" => M::MoveObject(payload(k, v)?),
        "remove_object" => M::RemoveObject(payload(k, v)?),
        "move_arm" => M::MoveArm(payload(k, v)?),
        "select_and_plan" => M::SelectAndPlan(payload(k, v)?),
        "trajectory" => M::Trajectory(payload(k, v)?),
        "edit_waypoint" => M::EditWaypoint(payload(k, v)?),
        "reset_virtual" => M::ResetVirtual(payload(k, v)?),
        "execute" => M::Execute(payload(k, v)?),
        "execution_result" => M::ExecutionResult(payload(k, v)?),
        "error" => M::Error(payload(k, v)?),
        "trial_control" => M::TrialControl(payload(k, v)?),
        "ack" => M::Ack(payload(k, v)?),
        "session_end" => M::SessionEnd(payload(k, v)?),
        other => return Err(DecodeError::UnknownType(other.into())),
    };
    Ok(Envelope { seq: raw.seq, stamp_ms: raw.stamp_ms, payload: msg })
}

/// Per-connection decoder that also enforces strictly increasing `seq`.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    last_seq: Option<u64>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        StreamDecoder::default()
    }

    pub fn decode(&mut self, bytes: &[u8]) -> Result<Envelope, DecodeError> {
        let env = decode(bytes)?;
        if let Some(last) = self.last_seq {
            if env.seq <= last {
                return Err(DecodeError::SeqRegression { last, got: env.seq });
            }
        }
        self.last_seq = Some(env.seq);
        Ok(env)
    }
}
