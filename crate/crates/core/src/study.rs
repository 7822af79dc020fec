//! User-study instruments: sample size, failure-injected trials, trial
//! metrics, counterbalancing and questionnaire scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraId, CameraModel, Intrinsics};
use crate::digest::Digest64;
use crate::execution::Outcome;
use crate::kinematics::{IkOptions, JointConfig, Robot};
use crate::math::{Pose, Vec3};
use crate::perception::{is_visible, PerceptionConfig};
use crate::planner::tool_down;
use crate::session::{Command, TraceEntry, TraceOutcome, TrialControl, TrialSpec};
use crate::world::GroundTruthWorld;

/// Matches the belief diff cap: a manual add or re-detection counts as a
/// correction when it lands this close to the missed object.
pub const CORRECTION_RADIUS: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StudyError {
    #[error("parameter out of range: {0}")]
    DomainError(&'static str),
    #[error("no object is visible to the arm camera from any probe configuration")]
    NoCorrectableObject,
    #[error("trial slice must start with a trial start marker and end with a stop marker")]
    MalformedSlice,
    #[error("participant count must be even")]
    OddCount,
    #[error("at least two participants are required")]
    TooFewParticipants,
    #[error("every questionnaire item is not applicable")]
    AllNotApplicable,
    #[error("response {0} is outside the 1..=7 scale")]
    ResponseOutOfRange(u8),
    #[error("item `{0}` is not in the item bank")]
    UnknownItem(String),
}

// Rational approximation to the inverse normal CDF (P. J. Acklam), relative
// error below 1.15e-9, followed by one Halley step against erfc.
#[allow(clippy::excessive_precision)]
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02, 6.680131188771972e+01, -1.328068155288572e+01];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
const P_LOW: f64 = 0.02425;

fn tail(q: f64) -> f64 {
    (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn inverse_normal_cdf(p: f64) -> Result<f64, StudyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StudyError::DomainError("p must lie in (0, 1)"));
    }
    let x = if p < P_LOW {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - P_LOW {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Participants needed for a two-sided paired test under the normal
/// approximation: `ceil(((z_{1-alpha/2} + z_power) / d)^2)`.
pub fn required_sample_size(alpha: f64, power: f64, d: f64) -> Result<u64, StudyError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StudyError::DomainError("alpha must lie in (0, 1)"));
    }
    if !(power > 0.0 && power < 1.0) {
        return Err(StudyError::DomainError("power must lie in (0, 1)"));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(StudyError::DomainError("effect size must be positive"));
    }
    let z = inverse_normal_cdf(1.0 - alpha / 2.0)? + inverse_normal_cdf(power)?;
    let n = (z * z) / (d * d);
    // shave float noise so an exact integer is not bumped up
    Ok(libm::ceil(n - 1e-9).max(1.0) as u64)
}

/// Tool-down arm poses on a 3x3 grid over the workspace, 0.45 m above the
/// table. Grid points without an IK solution are skipped.
pub fn probe_configs(robot: &Robot, world: &GroundTruthWorld, home: &JointConfig) -> Vec<JointConfig> {
    let ws = &world.workspace;
    let mut out = Vec::new();
    for fx in [0.25, 0.5, 0.75] {
        for fy in [0.25, 0.5, 0.75] {
            let p = Vec3::new(ws.min.x + fx * (ws.max.x - ws.min.x), ws.min.y + fy * (ws.max.y - ws.min.y), world.table_height + 0.45);
            if let Ok(q) = robot.solve_ik(&Pose { position: p, orientation: tool_down(0.0) }, home, &IkOptions::default()) {
                out.push(q);
            }
        }
    }
    out
}

/// Objects the arm camera can see (in view, not too occluded) from at
/// least one of `probes`.
pub fn correctable_objects(
    robot: &Robot,
    world: &GroundTruthWorld,
    perception: &PerceptionConfig,
    intrinsics: Intrinsics,
    probes: &[JointConfig],
) -> Vec<String> {
    let cams: Vec<CameraModel> = probes
        .iter()
        .filter_map(|q| robot.camera_pose(q).ok())
        .map(|pose| CameraModel { id: CameraId::Arm, pose, intrinsics })
        .collect();
    let mut ids: Vec<String> = world
        .objects
        .iter()
        .filter(|o| cams.iter().any(|c| is_visible(world, c, o, perception.tau_occ)))
        .map(|o| o.id.clone())
        .collect();
    ids.sort();
    ids
}

pub struct TrialInputs<'a> {
    pub robot: &'a Robot,
    pub world: &'a GroundTruthWorld,
    pub perception: &'a PerceptionConfig,
    pub arm_intrinsics: Intrinsics,
    pub probes: &'a [JointConfig],
}

/// Seeded choice of the object the main camera will miss. Only objects the
/// arm camera can recover are eligible, so the camera correction path exists.
pub fn generate_trial(inputs: &TrialInputs, trial_index: u32, seed: u64, interface_label: &str) -> Result<TrialSpec, StudyError> {
    if !(1..=5).contains(&trial_index) {
        return Err(StudyError::DomainError("trial index must be 1..=5"));
    }
    if !inputs.world.objects.iter().any(|o| o.graspable) {
        return Err(StudyError::DomainError("world has no graspable object"));
    }
    let ids = correctable_objects(inputs.robot, inputs.world, inputs.perception, inputs.arm_intrinsics, inputs.probes);
    if ids.is_empty() {
        return Err(StudyError::NoCorrectableObject);
    }
    let mut d = Digest64::new("trial/v1");
    d.u64(seed).u64(trial_index as u64);
    let mut rng = ChaCha8Rng::from_seed(d.finish_bytes());
    let pick = rng.gen_range(0..ids.len());
    Ok(TrialSpec {
        trial_index,
        world_hash: inputs.world.hash(),
        forced_miss_object: ids[pick].clone(),
        interface_label: interface_label.into(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMethod {
    CameraMove,
    ManualAdd,
    Both,
    None,
}

impl CorrectionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrectionMethod::CameraMove => "camera_move",
            CorrectionMethod::ManualAdd => "manual_add",
            CorrectionMethod::Both => "both",
            CorrectionMethod::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant: String,
    pub spec: TrialSpec,
    pub start_ms: u64,
    pub end_ms: u64,
    pub correction_method: CorrectionMethod,
    /// Present exactly when a manual add counted as a correction.
    pub placement_error_m: Option<f64>,
    pub executed: bool,
    /// Last execution outcome tag, or "none".
    pub outcome: String,
    pub events: Vec<String>,
}

impl TrialRecord {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

/// Derives trial metrics from the traced commands between a start and a
/// stop marker. The trial clock runs from the start marker to the first
/// successful execution, or to the stop marker if none succeeded.
pub fn finalize_trial(slice: &[TraceEntry], truth: &GroundTruthWorld) -> Result<TrialRecord, StudyError> {
    let (Some(first), Some(last)) = (slice.first(), slice.last()) else {
        return Err(StudyError::MalformedSlice);
    };
    let Command::Trial(TrialControl::Start { spec, participant }) = &first.command else {
        return Err(StudyError::MalformedSlice);
    };
    if slice.len() < 2 || !matches!(last.command, Command::Trial(TrialControl::Stop)) || last.stamp_ms < first.stamp_ms {
        return Err(StudyError::MalformedSlice);
    }
    let missed = truth.object(&spec.forced_miss_object).ok_or(StudyError::MalformedSlice)?;
    let near_missed = |category: &str, p: &Vec3| category == missed.category && (*p - missed.pose.position).norm() <= CORRECTION_RADIUS;

    let mut camera_move = false;
    let mut arm_moved = false;
    let mut user_objects: BTreeMap<String, (String, Vec3)> = BTreeMap::new();
    let mut executed = false;
    let mut outcome = "none";
    let mut end_ms = last.stamp_ms;
    let mut first_success = true;
    for e in &slice[1..slice.len() - 1] {
        match (&e.command, &e.outcome) {
            (Command::MoveArm { .. }, TraceOutcome::Sensed { detections }) => {
                arm_moved = true;
                camera_move |= detections.items.iter().any(|d| near_missed(&d.category, &d.position));
            }
            (Command::Sense { camera: CameraId::Arm }, TraceOutcome::Sensed { detections }) if arm_moved => {
                camera_move |= detections.items.iter().any(|d| near_missed(&d.category, &d.position));
            }
            (Command::AddObject { category, pose, .. }, TraceOutcome::Added { id }) => {
                user_objects.insert(id.clone(), (category.clone(), pose.position));
            }
            (Command::MoveObject { id, pose }, TraceOutcome::Applied) => {
                if let Some(o) = user_objects.get_mut(id) {
                    o.1 = pose.position;
                }
            }
            (Command::RemoveObject { id }, TraceOutcome::Applied) => {
                user_objects.remove(id);
            }
            (Command::Execute, TraceOutcome::Executed { outcome: o }) => {
                executed = true;
                outcome = o.label();
                if *o == Outcome::Success && first_success {
                    first_success = false;
                    end_ms = e.stamp_ms;
                }
            }
            _ => {}
        }
    }
    let placement_error_m = user_objects
        .values()
        .filter(|(c, p)| near_missed(c, p))
        .map(|(_, p)| (*p - missed.pose.position).norm())
        .min_by(|a, b| a.total_cmp(b));
    let correction_method = match (camera_move, placement_error_m.is_some()) {
        (true, true) => CorrectionMethod::Both,
        (true, false) => CorrectionMethod::CameraMove,
        (false, true) => CorrectionMethod::ManualAdd,
        (false, false) => CorrectionMethod::None,
    };
    Ok(TrialRecord {
        participant: participant.clone(),
        spec: spec.clone(),
        start_ms: first.stamp_ms,
        end_ms,
        correction_method,
        placement_error_m,
        executed,
        outcome: outcome.into(),
        events: slice.iter().map(|e| e.command.kind().to_string()).collect(),
    })
}

/// Splits a trace into trial slices, each from a start marker through the
/// next stop marker.
pub fn trial_slices(trace: &[TraceEntry]) -> Vec<&[TraceEntry]> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, e) in trace.iter().enumerate() {
        match e.command {
            Command::Trial(TrialControl::Start { .. }) => start = Some(i),
            Command::Trial(TrialControl::Stop) => {
                if let Some(s) = start.take() {
                    out.push(&trace[s..=i]);
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOrder {
    VrFirst,
    ScreenFirst,
}

/// Balanced random assignment: exactly half the participants start in VR.
pub fn counterbalance(participants: usize, seed: u64) -> Result<Vec<ConditionOrder>, StudyError> {
    if participants < 2 {
        return Err(StudyError::TooFewParticipants);
    }
    if !participants.is_multiple_of(2) {
        return Err(StudyError::OddCount);
    }
    let mut orders: Vec<ConditionOrder> = (0..participants)
        .map(|i| if i < participants / 2 { ConditionOrder::VrFirst } else { ConditionOrder::ScreenFirst })
        .collect();
    let mut d = Digest64::new("counterbalance/v1");
    d.u64(seed);
    orders.shuffle(&mut ChaCha8Rng::from_seed(d.finish_bytes()));
    Ok(orders)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instrument {
    #[serde(rename = "TAM")]
    Tam,
    #[serde(rename = "MDMT_performance")]
    MdmtPerformance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub item: String,
    /// 1..=7, or `None` for not applicable.
    pub response: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub instrument: Instrument,
    pub participant: String,
    pub condition: String,
    pub items: Vec<ItemResponse>,
}

/// Item ids and prompts for one instrument, loaded from configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemBank {
    pub instrument: Instrument,
    pub items: Vec<BankItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankItem {
    pub id: String,
    pub prompt: String,
}

impl ItemBank {
    pub fn check(&self, resp: &QuestionnaireResponse) -> Result<(), StudyError> {
        match resp.items.iter().find(|r| !self.items.iter().any(|b| b.id == r.item)) {
            Some(r) => Err(StudyError::UnknownItem(r.item.clone())),
            None => Ok(()),
        }
    }
}

/// Mean of the applicable responses.
pub fn score_questionnaire(resp: &QuestionnaireResponse) -> Result<f64, StudyError> {
    let mut sum = 0u32;
    let mut n = 0u32;
    for r in resp.items.iter().filter_map(|i| i.response) {
        if !(1..=7).contains(&r) {
            return Err(StudyError::ResponseOutOfRange(r));
        }
        sum += r as u32;
        n += 1;
    }
    if n == 0 {
        return Err(StudyError::AllNotApplicable);
    }
    Ok(sum as f64 / n as f64)
}

pub const METRICS_HEADER: &str = "participant,condition,trial,duration_ms,correction_method,placement_error_m,executed,outcome";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}

/// One CSV row per trial, sorted by participant then trial index.
pub fn export_metrics(records: &[TrialRecord]) -> String {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.participant.cmp(&b.participant).then(a.spec.trial_index.cmp(&b.spec.trial_index)));
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in sorted {
        let err = r.placement_error_m.map(|e| format!("{}", e)).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_field(&r.participant),
            csv_field(&r.spec.interface_label),
            r.spec.trial_index,
            r.duration_ms(),
            r.correction_method.as_str(),
            err,
            r.executed,
            r.outcome
        ));
    }
    out
}
