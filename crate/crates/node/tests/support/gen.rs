//! Value generators covering every wire variant.

use proptest::collection::vec;
use proptest::prelude::*;
use twin_core::belief::{BeliefObject, Provenance};
use twin_core::camera::CameraId;
use twin_core::execution::Outcome;
use twin_core::kinematics::JointConfig;
use twin_core::math::{Pose, Quat, Vec3};
use twin_core::perception::Raster;
use twin_core::planner::{Collider, HeldObject, PlanRequest, Trajectory, Waypoint};
use twin_core::session::{ExecutionReport, Phase, TrialControl, TrialSpec};
use twin_node::wire::*;

pub fn num() -> impl Strategy<Value = f64> {
    prop_oneof![-10.0..10.0f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

pub fn vec3() -> impl Strategy<Value = Vec3> {
    (num(), num(), num()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

pub fn pose() -> impl Strategy<Value = Pose> {
    (vec3(), num(), num(), num(), num()).prop_map(|(p, w, x, y, z)| Pose { position: p, orientation: Quat { w, x, y, z } })
}

pub fn text() -> impl Strategy<Value = String> {
    "[a-z0-9_\\-\"\\\\ é\u{1F600}]{0,12}"
}

pub fn joints() -> impl Strategy<Value = JointConfig> {
    vec(num(), 0..8).prop_map(JointConfig)
}

pub fn camera() -> impl Strategy<Value = CameraId> {
    prop_oneof![Just(CameraId::Main), Just(CameraId::Arm)]
}

pub fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![Just(Phase::Perceive), Just(Phase::Review), Just(Phase::Planned), Just(Phase::Executed)]
}

pub fn belief_object() -> impl Strategy<Value = BeliefObject> {
    (text(), text(), pose(), vec3(), any::<bool>(), proptest::option::of(any::<u64>())).prop_map(|(id, category, pose, half, user, last_seen)| BeliefObject {
        id,
        category,
        pose,
        half_extents: half,
        provenance: if user { Provenance::UserAdded } else { Provenance::Detected },
        last_seen,
        pinned: user,
    })
}

pub fn trajectory() -> impl Strategy<Value = Trajectory> {
    (vec((joints(), pose(), any::<bool>()), 0..12), any::<usize>(), text(), any::<u64>(), pose(), text(), pose(), vec3()).prop_map(
        |(w, grasp_index, target, rev, place, held_id, offset, half)| Trajectory {
            waypoints: w.into_iter().map(|(q, ee, edited)| Waypoint { q, ee, edited }).collect(),
            grasp_index,
            target_object_id: target,
            plan_revision: rev,
            place_pose: place,
            held: HeldObject { id: held_id, offset, half_extents: half },
        },
    )
}

pub fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![
        Just(Outcome::Success),
        Just(Outcome::DropViolation),
        (text(), any::<usize>(), joints(), proptest::option::of(0usize..9)).prop_map(|(object_id, segment, q, link)| Outcome::Collision {
            object_id,
            segment,
            q,
            collider: link.map_or(Collider::Held, Collider::Link),
        }),
    ]
}

pub fn trial_control() -> impl Strategy<Value = TrialControl> {
    prop_oneof![
        Just(TrialControl::Stop),
        (any::<u32>(), any::<u64>(), text(), text(), any::<u64>(), text()).prop_map(|(i, h, m, l, s, p)| TrialControl::Start {
            spec: TrialSpec { trial_index: i, world_hash: h, forced_miss_object: m, interface_label: l, seed: s },
            participant: p,
        }),
    ]
}

pub fn wire_detection() -> impl Strategy<Value = WireDetection> {
    (text(), any::<[i32; 3]>(), any::<[i32; 3]>(), 0u16..=1000).prop_map(|(c, p, s, k)| WireDetection(c, p, s, k))
}

pub fn raster() -> impl Strategy<Value = Raster> {
    (1u32..20, 1u32..20).prop_flat_map(|(w, h)| vec(any::<u8>(), (w * h) as usize).prop_map(move |pixels| Raster { width: w, height: h, pixels }))
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (camera(), any::<u64>(), any::<u64>(), vec(any::<i32>(), 0..8), vec(wire_detection(), 0..6))
            .prop_map(|(camera, seq, stamp_ms, robot_config, items)| Message::DetectionSet(DetectionSetMsg { camera, seq, stamp_ms, robot_config, items })),
        (any::<u64>(), phase(), vec(belief_object(), 0..5)).prop_map(|(revision, phase, objects)| Message::SceneState(SceneStateMsg { revision, phase, objects })),
        raster().prop_map(|r| Message::Passthrough(passthrough(&r))),
        camera().prop_map(|camera| Message::Sense(SenseCmd { camera })),
        (any::<u32>(), any::<u32>()).prop_map(|(width, height)| Message::RequestPassthrough(RequestPassthroughCmd { width, height })),
        (text(), pose(), proptest::option::of(vec3())).prop_map(|(category, pose, half_extents)| Message::AddObject(AddObjectCmd { category, pose, half_extents })),
        (text(), pose()).prop_map(|(id, pose)| Message::MoveObject(MoveObjectCmd { id, pose })),
        text().prop_map(|id| Message::RemoveObject(RemoveObjectCmd { id })),
        joints().prop_map(|q| Message::MoveArm(MoveArmCmd { q })),
        (text(), pose(), num(), any::<u64>()).prop_map(|(t, p, off, seed)| {
            let mut request = PlanRequest::new(&t, p);
            request.pregrasp_offset = off;
            Message::SelectAndPlan(SelectAndPlanCmd { request, seed })
        }),
        trajectory().prop_map(Message::Trajectory),
        (any::<usize>(), vec3()).prop_map(|(index, position)| Message::EditWaypoint(EditWaypointCmd { index, position })),
        Just(Message::ResetVirtual(Empty {})),
        Just(Message::Execute(Empty {})),
        (outcome(), any::<usize>(), any::<usize>(), any::<u64>()).prop_map(|(outcome, duration_steps, segments_completed, world_hash)| {
            Message::ExecutionResult(ExecutionReport { outcome, duration_steps, segments_completed, world_hash })
        }),
        (text(), text()).prop_map(|(code, message)| Message::Error(ErrorMsg { code, message })),
        trial_control().prop_map(Message::TrialControl),
        (any::<u64>(), any::<bool>(), phase(), any::<u64>()).prop_map(|(command_seq, ok, phase, revision)| Message::Ack(AckMsg { command_seq, ok, phase, revision })),
        (text(), any::<u64>()).prop_map(|(digest, commands)| Message::SessionEnd(SessionEndMsg { digest, commands })),
    ]
}
