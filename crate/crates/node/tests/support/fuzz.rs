//! Random command sequences driven through a live server, then replayed.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twin_core::camera::CameraId;
use twin_core::kinematics::builtin;
use twin_core::math::{Pose, Quat, Vec3};
use twin_core::planner::PlanRequest;
use twin_core::session::{Command, TrialControl, TrialSpec};
use twin_node::client::Client;
use twin_node::log::{read_log, replay, trial_records};
use twin_node::scenario::{golden_config, golden_world, place_pose};
use twin_node::server::{serve, ClockMode, ServerConfig};
use twin_node::wire::Message;

pub fn random_command(rng: &mut ChaCha8Rng, ids: &[String], world_hash: u64) -> Command {
    let pos = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(0.25..0.75), rng.gen_range(-0.4..0.4), rng.gen_range(0.0..0.3));
    match rng.gen_range(0..13) {
        0 | 1 => Command::Sense { camera: if rng.gen() { CameraId::Main } else { CameraId::Arm } },
        2 => Command::AddObject {
            category: ["cup", "block", "plate", "mystery"].choose(rng).unwrap().to_string(),
            pose: Pose { position: pos(rng), orientation: Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), rng.gen_range(-3.0..3.0)) },
            half_extents: rng.gen::<bool>().then(|| Vec3::new(0.03, 0.04, 0.05)),
        },
        3 => Command::MoveObject { id: ids.choose(rng).cloned().unwrap_or_default(), pose: Pose { position: pos(rng), orientation: Quat::IDENTITY } },
        4 => Command::RemoveObject { id: ids.choose(rng).cloned().unwrap_or_else(|| "ghost".into()) },
        5 => {
            let mut q = builtin::arm7_home();
            for a in q.0.iter_mut() {
                *a += rng.gen_range(-0.3..0.3);
            }
            Command::MoveArm { q }
        }
        6 | 7 => {
            let target = ids.choose(rng).cloned().unwrap_or_default();
            Command::SelectAndPlan { request: PlanRequest::new(&target, place_pose()), seed: rng.gen() }
        }
        8 => Command::EditWaypoint { index: rng.gen_range(0..14), position: pos(rng) },
        9 => Command::Execute,
        10 => Command::ResetVirtual,
        11 => Command::Trial(TrialControl::Start {
            spec: TrialSpec { trial_index: rng.gen_range(1..6), world_hash, forced_miss_object: "block1".into(), interface_label: "screen".into(), seed: rng.gen() },
            participant: format!("p{}", rng.gen_range(1..4)),
        }),
        _ => Command::Trial(TrialControl::Stop),
    }
}

/// Returns how many plans and executions were accepted.
pub fn fuzz_session(seed: u64, dir: &Path) -> (usize, usize) {
    let world = golden_world();
    let log_path = dir.join(format!("fuzz{seed}.log"));
    let mut config = golden_config(seed);
    config.perception.p_miss = 0.2;
    let server = serve("127.0.0.1:0", ServerConfig { world: world.clone(), chain: builtin::arm7(), session: config, log_path: log_path.clone(), clock: ClockMode::default() }).unwrap();
    let mut c = Client::connect(server.addr()).unwrap();
    c.recv().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = Vec::new();
    let (mut plans, mut executions) = (0, 0);
    for _ in 0..25 {
        let cmd = random_command(&mut rng, &ids, world.hash());
        let reply = c.request(&cmd).unwrap();
        if reply.ack.ok {
            match cmd {
                Command::SelectAndPlan { .. } => plans += 1,
                Command::Execute => executions += 1,
                _ => {}
            }
        }
        for m in reply.messages {
            if let Message::SceneState(s) = m {
                ids = s.objects.into_iter().map(|o| o.id).collect();
            }
        }
    }
    let live = server.shutdown();
    let log = read_log(&log_path).unwrap();
    assert_eq!(log.commands.len(), 25);
    let out = replay(&log, &world).unwrap();
    assert_eq!(out.digest, live.digest(), "seed {seed}");
    assert_eq!(out.recorded_digest, Some(live.digest()));
    assert_eq!(out.trials, trial_records(&live));
    assert_eq!(out.session.trace, live.trace);
    (plans, executions)
}
