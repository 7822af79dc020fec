mod support;

use std::path::Path;

use support::fuzz::fuzz_session;
use twin_core::kinematics::{builtin, JointConfig};
use twin_core::session::Command;
use twin_node::client::Client;
use twin_node::files::load_world;
use twin_node::log::{read_log, replay, ReplayError};
use twin_node::scenario::{golden_config, golden_world, run_scenario, SCENARIOS};
use twin_node::server::{serve, ClockMode, ServerConfig};

#[test]
fn golden_scenarios_replay_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    for s in SCENARIOS {
        let run = run_scenario(s.name, 42, dir.path(), "127.0.0.1:0").unwrap();
        assert!(s.expected(&run), "{}: {:?}", s.name, run.report.outcome);
        let log = read_log(&run.log_path).unwrap();
        let out = replay(&log, &load_world(&run.world_path).unwrap()).unwrap();
        assert!(out.matches(), "{}", s.name);
        assert_eq!(out.digest, run.digest);
        assert_eq!(out.trials, vec![run.record.clone()]);
    }
}

#[test]
fn fuzzed_sessions_replay_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (mut plans, mut executions) = (0, 0);
    for seed in 0..20 {
        let (p, e) = fuzz_session(seed, dir.path());
        plans += p;
        executions += e;
    }
    eprintln!("accepted plans {plans}, executions {executions}");
    assert!(plans >= 5 && executions >= 3, "fuzz too shallow: {plans} plans, {executions} executions");
}

fn scenario_log(dir: &Path) -> (std::path::PathBuf, u64) {
    let run = run_scenario("undetected_obstacle_object_adder", 3, dir, "127.0.0.1:0").unwrap();
    (run.log_path, run.digest)
}

#[test]
fn stamps_are_recorded_not_resampled() {
    let dir = tempfile::tempdir().unwrap();
    let (path, digest) = scenario_log(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut edited = vec![lines[0].to_string()];
    for (i, l) in lines[1..].iter().enumerate() {
        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
        v["stamp_ms"] = serde_json::json!(7 + 1000 * i as u64);
        edited.push(v.to_string());
    }
    let edited_path = dir.path().join("edited.log");
    std::fs::write(&edited_path, edited.join("\n") + "\n").unwrap();
    let out = replay(&read_log(&edited_path).unwrap(), &golden_world()).unwrap();
    assert_eq!(out.digest, digest);
    assert!(out.matches());
}

#[test]
fn wrong_world_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = scenario_log(dir.path());
    let mut other = golden_world();
    other.objects[0].pose.position.x += 0.001;
    let log = read_log(&path).unwrap();
    assert!(matches!(replay(&log, &other), Err(ReplayError::DigestMismatch { .. })));
}

#[test]
fn corrupt_logs_are_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = scenario_log(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = "{\"type\":\"sense\"".into();
    let bad = dir.path().join("bad.log");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    assert!(matches!(read_log(&bad), Err(ReplayError::LogCorrupt { line: 4, .. })));

    std::fs::write(&bad, "not a header\n").unwrap();
    assert!(matches!(read_log(&bad), Err(ReplayError::LogCorrupt { line: 1, .. })));
}

#[test]
fn truncated_log_has_no_recorded_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (path, digest) = scenario_log(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = dir.path().join("cut.log");
    std::fs::write(&cut, lines[..lines.len() - 1].join("\n")).unwrap();
    let out = replay(&read_log(&cut).unwrap(), &golden_world()).unwrap();
    assert_eq!(out.recorded_digest, None);
    assert_eq!(out.digest, digest);
    assert!(!out.matches());
}

#[test]
fn move_arm_joint_count_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let server = serve("127.0.0.1:0", ServerConfig { world: golden_world(), chain: builtin::arm7(), session: golden_config(1), log_path: dir.path().join("a.log"), clock: ClockMode::default() }).unwrap();
    let mut c = Client::connect(server.addr()).unwrap();
    c.recv().unwrap();
    let reply = c.request(&Command::MoveArm { q: JointConfig(vec![0.0; 3]) }).unwrap();
    assert!(!reply.ack.ok);
    server.shutdown();
}
