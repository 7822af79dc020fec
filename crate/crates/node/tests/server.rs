use std::path::Path;

use twin_core::camera::CameraId;
use twin_core::kinematics::builtin;
use twin_core::math::Pose;
use twin_core::session::{Command, Phase};
use twin_node::client::{Client, ClientError};
use twin_node::pgm::from_base64;
use twin_node::scenario::{golden_config, golden_world};
use twin_node::server::{serve, ClockMode, ServerConfig, ServerHandle};
use twin_node::wire::{decode, encode, AckMsg, Empty, Envelope, Message, SenseCmd};

fn start(dir: &Path) -> ServerHandle {
    let config = ServerConfig {
        world: golden_world(),
        chain: builtin::arm7(),
        session: golden_config(5),
        log_path: dir.join("session.log"),
        clock: ClockMode::default(),
    };
    serve("127.0.0.1:0", config).unwrap()
}

fn connect(server: &ServerHandle) -> Client {
    let mut c = Client::connect(server.addr()).unwrap();
    assert!(matches!(c.recv().unwrap().payload, Message::SceneState(_)), "greeting");
    c
}

#[test]
fn passthrough_over_tcp_is_a_valid_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let mut c = connect(&server);
    let reply = c.request(&Command::RequestPassthrough { width: 64, height: 48 }).unwrap();
    assert!(reply.ack.ok);
    let pt = reply.messages.iter().find_map(|m| if let Message::Passthrough(p) = m { Some(p) } else { None }).expect("passthrough");
    let r = from_base64(&pt.pgm).unwrap();
    assert_eq!((r.width, r.height, r.pixels.len()), (64, 48, 64 * 48));
    // the table is lighter than nothing, and objects stand out from it
    assert!(r.pixels.iter().any(|p| *p != r.pixels[0]));
    server.shutdown();
}

#[test]
fn websocket_clients_share_the_port() {
    use tungstenite::Message as Ws;
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let (mut ws, _) = tungstenite::connect(format!("ws://{}/", server.addr())).unwrap();
    let text = |m: Ws| match m {
        Ws::Text(t) => t,
        other => panic!("unexpected {other:?}"),
    };
    let greeting = decode(text(ws.read().unwrap()).as_bytes()).unwrap();
    assert!(matches!(greeting.payload, Message::SceneState(_)));

    let frame = encode(&Envelope::new(1, 0, Message::Sense(SenseCmd { camera: CameraId::Main })));
    ws.send(Ws::Text(frame)).unwrap();
    let mut tags = Vec::new();
    loop {
        let env = decode(text(ws.read().unwrap()).as_bytes()).unwrap();
        if let Message::Ack(AckMsg { command_seq, ok, phase, revision }) = env.payload {
            assert_eq!((command_seq, ok, phase), (1, true, Phase::Review));
            assert!(revision >= 1);
            break;
        }
        tags.push(env.payload.type_tag());
    }
    assert_eq!(tags, ["detection_set", "scene_state"]);
    let _ = ws.close(None);
    let session = server.shutdown();
    assert_eq!(session.trace.len(), 1);
}

fn error_code(c: &mut Client) -> String {
    match c.recv().unwrap().payload {
        Message::Error(e) => e.code,
        other => panic!("expected an error, got {other:?}"),
    }
}

#[test]
fn garbage_is_answered_and_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let mut c = connect(&server);
    c.send_raw(b"this is not json").unwrap();
    assert_eq!(error_code(&mut c), "malformed");
    c.send_raw(br#"{"type":"teleport","seq":1,"stamp_ms":0,"payload":{}}"#).unwrap();
    assert_eq!(error_code(&mut c), "unknown_type");
    c.send_raw(br#"{"type":"sense","seq":1,"stamp_ms":0,"payload":{"camera":7}}"#).unwrap();
    assert_eq!(error_code(&mut c), "bad_payload");
    c.send_raw(&[0xc3, 0x28]).unwrap();
    assert_eq!(error_code(&mut c), "malformed");
    let mut huge = vec![b'x'; (1 << 20) + 10];
    huge[0] = b'{';
    c.send_raw(&huge).unwrap();
    assert_eq!(error_code(&mut c), "frame_too_large");

    let seq = c.send(Message::Ack(AckMsg { command_seq: 1, ok: true, phase: Phase::Review, revision: 3 })).unwrap();
    assert_eq!(error_code(&mut c), "not_a_command");
    c.send_raw(encode(&Envelope::new(seq, 0, Message::Execute(Empty {}))).as_bytes()).unwrap();
    assert_eq!(error_code(&mut c), "seq_regression");

    // the connection and the session are intact
    let reply = c.request(&Command::Sense { camera: CameraId::Main }).unwrap();
    assert!(reply.ack.ok);
    assert_eq!(reply.ack.revision, 1);
    let session = server.shutdown();
    assert_eq!(session.trace.len(), 1);
    let log = std::fs::read_to_string(dir.path().join("session.log")).unwrap();
    assert_eq!(log.lines().count(), 3, "header, one command, trailer");
}

#[test]
fn rejected_commands_are_logged_and_acked_not_ok() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let mut c = connect(&server);
    let reply = c.request(&Command::Execute).unwrap();
    assert!(!reply.ack.ok);
    assert_eq!(reply.error().unwrap().0, "illegal_in_phase");
    assert_eq!(reply.ack.phase, Phase::Perceive);
    server.shutdown();
}

fn scene_revisions(messages: &[Message]) -> impl Iterator<Item = u64> + '_ {
    messages.iter().filter_map(|m| if let Message::SceneState(s) = m { Some(s.revision) } else { None })
}

/// Drains a client until the server hangs up.
fn drain(c: &mut Client) -> Vec<Message> {
    let mut out = Vec::new();
    loop {
        match c.recv() {
            Ok(env) => out.push(env.payload),
            Err(ClientError::Closed) => return out,
            Err(ClientError::Io(e)) if e.kind() == std::io::ErrorKind::ConnectionReset => return out,
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn all_clients_observe_the_same_revisions() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let mut clients = [connect(&server), connect(&server)];
    let cmds = [
        Command::Sense { camera: CameraId::Main },
        Command::AddObject { category: "block".into(), pose: Pose::from_translation(0.5, 0.0, 0.14), half_extents: None },
        Command::AddObject { category: "nonsense".into(), pose: Pose::from_translation(0.5, 0.0, 0.14), half_extents: None },
        Command::MoveObject { id: "user-r2".into(), pose: Pose::from_translation(0.5, 0.01, 0.14) },
        Command::Sense { camera: CameraId::Main },
        Command::RemoveObject { id: "user-r2".into() },
    ];
    let mut received: [Vec<Message>; 2] = Default::default();
    let mut accepted = 0;
    for (i, cmd) in cmds.iter().enumerate() {
        let reply = clients[i % 2].request(cmd).unwrap();
        accepted += reply.ack.ok as usize;
        received[i % 2].extend(reply.messages);
    }
    assert_eq!(accepted, cmds.len() - 1);
    let session = server.shutdown();
    for (c, r) in clients.iter_mut().zip(received.iter_mut()) {
        r.extend(drain(c));
    }
    let a: Vec<u64> = scene_revisions(&received[0]).collect();
    let b: Vec<u64> = scene_revisions(&received[1]).collect();
    assert_eq!(a, b);
    // one scene per accepted command
    assert_eq!(a.len(), accepted);
    assert!(a.windows(2).all(|w| w[0] < w[1]), "{a:?}");
    assert_eq!(*a.last().unwrap(), session.belief.revision);
}
