//! Append-only command log and deterministic replay.
//!
//! Line 1 is a [`LogHeader`]; every following line is one command envelope
//! exactly as the session applied it (server-assigned `seq` and `stamp_ms`).
//! A clean shutdown appends a `session_end` trailer with the live digest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use twin_core::camera::Intrinsics;
use twin_core::kinematics::{JointConfig, KinematicChain, Robot};
use twin_core::perception::PerceptionConfig;
use twin_core::planner::PlannerConfig;
use twin_core::session::{Session, SessionConfig};
use twin_core::study::{finalize_trial, trial_slices, TrialRecord};
use twin_core::world::GroundTruthWorld;

use crate::wire::{decode, encode, Envelope, Message, SessionEndMsg};

pub const LOG_VERSION: u32 = 1;

pub fn hex(d: u64) -> String {
    format!("{d:016x}")
}

pub fn parse_hex(s: &str) -> Option<u64> {
    u64::from_str_radix(s, 16).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub perception: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    /// Hex digest of the world the session started from.
    pub world_digest: String,
    pub world: GroundTruthWorld,
    pub chain: KinematicChain,
    pub perception_config: PerceptionConfig,
    pub planner_config: PlannerConfig,
    pub arm_intrinsics: Intrinsics,
    pub home: JointConfig,
    pub seeds: Seeds,
}

impl LogHeader {
    pub fn new(world: &GroundTruthWorld, chain: &KinematicChain, config: &SessionConfig) -> Self {
        LogHeader {
            version: LOG_VERSION,
            world_digest: hex(world.hash()),
            world: world.clone(),
            chain: chain.clone(),
            perception_config: config.perception.clone(),
            planner_config: config.planner,
            arm_intrinsics: config.arm_intrinsics,
            home: config.home.clone(),
            seeds: Seeds { perception: config.perception.seed },
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            perception: PerceptionConfig { seed: self.seeds.perception, ..self.perception_config.clone() },
            planner: self.planner_config,
            arm_intrinsics: self.arm_intrinsics,
            home: self.home.clone(),
        }
    }

    /// A fresh session for `world`, configured as recorded.
    pub fn session(&self, world: &GroundTruthWorld) -> Session {
        Session::new(Robot::new(self.chain.clone(), world.robot_base), world.clone(), self.session_config())
    }
}

pub struct CommandLog {
    out: BufWriter<File>,
    commands: u64,
}

impl CommandLog {
    pub fn create(path: &Path, header: &LogHeader) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(CommandLog { out, commands: 0 })
    }

    /// Appends and flushes, so the entry is durable before effects are published.
    pub fn append(&mut self, env: &Envelope) -> std::io::Result<()> {
        self.out.write_all(encode(env).as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        self.commands += 1;
        Ok(())
    }

    pub fn finish(mut self, digest: u64, stamp_ms: u64) -> std::io::Result<()> {
        let end = Message::SessionEnd(SessionEndMsg { digest: hex(digest), commands: self.commands });
        self.append(&Envelope::new(self.commands + 1, stamp_ms, end))
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("log corrupt at line {line}: {message}")]
    LogCorrupt { line: usize, message: String },
    #[error("world digest mismatch: log has {expected}, file has {found}")]
    DigestMismatch { expected: String, found: String },
}

#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub header: LogHeader,
    pub commands: Vec<Envelope>,
    /// Digest recorded by the live session, when it shut down cleanly.
    pub recorded_digest: Option<u64>,
}

pub fn read_log(path: &Path) -> Result<ParsedLog, ReplayError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let corrupt = |line: usize, message: String| ReplayError::LogCorrupt { line, message };
    let first = lines.next().ok_or_else(|| corrupt(1, "empty log".into()))??;
    let header: LogHeader = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
    if header.version != LOG_VERSION {
        return Err(corrupt(1, format!("unsupported log version {}", header.version)));
    }
    let mut commands = Vec::new();
    let mut recorded_digest = None;
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if recorded_digest.is_some() {
            return Err(corrupt(n, "entries after the session trailer".into()));
        }
        let env = decode(line.as_bytes()).map_err(|e| corrupt(n, e.to_string()))?;
        match &env.payload {
            Message::SessionEnd(end) => {
                recorded_digest = Some(parse_hex(&end.digest).ok_or_else(|| corrupt(n, "bad digest".into()))?);
            }
            m if m.to_command().is_some() => commands.push(env),
            m => return Err(corrupt(n, format!("`{}` is not a command", m.type_tag()))),
        }
    }
    Ok(ParsedLog { header, commands, recorded_digest })
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub session: Session,
    pub digest: u64,
    pub recorded_digest: Option<u64>,
    pub trials: Vec<TrialRecord>,
}

impl ReplayOutcome {
    /// True when the live run recorded a digest and replay reproduced it.
    pub fn matches(&self) -> bool {
        self.recorded_digest == Some(self.digest)
    }
}

/// Re-applies every logged command, with its recorded clock, to a fresh
/// session built from `world`.
pub fn replay(log: &ParsedLog, world: &GroundTruthWorld) -> Result<ReplayOutcome, ReplayError> {
    let found = hex(world.hash());
    if found != log.header.world_digest {
        return Err(ReplayError::DigestMismatch { expected: log.header.world_digest.clone(), found });
    }
    let mut session = log.header.session(world);
    for env in &log.commands {
        let cmd = env.payload.to_command().expect("read_log keeps only commands");
        session.apply(cmd, env.stamp_ms);
    }
    let trials = trial_records(&session);
    Ok(ReplayOutcome { digest: session.digest(), session, recorded_digest: log.recorded_digest, trials })
}

/// Metrics for every completed trial in the session trace.
pub fn trial_records(session: &Session) -> Vec<TrialRecord> {
    trial_slices(&session.trace).into_iter().filter_map(|s| finalize_trial(s, &session.initial_world).ok()).collect()
}
