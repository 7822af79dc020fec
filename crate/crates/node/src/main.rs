use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use twin_core::camera::Intrinsics;
use twin_core::kinematics::{builtin, Robot};
use twin_core::perception::PerceptionConfig;
use twin_core::planner::PlannerConfig;
use twin_core::session::SessionConfig;
use twin_core::study::{export_metrics, generate_trial, probe_configs, required_sample_size, TrialInputs};
use twin_node::files::{check_pairing, load_chain, load_world};
use twin_node::log::{hex, read_log, replay, ReplayError};
use twin_node::scenario::{run_scenario, Scenario};
use twin_node::server::{serve, ClockMode, ServerConfig};

#[derive(Parser)]
#[command(name = "twin", version, about = "Robot digital twin: operator service, replay and study tools")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    /// 100 ms of session time per command
    Logical,
    Wall,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the operator service (WebSocket and TCP on one port)
    Serve {
        #[arg(long)]
        world: PathBuf,
        /// Chain file, or a built-in name such as `arm7`
        #[arg(long, default_value = "arm7")]
        chain: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        log: PathBuf,
        /// Probability a visible object is missed by a camera
        #[arg(long)]
        p_miss: Option<f64>,
        #[arg(long, value_enum, default_value_t = Clock::Logical)]
        clock: Clock,
    },
    /// Re-apply a command log; exit 0 when the digest matches, 2 when not
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        world: PathBuf,
    },
    /// A-priori sample size for a paired two-sided test
    Power {
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
        #[arg(long, default_value_t = 0.4)]
        d: f64,
    },
    /// Emit a failure-injected trial spec as JSON
    Trial {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        index: u32,
        /// Defaults to the chain the world names
        #[arg(long)]
        chain: Option<String>,
        #[arg(long, default_value = "screen")]
        label: String,
    },
    /// Replay a log and print per-trial metrics as CSV
    Metrics {
        #[arg(long)]
        log: PathBuf,
    },
    /// Run a golden scenario through a live server
    Scenario {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// `auto` or a port number
        #[arg(long, default_value = "auto")]
        port: String,
        /// Where the log and world file are written
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Serve { world, chain, seed, port, bind, log, p_miss, clock } => {
            let world = load_world(&world)?;
            let chain = load_chain(&chain)?;
            check_pairing(&world, &chain)?;
            let mut perception = PerceptionConfig { seed, ..PerceptionConfig::default() };
            if let Some(p) = p_miss {
                perception.p_miss = p;
            }
            perception.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
            let session = SessionConfig {
                perception,
                planner: PlannerConfig::default(),
                arm_intrinsics: Intrinsics::arm_default(),
                home: builtin::home_for(&chain),
            };
            let clock = match clock {
                Clock::Logical => ClockMode::default(),
                Clock::Wall => ClockMode::Wall,
            };
            let config = ServerConfig { world, chain, session, log_path: log, clock };
            let server = serve(&format!("{bind}:{port}"), config)?;
            eprintln!("listening on {}", server.addr());
            server.wait();
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay { log, world } => {
            let parsed = read_log(&log)?;
            let world = load_world(&world)?;
            let out = match replay(&parsed, &world) {
                Ok(out) => out,
                Err(e @ ReplayError::DigestMismatch { .. }) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.into()),
            };
            println!("digest {}", hex(out.digest));
            match out.recorded_digest {
                Some(d) if d == out.digest => {
                    println!("match");
                    Ok(ExitCode::SUCCESS)
                }
                Some(d) => {
                    println!("mismatch: log recorded {}", hex(d));
                    Ok(ExitCode::from(2))
                }
                None => {
                    println!("mismatch: log has no session trailer");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Cmd::Power { alpha, power, d } => {
            let n = required_sample_size(alpha, power, d).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("{n}");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Trial { world, seed, index, chain, label } => {
            let world = load_world(&world)?;
            let chain = load_chain(chain.as_deref().unwrap_or(&world.chain))?;
            check_pairing(&world, &chain)?;
            let home = builtin::home_for(&chain);
            let robot = Robot::new(chain, world.robot_base);
            let probes = probe_configs(&robot, &world, &home);
            let perception = PerceptionConfig::default();
            let inputs = TrialInputs { robot: &robot, world: &world, perception: &perception, arm_intrinsics: Intrinsics::arm_default(), probes: &probes };
            let spec = generate_trial(&inputs, index, seed, &label).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("{}", serde_json::to_string_pretty(&spec)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Metrics { log } => {
            let parsed = read_log(&log)?;
            let out = replay(&parsed, &parsed.header.world.clone())?;
            print!("{}", export_metrics(&out.trials));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Scenario { name, seed, port, out } => {
            let Some(scenario) = Scenario::by_name(&name) else { bail!("unknown scenario `{name}`") };
            let port: u16 = if port == "auto" { 0 } else { port.parse().context("port must be `auto` or a number")? };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let run = run_scenario(&name, seed, &out, &format!("127.0.0.1:{port}"))?;
            println!("outcome {}", run.report.outcome.label());
            println!("correction_method {}", run.record.correction_method.as_str());
            println!("digest {}", hex(run.digest));
            println!("log {}", run.log_path.display());
            println!("world {}", run.world_path.display());
            Ok(if scenario.expected(&run) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
