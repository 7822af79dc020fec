//! World and chain documents on disk.

use std::path::{Path, PathBuf};

use thiserror::Error;
use twin_core::kinematics::{builtin, KinematicChain};
use twin_core::world::GroundTruthWorld;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error in {path}: {source}")]
    Schema { path: PathBuf, source: serde_json::Error },
    #[error("invalid {path}: {message}")]
    Validation { path: PathBuf, message: String },
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })
}

pub fn parse_world(text: &str, path: &Path) -> Result<GroundTruthWorld, LoadError> {
    let raw: GroundTruthWorld = serde_json::from_str(text).map_err(|source| LoadError::Schema { path: path.into(), source })?;
    raw.validated().map_err(|e| LoadError::Validation { path: path.into(), message: e.to_string() })
}

pub fn load_world(path: &Path) -> Result<GroundTruthWorld, LoadError> {
    parse_world(&read(path)?, path)
}

pub fn parse_chain(text: &str, path: &Path) -> Result<KinematicChain, LoadError> {
    let raw: KinematicChain = serde_json::from_str(text).map_err(|source| LoadError::Schema { path: path.into(), source })?;
    raw.validated().map_err(|e| LoadError::Validation { path: path.into(), message: e.to_string() })
}

/// Loads a chain file, or a built-in chain when `spec` names one
/// (`arm7`, `planar2`, `planar3`) and no such file exists.
pub fn load_chain(spec: &str) -> Result<KinematicChain, LoadError> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(chain) = builtin::by_name(spec) {
            return Ok(chain);
        }
    }
    parse_chain(&read(path)?, path)
}

/// The world must be written for the chain it is paired with.
pub fn check_pairing(world: &GroundTruthWorld, chain: &KinematicChain) -> Result<(), LoadError> {
    if world.chain != chain.name {
        return Err(LoadError::Validation {
            path: PathBuf::from(&world.chain),
            message: format!("world expects chain `{}` but `{}` was given", world.chain, chain.name),
        });
    }
    Ok(())
}

/// Directory holding the bundled fixtures (`worlds/`, `chains/`).
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn bundled_world(name: &str) -> PathBuf {
    fixtures_dir().join("worlds").join(format!("{name}.json"))
}
