//! Std side of the digital twin: file formats, the wire codec, the operator
//! service with its command log, replay, and the scripted golden scenarios.

pub mod client;
pub mod files;
pub mod log;
pub mod pgm;
pub mod scenario;
pub mod server;
pub mod wire;
