//! Deterministic core of the tabletop digital twin: kinematics, geometry,
//! simulated perception, the belief scene, planning, execution against
//! ground truth, the operator session and study instruments.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod belief;
pub mod camera;
pub mod collision;
pub mod digest;
pub mod execution;
pub mod kinematics;
mod linalg;
pub mod math;
pub mod perception;
pub mod planner;
pub mod session;
pub mod study;
pub mod world;
