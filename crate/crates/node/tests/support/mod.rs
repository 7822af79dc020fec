#![allow(dead_code)]

pub mod fuzz;
pub mod gen;
