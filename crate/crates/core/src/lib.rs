//! Chain-of-thought C-RASP toolchain.
//!
//! Evaluates C-RASP formulas (optionally with relative positional relations),
//! runs chain-of-thought programs autoregressively, simulates deterministic
//! counter machines, compiles counter machines into chain-of-thought
//! programs, and generates trace-supervised datasets.

pub mod crasp;
pub mod rpe;
pub mod cot;
pub mod cm;
pub mod compiler;
pub mod asm;
pub mod dsl;
pub mod tasks;
pub mod dataset;
