//! Simulator, file formats and reports for privacy-preserving P2P energy
//! billing. The protocol arithmetic lives in `ppbsp-core`; this crate wires
//! the entities together over an in-process network and counts what they do.

pub mod bench;
pub mod cli;
pub mod entities;
pub mod files;
pub mod keys;
pub mod metrics;
pub mod network;
pub mod report;
pub mod simnet;
pub mod verify;

pub use ppbsp_core as core;
