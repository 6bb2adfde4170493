#![no_std]

extern crate alloc;

pub mod billing;
pub mod counters;
pub mod decimal;
pub mod market;
pub mod meter;
pub mod phe;
pub mod settlement;
pub mod wire;
