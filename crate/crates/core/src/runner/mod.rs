//! Hybrid closed-loop simulation.

pub mod controllers;
pub mod diagnostics;
pub mod engine;
pub mod exogenous;
pub mod integrate;
pub mod log;
pub mod plot;
pub mod scenario;
