//! Agent-based simulation of a hidden-action principal-agent relationship in
//! which both actors learn about the environment from limited memory and the
//! principal searches for the action to induce instead of solving for it.

pub mod beliefs;
pub mod benchmark;
pub mod decision;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod numeric;
