//! Agent-based model of cooperation on a co-evolving contact network.
//!
//! Individuals live on a grid, move under Q-learning, rewire weighted ties
//! with the people they share a cell with, play a 2x2 game with their
//! neighbours and imitate better-off neighbours. An optional M/G/inf
//! birth-death process replaces the fixed population.

pub mod birth_death;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod exec;
pub mod game;
pub mod learning;
pub mod metrics;
pub mod world;

pub use error::{Error, Result};
pub use exec::Execution;
