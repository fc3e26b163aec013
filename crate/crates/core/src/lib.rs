//! Desk-scale laboratory for multi-quadrotor formation flight with obstacle
//! avoidance: rigid-body simulation, procedural obstacle worlds, a
//! four-component multi-objective reward, an attention-based policy with a
//! built-in reverse-mode autodiff, MAPPO training with reward-weight search
//! and curriculum learning, and evaluation metrics.

pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod reward;
pub mod seeding;
pub mod train;
pub mod world;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Gravitational acceleration, m/s^2 (world z points up).
pub const GRAVITY: f64 = 9.81;
