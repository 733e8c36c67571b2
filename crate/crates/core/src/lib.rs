//! Multi-agent persistent monitoring on a line: exact hybrid simulation,
//! event-driven gradient estimation, gradient descent over switching points
//! and dwell times, and a visit-sequence scheduler for cross-checking.

pub mod config;
pub mod error;
pub mod ipa;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod poly;
pub mod potential;
pub mod scheduler;
pub mod sim;
pub mod stochastic;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{AgentSpec, MissionConfig, Target, UncertaintyRate};
