//! Trajectory reconstruction and exact hybrid simulation.

pub mod engine;
pub mod locate;
pub mod params;
pub mod program;
pub mod trace;

pub use engine::{params_cost, program_cost, simulate, simulate_params, simulate_with, SimOptions};
pub use locate::{locate_event, EventLocation};
pub use params::{default_gamma, AgentParams, ParamLayout, TrajectoryParams};
pub use program::{compile_program, AgentProgram, ControlProgram, Phase, PhaseKind};
pub use trace::{fmt_g, Diagnostics, Event, EventKind, Sample, Segment, SimTrace};
