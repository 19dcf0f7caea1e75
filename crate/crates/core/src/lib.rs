//! Deciding, minute by minute, whether to interrupt a user with a microtask.

pub mod a2c;
pub mod engine;
pub mod features;
pub mod forest;
pub mod microtask;
pub mod persist;
pub mod reward;
pub mod simulator;
pub mod study;

pub use a2c::{Action, Hyperparameters};
pub use engine::{EngineConfig, EngineError, EventKind, EventRecord, Policy, PolicyDecision, UserEngine};
pub use features::{Location, Motion, Observation, Ringer, Screen, UserContext};
pub use microtask::{Microtask, MicrotaskPool};
pub use reward::{Outcome, RewardConfig};
pub use simulator::{Archetype, SimProfile};
pub use study::{AgentKind, StudyConfig, UserSpec};
