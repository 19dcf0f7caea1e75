//! Per-user scheduling behind a stateless HTTP front-end.
//!
//! Each request locks the user, loads their committed state, resolves the
//! piggybacked response, ticks the engine, and commits the new events and
//! state before answering. Any number of front-ends may share one store.

pub mod http;
mod service;
pub mod store;

pub use service::{
    next_minute, DecisionRequest, DecisionResponse, OutcomeKind, PreviousResponse, RegisterRequest, Service,
    ServiceError, DEFAULT_POOL_PER_TYPE,
};
pub use store::{Store, StoreError, UserSettings, UserState};

/// Environment variable naming the store directory.
pub const STORE_ENV: &str = "NUDGE_STORE";
