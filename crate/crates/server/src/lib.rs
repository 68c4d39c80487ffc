//! HTTP service and command-line driver over the knowledge engine.

pub mod api;
pub mod cli;
pub mod state;

pub use api::{router, AppState};
pub use state::{SnapshotCell, Updater};
