//! Command-line tools and the session HTTP service.

pub mod commands;
pub mod error;
pub mod server;
pub mod session;

pub use error::CliError;
pub use session::{CreateSession, ManagerError, Model, SessionInfo, SessionManager};
