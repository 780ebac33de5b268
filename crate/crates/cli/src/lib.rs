//! `eyecontact` command-line tool and HTTP service.
//!
//! Exit codes: 0 success, 1 I/O or configuration, 2 bad filter expression,
//! 3 session could not be loaded or synchronized, 4 invalid session script,
//! 5 evaluation failed (unknown participant, AU or emotion).

pub mod cli;
pub mod error;
pub mod jobs;
pub mod server;
pub mod session;

pub use error::{exit, CliError};
