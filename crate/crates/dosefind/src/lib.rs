//! Command line, file formats and HTTP service for the `dosefind-core`
//! dose-finding engine.

pub mod batch;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod service;
pub mod session;

pub use error::{AppError, AppResult};
