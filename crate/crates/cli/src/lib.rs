//! Command-line tool and HTTP service over the `zhsnacs` library.

pub mod commands;
pub mod config;
pub mod service;
pub mod store;

pub use commands::{run, Cli};
pub use config::Config;
