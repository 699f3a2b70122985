//! Service, persistence and command-line tooling around `famulus-core`.

pub mod bench;
pub mod config;
pub mod error;
pub mod formats;
pub mod journal;
pub mod pipeline;
pub mod service;
pub mod synth;
pub mod system;

pub use config::{Config, SystemConfig};
pub use error::{Error, Result};
pub use system::{Phase, System};
