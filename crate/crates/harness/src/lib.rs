//! The assessment service: HIT assembly, session lifecycle, reply sources, the event log
//! and the HTTP API used by the assessor client.

pub mod api;
pub mod bots;
pub mod config;
pub mod service;
pub mod session;

pub use api::{router, serve};
pub use config::{ConfigError, HarnessConfig};
pub use service::{reply_seed, Service, ServiceError, StartupError};
