//! Hub service around `pmi-core`: HTTP API, remote encoder client,
//! configuration and the `pmi` command-line tool.

pub mod api;
pub mod cli;
pub mod config;
pub mod remote;
pub mod server;

pub use config::HubConfig;
pub use remote::RemoteEncoder;
