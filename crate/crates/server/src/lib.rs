//! Wizundry server: configuration, admin HTTP API, the `/ws` socket
//! endpoint and the analytics CLI.

pub mod cli;
pub mod config;
pub mod http;
pub mod serve;
pub mod ws;
