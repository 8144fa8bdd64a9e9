//! Server, HTTP client, benchmark harness and command line on top of
//! `preemptql-core`.

pub mod bench;
pub mod cli;
pub mod http;
pub mod load;
pub mod server;
pub mod wire;
