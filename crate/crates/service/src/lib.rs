//! Session host for the nanotouch simulator: the real-time stepping loop,
//! the WebSocket/HTTP server, session telemetry and the command line.

pub mod cli;
pub mod config;
pub mod protocol;
pub mod realtime;
pub mod server;
pub mod telemetry;
