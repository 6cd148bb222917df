//! Command-line front end and HTTP service for the formula retrieval pipeline.

pub mod commands;
pub mod logging;
pub mod server;
