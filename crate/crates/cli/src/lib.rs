//! File formats, configuration parsing and verification suites around
//! [`channelwave_core`]. The `channelwave` binary is a thin layer over
//! [`commands`].

pub mod commands;
pub mod config;
pub mod output;
pub mod suites;
