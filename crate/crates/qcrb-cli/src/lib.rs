//! Library surface of the `qcrb` command-line tool: scenario configs,
//! execution, report artifacts, and shipped scenarios. The binary in
//! `main.rs` is a thin argument-parsing shell over these modules.

pub mod config;
pub mod matjson;
pub mod report;
pub mod runner;
pub mod scenarios;
