//! IO, configuration, reporting, and parallel orchestration for the
//! doubly robust posterior-coupling pipeline.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod parallel;
pub mod report;
