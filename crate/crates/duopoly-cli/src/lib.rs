//! Library surface of the command-line front end: config ingestion,
//! bundled experiment presets, and the run/resume/verify/export
//! commands.

pub mod commands;
pub mod config_file;
pub mod presets;
