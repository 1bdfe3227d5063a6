//! Scenario files, run artifacts, static checks and SVG figures for the
//! `shepherd` command-line tool.

pub mod check;
pub mod commands;
pub mod output;
pub mod plot;
pub mod scenario;

pub use scenario::ScenarioFile;
