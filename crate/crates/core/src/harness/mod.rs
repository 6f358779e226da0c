//! Command-line harness: file formats, evaluation, order selection and
//! simulation studies.

pub mod eval;
pub mod io;
pub mod select;
pub mod models;
pub mod studies;
pub mod cli;
pub mod config;
pub mod fixture;
pub mod pipeline;

pub use cli::cli_main;
