//! File formats, dataset layout and the command-line driver around
//! `srvd-core`: PNG images, label text, SRVD1 checkpoints, run configs and
//! CSV reports.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod pngio;
pub mod report;

pub use error::{Error, Result};
