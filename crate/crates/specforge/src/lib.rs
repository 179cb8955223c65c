//! File formats, toolchain drivers, reports and the command line for the
//! gadget toolkit. The algorithms live in `specforge-core`.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod stages;
pub mod synth;
pub mod toolchain;

pub use error::{Error, Result};
pub use specforge_core as core;
