//! File formats, the training driver, the evaluation harness and the
//! command line for the `foar-core` policy stack.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod harness;
pub mod training;

pub use foar_core as core;
