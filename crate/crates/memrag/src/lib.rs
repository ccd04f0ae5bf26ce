//! File formats, experiment commands, remote generation and the interactive
//! session built on `memrag-core`.

pub mod commands;
pub mod config;
pub mod io;
pub mod remote;
pub mod repl;
pub mod report;
pub mod snapshot;

pub use config::RunConfig;
pub use report::CODE_VERSION;
