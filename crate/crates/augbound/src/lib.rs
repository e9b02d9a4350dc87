//! Command-line harness for `augbound-core`: experiment configuration, file
//! formats, and the sweep drivers behind the `augbound` binary.

pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use run::{run, RunOutput};
