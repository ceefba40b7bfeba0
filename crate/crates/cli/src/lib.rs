//! Pipeline behind the `kgdecay` binary: config loading, stage execution and
//! the certificate and summary files.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{Overrides, RunConfig, Stage};
pub use error::{exit, CliError};
pub use pipeline::{run, CertificateFile};
