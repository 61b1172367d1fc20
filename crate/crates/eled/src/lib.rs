//! Command-line pipeline around [`eled_core`]: file formats, scenario files,
//! run manifests and thread-parallel drivers.
//!
//! | module | contents |
//! |---|---|
//! | [`formats`] | CSV and JSON schemas for histograms, tuning curves, records, reports |
//! | [`scenario`] | scenario files, validation and stage runners |
//! | [`manifest`] | output hashing, run manifests and verification |
//! | [`parallel`] | rayon drivers for simulation and scans |
//! | [`cli`] | the `eled` command |

pub mod cli;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;
pub mod scenario;

pub use error::{CliError, CliResult};
