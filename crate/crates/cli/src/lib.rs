//! Experiment plumbing for the `mcaloha` binary: analytic tables, single
//! scenario runs and replicated sweeps.

pub mod analytic;
pub mod error;
pub mod run;
pub mod sweep;

pub use error::{CliError, CliResult};

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}
