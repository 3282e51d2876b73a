//! Benchmark harness: runs the manufactured-solution examples of
//! `tfde-core` from a JSON config and writes deterministic result tables.

pub mod config;
pub mod error;
pub mod runners;
pub mod table;

use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

pub use config::{ExampleId, ExperimentConfig, SchemeChoice};
pub use error::CliError;
pub use runners::{run, RunOptions};
pub use table::{Format, ResultTable, Row};

/// Exit status for a run that finished with flagged rows.
pub const EXIT_PARTIAL: i32 = 2;
/// Exit status for config, numerical or output failures.
pub const EXIT_FAILURE: i32 = 1;

/// Contents of the `<example>.meta.json` sidecar: everything that may vary
/// between identical runs (timings, timestamp) plus provenance.
pub fn metadata(
    example: ExampleId,
    raw_config: &serde_json::Value,
    opts: RunOptions,
    format: Format,
    table: &ResultTable,
) -> serde_json::Value {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "example": example.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix_s": timestamp,
        "format": format,
        "iterative": opts.iterative,
        "scheme_override": opts.scheme.map(|s| s.name()),
        "config": raw_config,
        "wall_ms": table.wall_ms,
        "flags": table.flags,
        "diagnostics": table.diagnostics,
        "partial": table.is_partial(),
    })
}
