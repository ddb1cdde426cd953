//! Config-driven experiment runner for radial Dunkl process simulations.
//!
//! An experiment file names a model, a scheme, one experiment and its run
//! parameters (see [`config`]). [`runner::run`] executes it and writes one CSV
//! per table, `summary.json` and finally `manifest.json` into the output
//! directory; the CSVs are byte-identical for a fixed seed whatever the
//! thread budget.

pub mod config;
pub mod output;
pub mod runner;

/// Environment variable that overrides `run.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "DUNKL_OUTPUT_DIR";
