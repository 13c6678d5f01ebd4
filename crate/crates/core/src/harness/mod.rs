//! Experiment configuration, the simulation runner and file output.
//!
//! # Seed derivation
//!
//! Every random stream is a `ChaCha8Rng` seeded with
//! `derive_seed(base_seed, repetition, role)`:
//!
//! ```text
//! h = splitmix64(base_seed)
//! h = splitmix64(h ^ repetition)
//! h = splitmix64(h ^ role)
//! ```
//!
//! Roles are 1 for `Θ⋆`, 2 for action sets, 3 for reward noise, and the
//! 64-bit FNV-1a hash of the policy label for policy-internal sampling.

pub mod config;
pub mod export;
pub mod runner;
pub mod seed;

pub use config::{parse_config, ExperimentConfig, OutputPaths, RunArgs};
pub use export::{
    export_csv, format_sig6, plot_svg, read_csv, read_trace, render_plot_svg, write_trace,
    AxisScale, CsvRow, TraceRow,
};
pub use runner::{
    run_episode, run_experiment, run_experiment_detailed, AggregateResult, Episode, ExperimentRun,
    PolicyAggregate,
};
