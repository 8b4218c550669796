//! Batch experiments on top of `singular_bsde`: configuration parsing, one
//! runner per experiment kind, CSV artifacts and plot-ready exports.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiment;

pub use artifacts::{emit_plot_data, ArtifactSet};
pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, Check, RunReport};
