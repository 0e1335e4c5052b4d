//! Run orchestration for the `xdiff` simulator: configuration, reproducible
//! initial data, output formats, preset experiments and refinement studies.

// Checks are written as `!(x > bound)` on purpose: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod io;
pub mod refine;
pub mod rng;

pub use config::{parse_config, render, RunConfig};
pub use experiments::{run_experiment, run_steady, Preset, Report, SteadyRequest};
pub use refine::{refinement_study, Level, OrderTable};
