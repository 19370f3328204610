//! Command-line pipeline for learning reduced-order LPV models: data
//! generation, projection and LPV-NN fitting, simulation and evaluation.
//!
//! The binary is a thin wrapper; every command is callable from this library.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use commands::{
    cmd_evaluate, cmd_fit_lpv, cmd_fit_projection, cmd_generate, cmd_pipeline, cmd_simulate, input_signal,
    GenerateSummary, InitialCondition, LpvSummary, PipelineSummary, ProjectionSummary, ReportPaths,
};
pub use config::{InputSpec, NoiseConfig, OutputPaths, PipelineConfig, SplitConfig, SystemSpec};
pub use error::{CliError, CliResult};
