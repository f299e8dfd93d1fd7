//! Command-line front end for the semi-Lagrangian BGK solver: configuration,
//! the built-in initial conditions and the `run`, `study`, `sweep` and
//! `validate` subcommands.

pub mod app;
pub mod config;
pub mod ic;

pub use app::{main_with_args, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK};
pub use config::{parse_config, RunConfig};
pub use ic::InitialCondition;
