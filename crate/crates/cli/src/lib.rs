//! Command line driver: configuration, simulation bundles, verification
//! suites and the symbolic rewriter.

pub mod config;
pub mod derive;
pub mod error;
pub mod output;
pub mod simulate;
pub mod verify;

pub use config::{stationary, FunctionConfig, RunConfig, SEED_ENV};
pub use derive::{run_derive, DeriveMode, DeriveOptions};
pub use error::CliError;
pub use simulate::{run_simulate, simulate_config, Bundle, Summary};
pub use verify::{run_verify, Suite, VerifyOptions, VerifyReport};
