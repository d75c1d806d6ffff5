//! Case-study configuration, builtin models, the synthesis pipeline and
//! closed-loop simulation for `symctl`.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod registry;
pub mod simulate;

pub use config::{load_config, parse_config, CaseStudyConfig, Method};
pub use error::{CliError, CliResult};
