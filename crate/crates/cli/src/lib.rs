//! Batch front-end for the size-spectrum model: configs, presets, runs and
//! the analytic helpers behind `sim analyze`.

pub mod analyze;
pub mod config;
pub mod presets;
pub mod run;

pub use config::{parse_config, serialize_config, ConfigError, InitialState, RunConfig};
pub use presets::{preset, PRESET_NAMES};
pub use run::{execute, RunError, RunOutcome};
