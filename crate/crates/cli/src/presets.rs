//! Parameter sets of the published figure runs.

use sizespec::diagnostics::DiagnosticsSettings;
use sizespec::integrator::StepControl;
use sizespec::{Grid, ModelParams, PreferenceKind};

use crate::config::{InitialState, RunConfig};

pub const PRESET_NAMES: [&str; 6] = ["figure4", "figure5", "figure6", "figure7", "figure8", "figure9"];

pub const PRESET_CELLS: usize = 200;
pub const PRESET_UPPER: f64 = 10.0;
pub const PRESET_T_END: f64 = 5.0;

/// `(preference, α, B, σ, K, K')`
fn bindings(name: &str) -> Option<(PreferenceKind, f64, f64, f64, f64, f64)> {
    use PreferenceKind::{CompactBump, Gaussian};
    Some(match name {
        "figure4" => (CompactBump, 0.9, 1.5, 0.3, 0.1, 0.01),
        "figure5" => (CompactBump, 1.1, 1.5, 0.3, 0.1, 0.01),
        "figure6" => (CompactBump, 1.1, 1.1, 0.3, 0.1, 0.01),
        "figure7" => (CompactBump, 0.9, 1.5, 0.3, 0.4, 0.01),
        "figure8" => (Gaussian, 0.9, 1.5, 0.3, 0.1, 0.01),
        "figure9" => (Gaussian, 0.9, 2.0, 0.2, 0.1, 0.01),
        _ => return None,
    })
}

/// Resolved configuration of a named preset.
pub fn preset(name: &str) -> Option<RunConfig> {
    let (kind, alpha, b, sigma, k, kp) = bindings(name)?;
    let model = ModelParams::new(kind, alpha, b, sigma, k, kp).expect("preset parameters are valid");
    Some(RunConfig {
        model,
        grid: Grid::uniform(PRESET_UPPER, PRESET_CELLS).expect("preset grid is valid"),
        t_end: PRESET_T_END,
        snapshot_times: RunConfig::default_snapshots(PRESET_T_END),
        control: StepControl::default(),
        initial: InitialState::Linear { left: 10.0, right: 0.1 },
        output_dir: None,
        diagnostics: DiagnosticsSettings::default(),
    })
}
