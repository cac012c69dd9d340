//! Deterministic simulator for the biomass-conserving jump-growth
//! size-spectrum model.
//!
//! A population is described by its abundance density `f(w, t)` over body
//! mass `w`. Predation events move a predator from `w` to `w + K w'` and
//! release `(1−K)/K'` offspring of mass `K' w'`, so total biomass is
//! conserved. The crate provides the discretized operator, an adaptive
//! embedded Runge–Kutta integrator, and the diagnostics used to classify
//! the long-time behaviour (cascades with gaps vs. extinction).

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod kernel;
pub mod operator;
pub mod preference;
pub mod reference;

pub use error::{ModelError, Result};
pub use grid::{Distribution, Grid};
pub use kernel::ModelParams;
pub use preference::PreferenceKind;
