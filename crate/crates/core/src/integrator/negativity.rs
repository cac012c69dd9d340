use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::grid::{Distribution, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativityMode {
    TrackOnly,
    #[default]
    Clip,
}

impl NegativityMode {
    pub fn name(self) -> &'static str {
        match self {
            NegativityMode::TrackOnly => "track-only",
            NegativityMode::Clip => "clip",
        }
    }
}

impl fmt::Display for NegativityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NegativityMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s {
            "track-only" | "track_only" => Ok(NegativityMode::TrackOnly),
            "clip" => Ok(NegativityMode::Clip),
            other => Err(ModelError::UnknownName {
                kind: "negativity mode",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NegativityRecord {
    /// Smallest value seen (before clipping); `None` when nothing was negative.
    pub min_value: Option<f64>,
    /// Trapezoid-weighted biomass removed by clipping.
    pub clipped_biomass: f64,
    pub clipped_nodes: usize,
}

impl NegativityRecord {
    pub fn is_empty(&self) -> bool {
        self.min_value.is_none()
    }

    pub(crate) fn merge(&mut self, other: &NegativityRecord) {
        self.min_value = match (self.min_value, other.min_value) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.clipped_biomass += other.clipped_biomass;
        self.clipped_nodes += other.clipped_nodes;
    }
}

pub(crate) fn apply_in_place(grid: &Grid, values: &mut [f64], mode: NegativityMode) -> NegativityRecord {
    let mut rec = NegativityRecord::default();
    for (n, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            rec.min_value = Some(rec.min_value.map_or(*v, |m: f64| m.min(*v)));
            if mode == NegativityMode::Clip {
                rec.clipped_biomass += grid.weight(n) * grid.node(n) * (-*v);
                rec.clipped_nodes += 1;
                *v = 0.0;
            }
        }
    }
    rec
}

/// Records (and under [`NegativityMode::Clip`] removes) negative entries.
pub fn negativity_policy(state: &Distribution, mode: NegativityMode) -> (Distribution, NegativityRecord) {
    let mut out = state.clone();
    let grid = *out.grid();
    let rec = apply_in_place(&grid, out.values_mut(), mode);
    (out, rec)
}
