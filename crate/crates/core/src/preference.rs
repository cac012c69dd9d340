//! Feeding preference functions `s(r)` of the predator/prey mass ratio.
//!
//! Each shape lives behind [`FeedingPreference`] and is constructed by name
//! through a [`PreferenceRegistry`], so configurations can pick a shape at
//! runtime without the operator knowing which one it got.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Half-width of the summation window of the Gaussian, in units of σ.
pub const GAUSSIAN_WINDOW_SIGMAS: f64 = 6.0;

/// Closed set of preference shapes known to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceKind {
    Gaussian,
    #[serde(rename = "compact")]
    CompactBump,
    /// σ → 0 limit. Has no density; only the reference oracle understands it.
    Dirac,
}

impl PreferenceKind {
    pub fn name(self) -> &'static str {
        match self {
            PreferenceKind::Gaussian => "gaussian",
            PreferenceKind::CompactBump => "compact",
            PreferenceKind::Dirac => "dirac",
        }
    }
}

impl fmt::Display for PreferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreferenceKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(PreferenceKind::Gaussian),
            "compact" | "compact_bump" => Ok(PreferenceKind::CompactBump),
            "dirac" => Ok(PreferenceKind::Dirac),
            other => Err(ModelError::UnknownName {
                kind: "preference",
                name: other.to_string(),
            }),
        }
    }
}

/// Ratio interval `[lo, hi]`, or the whole half line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Bounded { lo: f64, hi: f64 },
    Unbounded,
}

impl Support {
    pub fn contains(&self, r: f64) -> bool {
        match *self {
            Support::Bounded { lo, hi } => r >= lo && r <= hi,
            Support::Unbounded => r >= 0.0,
        }
    }
}

pub trait FeedingPreference: Send + Sync + fmt::Debug {
    fn kind(&self) -> PreferenceKind;

    /// Density at ratio `r >= 0`.
    fn value(&self, r: f64) -> f64;

    /// Mathematical support of `s`.
    fn support(&self) -> Support;

    /// Ratios outside this window are treated as zero inside quadrature sums.
    fn summation_window(&self) -> Support {
        self.support()
    }

    /// Maximum of `s`, attained at `r = B`.
    fn peak(&self) -> f64;

    /// `s(r)` with the summation window applied.
    fn windowed(&self, r: f64) -> f64 {
        if self.summation_window().contains(r) {
            self.value(r)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub preferred_ratio: f64,
    pub breadth: f64,
}

impl FeedingPreference for Gaussian {
    fn kind(&self) -> PreferenceKind {
        PreferenceKind::Gaussian
    }

    fn value(&self, r: f64) -> f64 {
        let z = (r - self.preferred_ratio) / self.breadth;
        (-0.5 * z * z).exp() / (self.breadth * (2.0 * PI).sqrt())
    }

    fn support(&self) -> Support {
        Support::Unbounded
    }

    fn summation_window(&self) -> Support {
        let half = GAUSSIAN_WINDOW_SIGMAS * self.breadth;
        Support::Bounded {
            lo: (self.preferred_ratio - half).max(0.0),
            hi: self.preferred_ratio + half,
        }
    }

    fn peak(&self) -> f64 {
        1.0 / (self.breadth * (2.0 * PI).sqrt())
    }
}

/// Smooth bump `σ⁻² exp(−σ²/(σ² − (r−B)²))` on the open interval `(B−σ, B+σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBump {
    pub preferred_ratio: f64,
    pub breadth: f64,
}

impl FeedingPreference for CompactBump {
    fn kind(&self) -> PreferenceKind {
        PreferenceKind::CompactBump
    }

    fn value(&self, r: f64) -> f64 {
        let s2 = self.breadth * self.breadth;
        let d = r - self.preferred_ratio;
        let gap = s2 - d * d;
        // endpoints and exterior are exactly zero
        if gap <= 0.0 {
            return 0.0;
        }
        (-s2 / gap).exp() / s2
    }

    fn support(&self) -> Support {
        Support::Bounded {
            lo: self.preferred_ratio - self.breadth,
            hi: self.preferred_ratio + self.breadth,
        }
    }

    fn peak(&self) -> f64 {
        1.0 / (E * self.breadth * self.breadth)
    }
}

pub type PreferenceFactory =
    fn(preferred_ratio: f64, breadth: f64) -> Result<Box<dyn FeedingPreference>>;

/// Name → constructor table for preference shapes.
#[derive(Clone)]
pub struct PreferenceRegistry {
    factories: BTreeMap<String, PreferenceFactory>,
}

impl fmt::Debug for PreferenceRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

fn build_gaussian(preferred_ratio: f64, breadth: f64) -> Result<Box<dyn FeedingPreference>> {
    Ok(Box::new(Gaussian {
        preferred_ratio,
        breadth,
    }))
}

fn build_compact(preferred_ratio: f64, breadth: f64) -> Result<Box<dyn FeedingPreference>> {
    Ok(Box::new(CompactBump {
        preferred_ratio,
        breadth,
    }))
}

fn build_dirac(_: f64, _: f64) -> Result<Box<dyn FeedingPreference>> {
    Err(ModelError::Unsupported(
        "dirac preference has no density; use the reference oracle".into(),
    ))
}

impl PreferenceRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with `gaussian`, `compact` and `dirac`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(PreferenceKind::Gaussian.name(), build_gaussian);
        reg.register(PreferenceKind::CompactBump.name(), build_compact);
        reg.register(PreferenceKind::Dirac.name(), build_dirac);
        reg
    }

    pub fn register(&mut self, name: &str, factory: PreferenceFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        name: &str,
        preferred_ratio: f64,
        breadth: f64,
    ) -> Result<Box<dyn FeedingPreference>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ModelError::UnknownName {
                kind: "preference",
                name: name.to_string(),
            })?;
        factory(preferred_ratio, breadth)
    }
}

impl Default for PreferenceRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
