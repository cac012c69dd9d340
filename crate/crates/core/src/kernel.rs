//! Model constants and the closed-form functions built from them: the feeding
//! kernel `k(w, w') = A w^α s(w/w')`, the moment bracket `F(m, r)`, the
//! power-law residual `G(γ, r)` and the thresholds derived from `F`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{domain, ModelError, Result};
use crate::preference::{FeedingPreference, PreferenceKind, PreferenceRegistry, Support};

/// Default absolute tolerance on `F` for the threshold root finders.
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;
/// Search ceiling for `m_*`.
pub const M_STAR_CEILING: f64 = 10.0;
/// Default number of ratio samples used by [`blowup_constant`].
pub const BLOWUP_SAMPLES: usize = 10_000;

const RATIO_SAMPLES: usize = 201;
const M_SCAN_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Fraction of prey mass assimilated by the predator, `K`.
    pub assimilation: f64,
    /// Offspring mass as a fraction of prey mass, `K'`.
    pub offspring_scale: f64,
    /// Search volume exponent `α`.
    pub search_exponent: f64,
    /// Search volume prefactor `A`.
    pub search_volume: f64,
    /// Preferred predator/prey ratio `B`.
    pub preferred_ratio: f64,
    /// Diet breadth `σ`.
    pub diet_breadth: f64,
    pub preference: PreferenceKind,
}

impl ModelParams {
    /// Validated constructor with `A = 1`.
    pub fn new(
        preference: PreferenceKind,
        search_exponent: f64,
        preferred_ratio: f64,
        diet_breadth: f64,
        assimilation: f64,
        offspring_scale: f64,
    ) -> Result<Self> {
        let p = Self {
            assimilation,
            offspring_scale,
            search_exponent,
            search_volume: 1.0,
            preferred_ratio,
            diet_breadth,
            preference,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidParam(m.to_string()));
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.assimilation) {
            return bad("assimilation K out of (0,1)");
        }
        if !open_unit(self.offspring_scale) {
            return bad("offspring_scale K' out of (0,1)");
        }
        if !(self.search_exponent > 0.0 && self.search_exponent.is_finite()) {
            return bad("search_exponent alpha must be > 0");
        }
        if !(self.search_volume > 0.0 && self.search_volume.is_finite()) {
            return bad("search_volume A must be > 0");
        }
        if !(self.preferred_ratio > 0.0 && self.preferred_ratio.is_finite()) {
            return bad("preferred_ratio B must be > 0");
        }
        if !(self.diet_breadth > 0.0 && self.diet_breadth.is_finite()) {
            return bad("diet_breadth sigma must be > 0");
        }
        if self.preference == PreferenceKind::CompactBump
            && self.preferred_ratio - self.diet_breadth <= 0.0
        {
            return bad("compact preference needs B - sigma > 0");
        }
        Ok(())
    }

    /// Builds the preference shape through the builtin registry.
    pub fn preference_fn(&self) -> Result<Box<dyn FeedingPreference>> {
        PreferenceRegistry::builtin().build(
            self.preference.name(),
            self.preferred_ratio,
            self.diet_breadth,
        )
    }

    pub fn with_preference(mut self, kind: PreferenceKind) -> Self {
        self.preference = kind;
        self
    }

    fn require_compact(&self) -> Result<()> {
        if self.preference != PreferenceKind::CompactBump {
            return Err(ModelError::Unsupported(format!(
                "{} preference; operation needs the compact bump",
                self.preference
            )));
        }
        Ok(())
    }

    fn ratio_interval(&self) -> (f64, f64) {
        (
            self.preferred_ratio - self.diet_breadth,
            self.preferred_ratio + self.diet_breadth,
        )
    }
}

/// Evaluates `s(r)`. Dirac has no density.
pub fn preference_value(p: &ModelParams, r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(domain(format!("ratio must be >= 0, got {r}")));
    }
    Ok(p.preference_fn()?.value(r))
}

pub fn preference_support(p: &ModelParams) -> Support {
    match p.preference {
        PreferenceKind::CompactBump => {
            let (lo, hi) = p.ratio_interval();
            Support::Bounded { lo, hi }
        }
        PreferenceKind::Dirac => Support::Bounded {
            lo: p.preferred_ratio,
            hi: p.preferred_ratio,
        },
        PreferenceKind::Gaussian => Support::Unbounded,
    }
}

/// `k(w_pred, w_prey) = A w_pred^α s(w_pred / w_prey)`.
pub fn kernel_value(p: &ModelParams, w_pred: f64, w_prey: f64) -> Result<f64> {
    if !(w_pred > 0.0 && w_prey > 0.0) {
        return Err(domain(format!(
            "kernel needs positive masses, got ({w_pred}, {w_prey})"
        )));
    }
    Ok(p.search_volume * w_pred.powf(p.search_exponent) * preference_value(p, w_pred / w_prey)?)
}

/// Kernel evaluator used inside quadrature sums.
///
/// Zero masses give zero (the ratio is 0 or ∞ there) and the preference
/// summation window is applied.
#[derive(Debug)]
pub struct Kernel {
    pref: Box<dyn FeedingPreference>,
    exponent: f64,
    volume: f64,
}

impl Kernel {
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            pref: p.preference_fn()?,
            exponent: p.search_exponent,
            volume: p.search_volume,
        })
    }

    #[inline]
    pub fn eval(&self, w_pred: f64, w_prey: f64) -> f64 {
        if w_pred <= 0.0 || w_prey <= 0.0 {
            return 0.0;
        }
        let s = self.pref.windowed(w_pred / w_prey);
        if s == 0.0 {
            return 0.0;
        }
        self.volume * w_pred.powf(self.exponent) * s
    }

    pub fn preference(&self) -> &dyn FeedingPreference {
        self.pref.as_ref()
    }
}

/// `F(m, r) = (r+K)^m + (1−K) K'^(m−1) − r^m − 1`.
pub fn moment_bracket(p: &ModelParams, m: f64, r: f64) -> f64 {
    let k = p.assimilation;
    let kp = p.offspring_scale;
    (r + k).powf(m) + (1.0 - k) * kp.powf(m - 1.0) - r.powf(m) - 1.0
}

fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol || (hi - lo) < 1e-15 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ratio_samples(p: &ModelParams, count: usize) -> impl Iterator<Item = f64> {
    let (lo, hi) = p.ratio_interval();
    (0..count).map(move |i| {
        if i + 1 == count {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    })
}

/// Upper end of the moment-decay window `(1, m_*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStar {
    pub value: f64,
    /// Ratio in the support at which `F(m_*, r) = 0`.
    pub binding_ratio: f64,
    /// `F(m, r) <= tol` held on the verification sample below `m_*`.
    pub verified: bool,
}

/// Smallest root above 1 of `F(·, r)`, when `F` is negative just above 1.
fn decay_root(p: &ModelParams, r: f64, tol: f64) -> Option<f64> {
    let f = |m: f64| moment_bracket(p, m, r);
    let mut prev = 1.0 + M_SCAN_STEP;
    if f(prev) >= 0.0 {
        return None;
    }
    let steps = ((M_STAR_CEILING - 1.0) / M_SCAN_STEP).round() as usize;
    for i in 2..=steps {
        let m = 1.0 + M_SCAN_STEP * i as f64;
        if f(m) >= 0.0 {
            return Some(bisect(f, prev, m, tol));
        }
        prev = m;
    }
    None
}

/// Locates `m_*`: the largest exponent such that `F(m, r) < 0` for all
/// `m ∈ (1, m_*)` and all `r` in the bump support.
///
/// Each sampled ratio contributes its first root above 1; `m_*` is the
/// smallest of these. Returns `None` if some ratio has `F ≥ 0` just above 1 or
/// no ratio changes sign below the search ceiling.
pub fn find_m_star(p: &ModelParams, tol: f64) -> Result<Option<MStar>> {
    p.require_compact()?;
    let mut best: Option<(f64, f64)> = None;
    for r in ratio_samples(p, RATIO_SAMPLES) {
        if moment_bracket(p, 1.0 + M_SCAN_STEP, r) >= 0.0 {
            return Ok(None);
        }
        if let Some(root) = decay_root(p, r, tol) {
            if best.map_or(true, |(m, _)| root < m) {
                best = Some((root, r));
            }
        }
    }
    let Some((value, binding_ratio)) = best else {
        return Ok(None);
    };
    // sampled check of the "for all r" requirement just below the root
    let verified = (1..=50).all(|i| {
        let m = 1.0 + (value - 1.0) * i as f64 / 51.0;
        ratio_samples(p, RATIO_SAMPLES).all(|r| moment_bracket(p, m, r) <= tol)
    });
    Ok(Some(MStar {
        value,
        binding_ratio,
        verified,
    }))
}

/// Locates `m̃`: the smallest exponent such that `F(m, r) > 0` for all
/// `m ∈ (m̃, 1)` and all sampled `r`.
///
/// `None` when `F > 0` on all of `(0, 1)` for every sampled ratio, and also
/// when some ratio has `F ≤ 0` immediately below 1 (no growth window).
pub fn find_m_tilde(p: &ModelParams, tol: f64) -> Result<Option<f64>> {
    p.require_compact()?;
    let mut best: Option<f64> = None;
    let steps = (1.0 / M_SCAN_STEP).round() as usize;
    for r in ratio_samples(p, RATIO_SAMPLES) {
        let f = |m: f64| moment_bracket(p, m, r);
        let mut prev = 1.0 - M_SCAN_STEP;
        if f(prev) <= 0.0 {
            return Ok(None);
        }
        for i in 2..steps {
            let m = 1.0 - M_SCAN_STEP * i as f64;
            if f(m) <= 0.0 {
                let root = bisect(f, m, prev, tol);
                best = Some(best.map_or(root, |b: f64| b.max(root)));
                break;
            }
            prev = m;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offspring {
    /// Individuals produced per predation event, `(1−K)/K'`.
    pub multiplicity: f64,
    /// Density amplitude of the offspring gain term, `(1−K)/K'²`.
    pub amplitude: f64,
}

pub fn offspring_multiplicity(p: &ModelParams) -> Offspring {
    let waste = 1.0 - p.assimilation;
    Offspring {
        multiplicity: waste / p.offspring_scale,
        amplitude: waste / (p.offspring_scale * p.offspring_scale),
    }
}

/// Stationary power-law exponent `γ = −(α+3)/2`.
pub fn power_law_exponent(alpha: f64) -> f64 {
    -(alpha + 3.0) / 2.0
}

/// `G(γ, r)`, which vanishes identically at `γ = −(α+3)/2`.
pub fn powerlaw_residual(p: &ModelParams, gamma: f64, r: f64) -> f64 {
    let a = p.search_exponent;
    let k = p.assimilation;
    let kp = p.offspring_scale;
    (r + k).powf(-a - 2.0 - 2.0 * gamma) + (1.0 - k) * kp.powf(-3.0 - a - 2.0 * gamma)
        - r.powf(-2.0 - 2.0 * gamma - a)
        - 1.0
}

/// `C = max_{r ∈ [B−σ, B+σ]} F(α, r) / (e σ²)` with the default sampling.
pub fn blowup_constant(p: &ModelParams) -> Result<f64> {
    blowup_constant_sampled(p, BLOWUP_SAMPLES)
}

pub fn blowup_constant_sampled(p: &ModelParams, samples: usize) -> Result<f64> {
    p.require_compact()?;
    if samples < 2 {
        return Err(domain("blow-up constant needs at least 2 samples"));
    }
    let max_f = ratio_samples(p, samples)
        .map(|r| moment_bracket(p, p.search_exponent, r))
        .fold(f64::NEG_INFINITY, f64::max);
    let s = p.diet_breadth;
    Ok(max_f / (E * s * s))
}
