//! Observables computed from snapshots: moments, biomass drift, the blow-up
//! envelope, gap/dome structure, the predicted cascade geometry and a
//! stationarity residual.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, ModelError, Result};
use crate::grid::{trapezoid_moment, Distribution, Grid};
use crate::integrator::{IntegrationStatus, Trajectory};
use crate::kernel::{blowup_constant, ModelParams};
use crate::operator::CollisionPlan;

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.01;
/// Normalized residual below which a snapshot is declared stationary.
pub const STEADY_STATE_THRESHOLD: f64 = 1e-4;
pub const ENVELOPE_SLACK: f64 = 0.01;
/// `max_support` threshold relative to the snapshot maximum.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-6;

fn exponent_key(m: f64) -> String {
    format!("{m}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub times: Vec<f64>,
    pub biomass: Vec<f64>,
    pub count: Vec<f64>,
    /// Keyed by the exponent's shortest decimal form ("1.3", "0.5", ...).
    pub extra_moments: BTreeMap<String, Vec<f64>>,
}

impl MomentReport {
    pub fn moment(&self, m: f64) -> Option<&[f64]> {
        self.extra_moments.get(&exponent_key(m)).map(Vec::as_slice)
    }
}

pub fn moment_series(traj: &Trajectory, exponents: &[f64]) -> MomentReport {
    let snaps = &traj.snapshots;
    let mut extra_moments = BTreeMap::new();
    for &m in exponents {
        let series = snaps.iter().map(|d| trapezoid_moment(d, m)).collect();
        extra_moments.insert(exponent_key(m), series);
    }
    MomentReport {
        times: traj.times(),
        biomass: snaps.iter().map(|d| trapezoid_moment(d, 1.0)).collect(),
        count: snaps.iter().map(|d| trapezoid_moment(d, 0.0)).collect(),
        extra_moments,
    }
}

/// `max_t |M(t) − M(0)| / M(0)`.
pub fn biomass_drift(traj: &Trajectory) -> Result<f64> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| domain("empty trajectory"))?;
    let m0 = first.biomass();
    if !(m0 > 0.0) {
        return Err(domain(format!("initial biomass must be > 0, got {m0}")));
    }
    Ok(traj
        .snapshots
        .iter()
        .map(|d| (d.biomass() - m0).abs() / m0)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub constant: f64,
    pub initial_moment: f64,
    /// `bound·(1 + slack) − M_α(t)` per snapshot; `None` once the envelope
    /// denominator is no longer positive.
    pub margins: Vec<Option<f64>>,
    pub expired: Vec<bool>,
    pub passed: bool,
}

impl EnvelopeReport {
    /// Snapshots at which the envelope still carried information.
    pub fn checked(&self) -> usize {
        self.expired.iter().filter(|e| !**e).count()
    }
}

/// Checks `M_α(t) ≤ M_α(0) / (1 − t C M_α(0))` at every snapshot.
pub fn blowup_envelope_check(traj: &Trajectory, p: &ModelParams) -> Result<EnvelopeReport> {
    let c = blowup_constant(p)?;
    let alpha = p.search_exponent;
    let m0 = traj
        .snapshots
        .first()
        .map(|d| trapezoid_moment(d, alpha))
        .ok_or_else(|| domain("empty trajectory"))?;
    let mut margins = Vec::with_capacity(traj.snapshots.len());
    let mut expired = Vec::with_capacity(traj.snapshots.len());
    let mut passed = true;
    for d in &traj.snapshots {
        let denom = 1.0 - d.time() * c * m0;
        if denom <= 0.0 {
            margins.push(None);
            expired.push(true);
            continue;
        }
        let bound = m0 / denom;
        let margin = bound * (1.0 + ENVELOPE_SLACK) - trapezoid_moment(d, alpha);
        passed &= margin >= 0.0;
        margins.push(Some(margin));
        expired.push(false);
    }
    Ok(EnvelopeReport {
        constant: c,
        initial_moment: m0,
        margins,
        expired,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dome {
    pub lo: f64,
    pub hi: f64,
    pub biomass: f64,
    /// Location of the maximum.
    pub peak: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gaps: Vec<[f64; 2]>,
    pub domes: Vec<Dome>,
    pub threshold_used: f64,
    pub scan_range: [f64; 2],
}

impl GapReport {
    /// Upper dome edges, highest first.
    pub fn upper_edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.domes.iter().map(|d| d.hi).collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    /// Ratios of consecutive upper dome edges, highest pair first.
    pub fn edge_ratios(&self) -> Vec<f64> {
        self.upper_edges().windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Scan range that leaves out the offspring deposition band `[0, K' W]`,
/// where newborns pile up far above the dome heights.
pub fn default_scan_range(p: &ModelParams, grid: &Grid) -> [f64; 2] {
    [p.offspring_scale * grid.upper(), grid.upper()]
}

/// Splits the nodes inside `scan_range` into maximal runs above and below
/// `rel_threshold · max f`. Domes span their above-threshold nodes; gaps span
/// the space between domes, so the two alternate and tile the range.
pub fn detect_gaps(d: &Distribution, rel_threshold: f64, scan_range: [f64; 2]) -> Result<GapReport> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(domain(format!("rel_threshold must lie in (0,1), got {rel_threshold}")));
    }
    let g = d.grid();
    let [lo, hi] = scan_range;
    let eps = 1e-9 * g.spacing();
    if !(lo >= -eps && hi <= g.upper() + eps && lo < hi) {
        return Err(domain(format!("scan range [{lo}, {hi}] not inside [0, {}]", g.upper())));
    }
    let f = d.values();
    let nodes: Vec<usize> = (0..g.len())
        .filter(|&n| g.node(n) >= lo - eps && g.node(n) <= hi + eps)
        .collect();
    if nodes.len() < 2 {
        return Err(domain("scan range contains fewer than two grid nodes"));
    }
    let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
    let fmax = nodes.iter().map(|&n| f[n]).fold(0.0, f64::max);
    let threshold = rel_threshold * fmax;

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for n in first..=last {
        let above = fmax > 0.0 && f[n] > threshold;
        match (above, start) {
            (true, None) => start = Some(n),
            (false, Some(s)) => {
                runs.push((s, n - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, last));
    }

    let mut domes = Vec::with_capacity(runs.len());
    let mut gaps = Vec::new();
    let mut cursor = first;
    for &(a, b) in &runs {
        if a > cursor {
            gaps.push([g.node(cursor), g.node(a)]);
        }
        let mut biomass = 0.0;
        for n in a..b {
            biomass += 0.5 * g.spacing() * (g.node(n) * f[n] + g.node(n + 1) * f[n + 1]);
        }
        let top = (a..=b)
            .max_by(|&x, &y| f[x].total_cmp(&f[y]).then(y.cmp(&x)))
            .unwrap_or(a);
        domes.push(Dome {
            lo: g.node(a),
            hi: g.node(b),
            biomass,
            peak: g.node(top),
            height: f[top],
        });
        cursor = b;
    }
    if cursor < last || runs.is_empty() {
        gaps.push([g.node(cursor), g.node(last)]);
    }
    Ok(GapReport {
        gaps,
        domes,
        threshold_used: threshold,
        scan_range: [g.node(first), g.node(last)],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapGeometry {
    pub reference_weight: f64,
    pub preferred_ratio: f64,
    pub diet_breadth: f64,
    /// Highest interval first.
    pub intervals: Vec<[f64; 2]>,
    pub lengths: Vec<f64>,
}

/// The first `depth` intervals `[w̄/((B−σ)^{i+1}(B+σ)^i), w̄/((B−σ)^i(B+σ)^i)]`
/// that can carry a gapped equilibrium anchored at `w̄`.
pub fn predicted_support(reference_weight: f64, b: f64, sigma: f64, depth: usize) -> Result<GapGeometry> {
    if !(reference_weight > 0.0) || !(sigma > 0.0) {
        return Err(ModelError::InvalidParam(format!(
            "need w̄ > 0 and σ > 0, got w̄={reference_weight}, σ={sigma}"
        )));
    }
    if !(b - sigma > 1.0) {
        return Err(ModelError::Regime(format!(
            "B − σ = {} ≤ 1: no gapped equilibrium",
            b - sigma
        )));
    }
    if depth < 1 {
        return Err(ModelError::InvalidParam("depth must be at least 1".into()));
    }
    let lo_r = b - sigma;
    let step = (b - sigma) * (b + sigma);
    let mut intervals = Vec::with_capacity(depth);
    let mut lengths = Vec::with_capacity(depth);
    for i in 0..depth {
        let top = reference_weight / step.powi(i as i32);
        let bottom = top / lo_r;
        intervals.push([bottom, top]);
        lengths.push(reference_weight * (lo_r - 1.0) / (lo_r.powi(i as i32 + 1) * (b + sigma).powi(i as i32)));
    }
    Ok(GapGeometry {
        reference_weight,
        preferred_ratio: b,
        diet_breadth: sigma,
        intervals,
        lengths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMatch {
    pub reference_weight: f64,
    /// Mean relative deviation of dome edges from the predicted edges.
    pub misfit: f64,
    pub geometry: GapGeometry,
}

/// Anchors `w̄` at the upper edge of the highest dome and compares the
/// remaining domes, highest first, with [`predicted_support`].
pub fn match_gaps(report: &GapReport, b: f64, sigma: f64) -> Result<GapMatch> {
    if report.domes.len() < 2 {
        return Err(ModelError::InsufficientStructure(format!(
            "{} dome(s) detected, need at least 2",
            report.domes.len()
        )));
    }
    let mut domes = report.domes.clone();
    domes.sort_by(|x, y| y.hi.total_cmp(&x.hi));
    let w_bar = domes[0].hi;
    let geometry = predicted_support(w_bar, b, sigma, domes.len())?;
    let mut dev = 0.0;
    for (dome, [lo, hi]) in domes.iter().zip(&geometry.intervals) {
        dev += (dome.lo - lo).abs() / lo + (dome.hi - hi).abs() / hi;
    }
    Ok(GapMatch {
        reference_weight: w_bar,
        misfit: dev / (2 * domes.len()) as f64,
        geometry,
    })
}

/// Largest value of `k(w, w') · W` over the grid: the rate scale of one unit
/// of density interacting with the whole range.
pub fn kernel_scale(p: &ModelParams, grid: &Grid) -> Result<f64> {
    let peak = p.preference_fn()?.peak();
    Ok(p.search_volume * grid.upper().powf(p.search_exponent) * peak * grid.upper())
}

/// `max_n |Q^N_n| / (max_n f_n² · kernel_scale)` over nodes `w_n ≥ K' W`.
///
/// Nodes in the offspring band `[0, K' W)` are left out: on coarse grids
/// newborns collect there faster than any predator node can reach them, so
/// the band keeps a large, slowly varying value that would swamp the norm.
pub fn steady_state_residual(p: &ModelParams, d: &Distribution) -> Result<f64> {
    let plan = CollisionPlan::new(p, *d.grid())?;
    steady_state_residual_with(&plan, p, d)
}

pub fn steady_state_residual_with(plan: &CollisionPlan, p: &ModelParams, d: &Distribution) -> Result<f64> {
    let g = d.grid();
    let cut = p.offspring_scale * g.upper() - 1e-9 * g.spacing();
    let first = (0..g.len()).find(|&n| g.node(n) >= cut).unwrap_or(0);
    let fmax = d.values()[first..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if fmax == 0.0 {
        return Ok(0.0);
    }
    let q = plan.apply(d)?;
    let qmax = q.total[first..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(qmax / (fmax * fmax * kernel_scale(p, g)?))
}

/// `max{w_n : f_n > threshold}`, or 0.
pub fn max_support(d: &Distribution, abs_threshold: f64) -> Result<f64> {
    if !(abs_threshold >= 0.0) {
        return Err(domain(format!("threshold must be >= 0, got {abs_threshold}")));
    }
    let g = d.grid();
    Ok(d.values()
        .iter()
        .rposition(|&v| v > abs_threshold)
        .map_or(0.0, |n| g.node(n)))
}

/// Share of the biomass held by nodes with `w_n ≤ cut`, trapezoid-weighted on
/// the full grid. 0 for an empty state.
pub fn biomass_fraction_below(d: &Distribution, cut: f64) -> f64 {
    let total = d.biomass();
    if !(total > 0.0) {
        return 0.0;
    }
    let g = d.grid();
    let f = d.values();
    let below: f64 = (1..g.len())
        .take_while(|&n| g.node(n) <= cut)
        .map(|n| g.weight(n) * g.node(n) * f[n])
        .sum();
    below / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSettings {
    pub exponents: Vec<f64>,
    pub gap_threshold: f64,
    /// `None` selects [`default_scan_range`].
    pub scan_range: Option<[f64; 2]>,
    pub support_threshold: f64,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            exponents: vec![0.5, 1.3],
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            scan_range: None,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomeSet {
    pub time: f64,
    pub domes: Vec<Dome>,
}

/// Everything `report.json` carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub times: Vec<f64>,
    pub biomass: Vec<f64>,
    pub count: Vec<f64>,
    pub moments: BTreeMap<String, Vec<f64>>,
    pub drift: f64,
    /// Envelope fields are `None`/empty for preferences without a compact
    /// support, where the constant is not defined.
    pub blowup_constant: Option<f64>,
    pub blowup_margins: Vec<Option<f64>>,
    pub blowup_envelope_passed: Option<bool>,
    pub gaps: Vec<Vec<[f64; 2]>>,
    pub domes: Vec<DomeSet>,
    pub fitted_reference_weight: Vec<Option<f64>>,
    pub residual_series: Vec<f64>,
    pub residual_threshold: f64,
    pub steady_state: bool,
    pub max_support_series: Vec<f64>,
    pub clipped_biomass_total: f64,
    pub status: IntegrationStatus,
    pub truncated: bool,
}

pub fn run_report(p: &ModelParams, traj: &Trajectory, settings: &DiagnosticsSettings) -> Result<RunReport> {
    let grid = *traj.last().grid();
    let plan = CollisionPlan::new(p, grid)?;
    let moments = moment_series(traj, &settings.exponents);
    let envelope = match blowup_envelope_check(traj, p) {
        Ok(e) => Some(e),
        Err(ModelError::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let scan = settings.scan_range.unwrap_or_else(|| default_scan_range(p, &grid));

    let mut gaps = Vec::new();
    let mut domes = Vec::new();
    let mut fitted = Vec::new();
    let mut residual_series = Vec::new();
    let mut max_support_series = Vec::new();
    for d in &traj.snapshots {
        let rep = detect_gaps(d, settings.gap_threshold, scan)?;
        fitted.push(
            match_gaps(&rep, p.preferred_ratio, p.diet_breadth)
                .ok()
                .map(|m| m.reference_weight),
        );
        gaps.push(rep.gaps);
        domes.push(DomeSet {
            time: d.time(),
            domes: rep.domes,
        });
        residual_series.push(steady_state_residual_with(&plan, p, d)?);
        max_support_series.push(max_support(d, settings.support_threshold * d.max_value().max(0.0))?);
    }
    let drift = if moments.biomass[0] > 0.0 {
        biomass_drift(traj)?
    } else {
        0.0
    };
    let truncated = !traj.status.is_complete();
    Ok(RunReport {
        times: moments.times,
        biomass: moments.biomass,
        count: moments.count,
        moments: moments.extra_moments,
        drift,
        blowup_constant: envelope.as_ref().map(|e| e.constant),
        blowup_envelope_passed: envelope.as_ref().map(|e| e.passed),
        blowup_margins: envelope.map(|e| e.margins).unwrap_or_default(),
        gaps,
        domes,
        fitted_reference_weight: fitted,
        steady_state: !truncated && residual_series.last().is_some_and(|r| *r < STEADY_STATE_THRESHOLD),
        residual_series,
        residual_threshold: STEADY_STATE_THRESHOLD,
        max_support_series,
        clipped_biomass_total: traj.clipped_biomass_total(),
        status: traj.status,
        truncated,
    })
}
