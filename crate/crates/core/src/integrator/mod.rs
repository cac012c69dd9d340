//! Adaptive time stepping of `df/dt = Q^N(f, f)`.
//!
//! The loop is a plain accept/reject controller around an embedded (4,5)
//! pair. Snapshot times are hit exactly by truncating the step that would
//! cross them.

mod negativity;
mod scheme;

pub use negativity::{negativity_policy, NegativityMode, NegativityRecord};
pub use scheme::{
    EmbeddedPair, ExplicitPair, RateFunction, SchemeFactory, SchemeRegistry, StepEstimate,
    StepFailure, Tableau, Tolerance,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::grid::{Distribution, Grid};
use crate::kernel::ModelParams;
use crate::operator::CollisionPlan;

const MAX_GROWTH: f64 = 5.0;
const MAX_SHRINK: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub safety_factor: f64,
    pub max_steps: usize,
    /// Registered name of the embedded pair.
    pub method: String,
    pub negativity: NegativityMode,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 0.5,
            safety_factor: 0.9,
            max_steps: 500_000,
            method: "dopri5".to_string(),
            negativity: NegativityMode::Clip,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(domain("rel_tol and abs_tol must be > 0"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(domain("step sizes must satisfy 0 < h_min <= h_init <= h_max"));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor < 1.0) {
            return Err(domain("safety_factor must lie in (0,1)"));
        }
        if self.max_steps == 0 {
            return Err(domain("max_steps must be positive"));
        }
        SchemeRegistry::builtin().build(&self.method)?;
        Ok(())
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance {
            rel: self.rel_tol,
            abs: self.abs_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    /// Scaled error estimate; `None` for a non-finite stage.
    pub error: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegrationStatus {
    Completed,
    /// Step budget exhausted at time `t`.
    MaxStepsExceeded { t: f64 },
    /// Error control failed at `h_min`: stiffness or finite-time blow-up.
    StepSizeUnderflow { t: f64 },
}

impl IntegrationStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, IntegrationStatus::Completed)
    }
}

/// Result of integrating a generic state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step_log: Vec<StepRecord>,
    /// One record per snapshot, covering the steps since the previous one.
    pub negativity_log: Vec<NegativityRecord>,
    pub status: IntegrationStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Distribution>,
    pub step_log: Vec<StepRecord>,
    pub negativity_log: Vec<NegativityRecord>,
    pub status: IntegrationStatus,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Distribution::time).collect()
    }

    pub fn last(&self) -> &Distribution {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    pub fn clipped_biomass_total(&self) -> f64 {
        self.negativity_log.iter().map(|r| r.clipped_biomass).sum()
    }

    pub fn accepted_steps(&self) -> usize {
        self.step_log.iter().filter(|s| s.accepted).count()
    }

    pub fn rejected_steps(&self) -> usize {
        self.step_log.iter().filter(|s| !s.accepted).count()
    }
}

/// One embedded step from `state`; returns the higher-order solution and the
/// scaled error norm.
pub fn step_embedded(
    pair: &dyn EmbeddedPair,
    rhs: &dyn RateFunction,
    state: &[f64],
    h: f64,
    tol: Tolerance,
) -> std::result::Result<(Vec<f64>, f64), StepFailure> {
    let mut rate0 = vec![0.0; state.len()];
    rhs.rate(state, &mut rate0);
    if rate0.iter().any(|v| !v.is_finite()) {
        return Err(StepFailure::NonFinite);
    }
    let est = pair.step(rhs, state, &rate0, h, tol)?;
    Ok((est.state, est.error))
}

fn snapshot_schedule(t_end: f64, requested: &[f64]) -> Result<Vec<f64>> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(domain(format!("t_end must be >= 0, got {t_end}")));
    }
    let mut times = vec![0.0];
    for &t in requested {
        if !(t >= 0.0 && t <= t_end) {
            return Err(domain(format!("snapshot time {t} outside [0, {t_end}]")));
        }
        times.push(t);
    }
    times.push(t_end);
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    Ok(times)
}

/// Integrates `dy/dt = rhs(y)` from `t = 0`, calling `post_accept` on every
/// accepted state (the hook may modify it and returns what it recorded).
pub fn integrate_system(
    rhs: &dyn RateFunction,
    y0: &[f64],
    t_end: f64,
    control: &StepControl,
    snapshot_times: &[f64],
    post_accept: &mut dyn FnMut(&mut [f64]) -> NegativityRecord,
) -> Result<SystemTrajectory> {
    control.validate()?;
    let schedule = snapshot_schedule(t_end, snapshot_times)?;
    let pair = SchemeRegistry::builtin().build(&control.method)?;
    let tol = control.tolerance();

    let mut y = y0.to_vec();
    let mut rate = vec![0.0; y.len()];
    rhs.rate(&y, &mut rate);

    let mut out = SystemTrajectory {
        times: vec![0.0],
        states: vec![y.clone()],
        step_log: Vec::new(),
        negativity_log: vec![NegativityRecord::default()],
        status: IntegrationStatus::Completed,
    };
    let mut pending = NegativityRecord::default();
    let mut t = 0.0;
    let mut h = control.h_init;
    let mut attempts = 0usize;

    for &target in schedule.iter().skip(1) {
        while t < target {
            if attempts >= control.max_steps {
                out.status = IntegrationStatus::MaxStepsExceeded { t };
                return Ok(out);
            }
            attempts += 1;
            let remaining = target - t;
            let hits = h >= remaining;
            let h_try = if hits { remaining } else { h };

            match pair.step(rhs, &y, &rate, h_try, tol) {
                Ok(est) if est.error <= 1.0 => {
                    out.step_log.push(StepRecord {
                        t,
                        h: h_try,
                        error: Some(est.error),
                        accepted: true,
                    });
                    y = est.state;
                    t = if hits { target } else { t + h_try };
                    let rec = post_accept(&mut y);
                    let modified = rec.clipped_nodes > 0;
                    pending.merge(&rec);
                    match est.end_rate {
                        Some(r) if !modified => rate = r,
                        _ => rhs.rate(&y, &mut rate),
                    }
                    let factor = if est.error == 0.0 {
                        MAX_GROWTH
                    } else {
                        (control.safety_factor * est.error.powf(-0.2)).clamp(MAX_SHRINK, MAX_GROWTH)
                    };
                    let proposed = h_try * factor;
                    h = if hits { proposed.max(h) } else { proposed };
                    h = h.clamp(control.h_min, control.h_max);
                }
                Ok(est) => {
                    out.step_log.push(StepRecord {
                        t,
                        h: h_try,
                        error: Some(est.error),
                        accepted: false,
                    });
                    if h_try <= control.h_min {
                        out.status = IntegrationStatus::StepSizeUnderflow { t };
                        return Ok(out);
                    }
                    let factor =
                        (control.safety_factor * est.error.powf(-0.2)).clamp(MAX_SHRINK, 1.0);
                    h = (h_try * factor).max(control.h_min);
                }
                Err(StepFailure::NonFinite) => {
                    out.step_log.push(StepRecord {
                        t,
                        h: h_try,
                        error: None,
                        accepted: false,
                    });
                    if h_try <= control.h_min {
                        out.status = IntegrationStatus::StepSizeUnderflow { t };
                        return Ok(out);
                    }
                    h = (0.5 * h_try).max(control.h_min);
                }
            }
        }
        out.times.push(t);
        out.states.push(y.clone());
        out.negativity_log.push(std::mem::take(&mut pending));
    }
    Ok(out)
}

/// Integrates the size-spectrum model from `d0` to `t_end`.
pub fn integrate(
    p: &ModelParams,
    d0: &Distribution,
    t_end: f64,
    control: &StepControl,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let grid = *d0.grid();
    let plan = CollisionPlan::new(p, grid)?;
    integrate_with_plan(&plan, d0, t_end, control, snapshot_times)
}

pub fn integrate_with_plan(
    plan: &CollisionPlan,
    d0: &Distribution,
    t_end: f64,
    control: &StepControl,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let grid: Grid = *plan.grid();
    if *d0.grid() != grid {
        return Err(crate::error::ModelError::GridMismatch(
            "initial state and plan grids differ".into(),
        ));
    }
    let mode = control.negativity;
    let mut hook = |y: &mut [f64]| negativity::apply_in_place(&grid, y, mode);
    let sys = integrate_system(plan, d0.values(), t_end, control, snapshot_times, &mut hook)?;
    let snapshots = sys
        .times
        .iter()
        .zip(sys.states)
        .map(|(&t, v)| Distribution::new(grid, v, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        snapshots,
        step_log: sys.step_log,
        negativity_log: sys.negativity_log,
        status: sys.status,
    })
}
