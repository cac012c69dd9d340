//! Independent evaluations used to cross-check the operator: the sharp
//! feeding limit `s = δ_B`, moment rates in ratio coordinates, and
//! grid-refined operator values.

use crate::error::{domain, ModelError, Result};
use crate::grid::{Distribution, Grid};
use crate::kernel::{moment_bracket, ModelParams};
use crate::operator::apply_q;
use crate::preference::{PreferenceKind, Support};

/// The model with every predator eating prey exactly `B` times smaller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracModel {
    params: ModelParams,
}

impl DiracModel {
    /// Takes `K, K', A, α, B` from `p`; `σ` and the preference kind are
    /// ignored.
    pub fn new(p: &ModelParams) -> Result<Self> {
        let params = p.with_preference(PreferenceKind::Dirac);
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

/// Right-hand side of the sharp-preference equation at mass `w`.
pub fn dirac_rhs(m: &DiracModel, d: &Distribution, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(domain(format!("dirac_rhs needs w > 0, got {w}")));
    }
    let p = &m.params;
    let (a, b, k, kp) = (
        p.search_exponent,
        p.preferred_ratio,
        p.assimilation,
        p.offspring_scale,
    );
    let f = |x: f64| d.interp(x);
    let ba = b.powf(a);
    let wa1 = w.powf(a + 1.0);
    let growth = ba * wa1 / (k + b).powf(a + 2.0) * f(w / (b + k)) * f(b * w / (b + k));
    let offspring = ba * (1.0 - k) * wa1 / kp.powf(a + 3.0) * f(w / kp) * f(b * w / kp);
    let as_predator = wa1 / (b * b) * f(w) * f(w / b);
    let as_prey = ba * wa1 * f(w) * f(b * w);
    Ok(p.search_volume * (growth + offspring - as_predator - as_prey))
}

/// `∫ s(r) dr` over the preference's summation window, by a 4000-cell
/// trapezoid rule.
pub fn preference_mass(p: &ModelParams) -> Result<f64> {
    let pref = p.preference_fn()?;
    let (lo, hi) = match pref.summation_window() {
        Support::Bounded { lo, hi } => (lo, hi),
        Support::Unbounded => return Err(domain("unbounded summation window")),
    };
    let cells = 4000;
    let dr = (hi - lo) / cells as f64;
    let mut acc = 0.5 * (pref.value(lo) + pref.value(hi));
    for i in 1..cells {
        acc += pref.value(lo + dr * i as f64);
    }
    Ok(acc * dr)
}

/// Moment rate `d/dt ∫ w^m f` from the ratio form
/// `∬ F(m,r) A w^(α+m+1) r^(−m−2) s(r) f̂(w/r) f(w) dr dw`,
/// trapezoid in `w` on the grid and in `r` on `N` equal cells of the support.
pub fn moment_rate_ratio_form(p: &ModelParams, d: &Distribution, m: f64) -> Result<f64> {
    if p.preference != PreferenceKind::CompactBump {
        return Err(ModelError::Unsupported(format!(
            "ratio-form moment rate needs the compact bump, got {}",
            p.preference
        )));
    }
    let pref = p.preference_fn()?;
    let g = d.grid();
    let f = d.values();
    let (lo, hi) = (p.preferred_ratio - p.diet_breadth, p.preferred_ratio + p.diet_breadth);
    let cells = g.cells();
    let dr = (hi - lo) / cells as f64;
    let ratios: Vec<(f64, f64)> = (0..=cells)
        .map(|i| {
            let r = if i == cells { hi } else { lo + dr * i as f64 };
            let wt = if i == 0 || i == cells { 0.5 * dr } else { dr };
            (r, wt * moment_bracket(p, m, r) * r.powf(-m - 2.0) * pref.value(r))
        })
        .filter(|&(_, c)| c != 0.0)
        .collect();
    let expo = p.search_exponent + m + 1.0;
    let mut total = 0.0;
    for n in 1..g.len() {
        if f[n] == 0.0 {
            continue;
        }
        let w = g.node(n);
        let inner: f64 = ratios.iter().map(|&(r, c)| c * d.interp(w / r)).sum();
        total += g.weight(n) * w.powf(expo) * f[n] * inner;
    }
    Ok(p.search_volume * total)
}

/// `Q^N` evaluated on a grid `refinement` times finer, read back at the
/// coarse nodes.
pub fn refined_reference(p: &ModelParams, d: &Distribution, refinement: usize) -> Result<Vec<f64>> {
    if refinement == 0 {
        return Err(ModelError::InvalidParam("refinement must be >= 1".into()));
    }
    let g = d.grid();
    let fine = Grid::uniform(g.upper(), g.cells() * refinement)?;
    let q = apply_q(p, &d.resample(fine))?;
    Ok(q.total.into_iter().step_by(refinement).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_uniform_grid;
    use crate::operator::weak_form_rhs;

    fn fig4() -> ModelParams {
        ModelParams::new(PreferenceKind::CompactBump, 0.9, 1.5, 0.3, 0.1, 0.01).unwrap()
    }

    #[test]
    fn zero_state_everywhere() {
        let g = make_uniform_grid(10.0, 100).unwrap();
        let z = Distribution::zeros(g);
        let dm = DiracModel::new(&fig4()).unwrap();
        assert_eq!(dirac_rhs(&dm, &z, 3.0).unwrap(), 0.0);
        assert_eq!(moment_rate_ratio_form(&fig4(), &z, 1.3).unwrap(), 0.0);
        assert!(refined_reference(&fig4(), &z, 2).unwrap().iter().all(|v| *v == 0.0));
        assert!(dirac_rhs(&dm, &z, 0.0).is_err());
    }

    #[test]
    fn dirac_support_kinematics() {
        // support [4, 5]: ratio 5/4 < B, 1.5·w and w/K' fall beyond W = 7
        let g = make_uniform_grid(7.0, 700).unwrap();
        let d = Distribution::from_fn(g, |w| if (4.0..=5.0).contains(&w) { 1.0 } else { 0.0 }).unwrap();
        let dm = DiracModel::new(&fig4()).unwrap();
        for w in [4.0, 4.5, 5.0] {
            assert_eq!(dirac_rhs(&dm, &d, w).unwrap(), 0.0);
        }
    }

    #[test]
    fn biomass_rate_vanishes_in_ratio_form() {
        let g = make_uniform_grid(10.0, 200).unwrap();
        let d = crate::grid::linear_initial_condition(g, 10.0, 0.1).unwrap();
        let v = moment_rate_ratio_form(&fig4(), &d, 1.0).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn ratio_form_matches_weak_form_sign() {
        let g = make_uniform_grid(10.0, 200).unwrap();
        let d = crate::grid::linear_initial_condition(g, 10.0, 0.1).unwrap();
        let p = fig4();
        let a = moment_rate_ratio_form(&p, &d, 1.3).unwrap();
        let b = weak_form_rhs(&p, &d, |w| w.powf(1.3)).unwrap();
        assert!(a < 0.0 && b < 0.0, "{a} {b}");
        assert!((a - b).abs() < 0.05 * b.abs(), "{a} {b}");
    }

    #[test]
    fn gaussian_is_rejected_by_ratio_form() {
        let g = make_uniform_grid(10.0, 50).unwrap();
        let p = fig4().with_preference(PreferenceKind::Gaussian);
        let z = Distribution::zeros(g);
        assert!(matches!(
            moment_rate_ratio_form(&p, &z, 1.3),
            Err(ModelError::Unsupported(_))
        ));
    }

    #[test]
    fn bump_mass_scales_inversely_with_breadth() {
        let z1 = preference_mass(&fig4()).unwrap();
        let mut p = fig4();
        p.diet_breadth = 0.15;
        let z2 = preference_mass(&p).unwrap();
        assert!((z2 / z1 - 2.0).abs() < 1e-6);
        let gauss = preference_mass(&fig4().with_preference(PreferenceKind::Gaussian)).unwrap();
        // window clipped at r = 0, five widths below B
        assert!((gauss - 1.0).abs() < 1e-6, "{gauss}");
    }
}
