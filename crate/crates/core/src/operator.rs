//! The semi-discrete predation operator `Q^N` and its weak-form companions.
//!
//! `Q = G₁ + G₂ − L₁ − L₂`: predator growth gain, offspring gain, loss of the
//! predator from its old size, loss of the eaten prey. All integrals are
//! trapezoid sums on the uniform grid; off-grid values of `f` come from linear
//! interpolation and vanish beyond `W`.
//!
//! [`CollisionPlan`] precomputes every kernel value and interpolation stencil
//! for a fixed grid so that repeated evaluations are pure multiply-adds.
//! [`apply_q_direct`] evaluates the displayed sums literally and serves as the
//! reference the plan is checked against.

use crate::error::{ModelError, Result};
use crate::grid::{Distribution, Grid};
use crate::kernel::{offspring_multiplicity, Kernel, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct QComponents {
    pub gain_growth: Vec<f64>,
    pub gain_offspring: Vec<f64>,
    pub loss_as_predator: Vec<f64>,
    pub loss_as_prey: Vec<f64>,
    pub total: Vec<f64>,
}

impl QComponents {
    fn zeros(len: usize) -> Self {
        Self {
            gain_growth: vec![0.0; len],
            gain_offspring: vec![0.0; len],
            loss_as_predator: vec![0.0; len],
            loss_as_prey: vec![0.0; len],
            total: vec![0.0; len],
        }
    }

    fn finish_total(&mut self) {
        for n in 0..self.total.len() {
            self.total[n] = self.gain_growth[n] + self.gain_offspring[n]
                - self.loss_as_predator[n]
                - self.loss_as_prey[n];
        }
    }
}

/// Compressed rows of `(column, coefficient)` pairs.
#[derive(Debug, Clone, Default)]
struct SparseRows {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    coefs: Vec<f64>,
}

impl SparseRows {
    fn with_rows(rows: usize) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        offsets.push(0);
        Self {
            offsets,
            cols: Vec::new(),
            coefs: Vec::new(),
        }
    }

    fn push(&mut self, col: usize, coef: f64) {
        if coef != 0.0 {
            self.cols.push(col as u32);
            self.coefs.push(coef);
        }
    }

    fn end_row(&mut self) {
        self.offsets.push(self.cols.len());
    }

    #[inline]
    fn dot(&self, row: usize, f: &[f64]) -> f64 {
        let (a, b) = (self.offsets[row], self.offsets[row + 1]);
        self.cols[a..b]
            .iter()
            .zip(&self.coefs[a..b])
            .map(|(&c, &k)| k * f[c as usize])
            .sum()
    }

    fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// One growth-gain stencil entry: `f_prey · (lo·f_cell + hi·f_{cell+1})`.
#[derive(Debug, Clone, Copy)]
struct GrowthEntry {
    prey: u32,
    cell: u32,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, Copy)]
struct OffspringSource {
    cell: usize,
    lo: f64,
    hi: f64,
}

/// Precomputed stencils of `Q^N` on one grid.
#[derive(Debug, Clone)]
pub struct CollisionPlan {
    grid: Grid,
    growth_offsets: Vec<usize>,
    growth: Vec<GrowthEntry>,
    offspring_source: Vec<Option<OffspringSource>>,
    offspring: SparseRows,
    loss_pred: SparseRows,
    loss_prey: SparseRows,
}

impl CollisionPlan {
    pub fn new(p: &ModelParams, grid: Grid) -> Result<Self> {
        let kernel = Kernel::new(p)?;
        let k = p.assimilation;
        let kp = p.offspring_scale;
        let amplitude = offspring_multiplicity(p).amplitude;
        let len = grid.len();

        let mut growth_offsets = Vec::with_capacity(len + 1);
        growth_offsets.push(0);
        let mut growth = Vec::new();
        let mut offspring_source = Vec::with_capacity(len);
        let mut offspring = SparseRows::with_rows(len);
        let mut loss_pred = SparseRows::with_rows(len);
        let mut loss_prey = SparseRows::with_rows(len);

        for n in 0..len {
            let wn = grid.node(n);

            // G1: pairs (l−1, l) with w_l < w_n/K; the partial last cell is dropped
            let cutoff = wn / k;
            let last = (1..len).take_while(|&l| grid.node(l) < cutoff).last();
            if let Some(last) = last {
                let h = grid.spacing();
                for j in 0..=last {
                    let weight = if j == 0 || j == last { 0.5 * h } else { h };
                    let wj = grid.node(j);
                    let pred = wn - k * wj;
                    let kv = kernel.eval(pred, wj);
                    if kv == 0.0 {
                        continue;
                    }
                    if let Some((cell, t)) = grid.locate(pred) {
                        let c = weight * kv;
                        growth.push(GrowthEntry {
                            prey: j as u32,
                            cell: cell as u32,
                            lo: c * (1.0 - t),
                            hi: c * t,
                        });
                    }
                }
            }
            growth_offsets.push(growth.len());

            // G2: offspring of mass w_n come from prey of mass w_n/K'
            let prey = wn / kp;
            let source = grid.locate(prey).map(|(cell, t)| OffspringSource {
                cell,
                lo: 1.0 - t,
                hi: t,
            });
            if source.is_some() {
                for l in 0..len {
                    offspring.push(l, amplitude * grid.weight(l) * kernel.eval(grid.node(l), prey));
                }
            }
            offspring_source.push(source);
            offspring.end_row();

            // L1, L2
            for l in 0..len {
                let wl = grid.node(l);
                loss_pred.push(l, grid.weight(l) * kernel.eval(wn, wl));
                loss_prey.push(l, grid.weight(l) * kernel.eval(wl, wn));
            }
            loss_pred.end_row();
            loss_prey.end_row();
        }

        Ok(Self {
            grid,
            growth_offsets,
            growth,
            offspring_source,
            offspring,
            loss_pred,
            loss_prey,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of stored stencil coefficients.
    pub fn nnz(&self) -> usize {
        self.growth.len() + self.offspring.nnz() + self.loss_pred.nnz() + self.loss_prey.nnz()
    }

    #[inline]
    fn growth_at(&self, n: usize, f: &[f64]) -> f64 {
        self.growth[self.growth_offsets[n]..self.growth_offsets[n + 1]]
            .iter()
            .map(|e| {
                let c = e.cell as usize;
                f[e.prey as usize] * (e.lo * f[c] + e.hi * f[c + 1])
            })
            .sum()
    }

    #[inline]
    fn offspring_at(&self, n: usize, f: &[f64]) -> f64 {
        match self.offspring_source[n] {
            None => 0.0,
            Some(src) => {
                let fx = if src.hi == 0.0 {
                    f[src.cell]
                } else {
                    src.lo * f[src.cell] + src.hi * f[src.cell + 1]
                };
                if fx == 0.0 {
                    0.0
                } else {
                    fx * self.offspring.dot(n, f)
                }
            }
        }
    }

    fn check(&self, d: &Distribution) -> Result<()> {
        if *d.grid() != self.grid {
            return Err(ModelError::GridMismatch(format!(
                "plan grid (W={}, N={}) vs distribution grid (W={}, N={})",
                self.grid.upper(),
                self.grid.cells(),
                d.grid().upper(),
                d.grid().cells()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, d: &Distribution) -> Result<QComponents> {
        self.check(d)?;
        let f = d.values();
        let mut q = QComponents::zeros(f.len());
        for n in 0..f.len() {
            q.gain_growth[n] = self.growth_at(n, f);
            q.gain_offspring[n] = self.offspring_at(n, f);
            if f[n] != 0.0 {
                q.loss_as_predator[n] = f[n] * self.loss_pred.dot(n, f);
                q.loss_as_prey[n] = f[n] * self.loss_prey.dot(n, f);
            }
        }
        q.finish_total();
        Ok(q)
    }

    /// Writes `Q^N(f, f)` into `out` (the integrator's right-hand side).
    pub fn rate_into(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.grid.len());
        for n in 0..f.len() {
            let gain = self.growth_at(n, f) + self.offspring_at(n, f);
            out[n] = if f[n] != 0.0 {
                gain - f[n] * self.loss_pred.dot(n, f) - f[n] * self.loss_prey.dot(n, f)
            } else {
                gain - 0.0 - 0.0
            };
        }
    }
}

/// Evaluates `Q^N(f, f)` and its four parts.
pub fn apply_q(p: &ModelParams, d: &Distribution) -> Result<QComponents> {
    CollisionPlan::new(p, *d.grid())?.apply(d)
}

/// Literal evaluation of the discrete sums, pair by pair, with `f̂` computed
/// on the fly. Slow; kept as the reference for [`CollisionPlan`].
pub fn apply_q_direct(p: &ModelParams, d: &Distribution) -> Result<QComponents> {
    let kernel = Kernel::new(p)?;
    let g = *d.grid();
    let f = d.values();
    let len = g.len();
    let half_h = 0.5 * g.spacing();
    let k = p.assimilation;
    let kp = p.offspring_scale;
    let amplitude = offspring_multiplicity(p).amplitude;
    let mut q = QComponents::zeros(len);

    for n in 0..len {
        let wn = g.node(n);

        let growth_term = |j: usize| {
            let wj = g.node(j);
            let pred = wn - k * wj;
            kernel.eval(pred, wj) * d.interp(pred) * f[j]
        };
        let mut acc = 0.0;
        for l in 1..len {
            if g.node(l) >= wn / k {
                break;
            }
            acc += growth_term(l - 1) + growth_term(l);
        }
        q.gain_growth[n] = half_h * acc;

        let prey = wn / kp;
        let fx = d.interp(prey);
        if fx != 0.0 {
            let mut acc = 0.0;
            for l in 1..len {
                acc += kernel.eval(g.node(l - 1), prey) * f[l - 1] + kernel.eval(g.node(l), prey) * f[l];
            }
            q.gain_offspring[n] = half_h * amplitude * fx * acc;
        }

        let mut pred_acc = 0.0;
        let mut prey_acc = 0.0;
        for l in 1..len {
            let (a, b) = (g.node(l - 1), g.node(l));
            pred_acc += kernel.eval(wn, a) * f[l - 1] + kernel.eval(wn, b) * f[l];
            prey_acc += kernel.eval(a, wn) * f[l - 1] + kernel.eval(b, wn) * f[l];
        }
        q.loss_as_predator[n] = half_h * f[n] * pred_acc;
        q.loss_as_prey[n] = half_h * f[n] * prey_acc;
    }
    q.finish_total();
    Ok(q)
}

/// Double trapezoid of the weak form
/// `∬ [φ(w+Kw') + (1−K)/K' φ(K'w') − φ(w) − φ(w')] k(w,w') f(w) f(w')`
/// with `φ` evaluated exactly at the shifted arguments.
pub fn weak_form_rhs(p: &ModelParams, d: &Distribution, phi: impl Fn(f64) -> f64) -> Result<f64> {
    let kernel = Kernel::new(p)?;
    let g = d.grid();
    let f = d.values();
    let k = p.assimilation;
    let kp = p.offspring_scale;
    let mult = offspring_multiplicity(p).multiplicity;
    let phi_nodes: Vec<f64> = g.nodes().map(&phi).collect();
    let phi_offspring: Vec<f64> = g.nodes().map(|w| phi(kp * w)).collect();
    let mut total = 0.0;
    for n in 0..g.len() {
        if f[n] == 0.0 {
            continue;
        }
        let wn = g.node(n);
        let mut row = 0.0;
        for l in 0..g.len() {
            if f[l] == 0.0 {
                continue;
            }
            let kv = kernel.eval(wn, g.node(l));
            if kv == 0.0 {
                continue;
            }
            let bracket =
                phi(wn + k * g.node(l)) + mult * phi_offspring[l] - phi_nodes[n] - phi_nodes[l];
            row += g.weight(l) * bracket * kv * f[l];
        }
        total += g.weight(n) * f[n] * row;
    }
    Ok(total)
}

/// Biomass rate carried past `W` by predators whose post-feeding mass
/// `w + K w'` exceeds the grid.
pub fn boundary_biomass_flux(p: &ModelParams, d: &Distribution) -> Result<f64> {
    let kernel = Kernel::new(p)?;
    let g = d.grid();
    let f = d.values();
    let k = p.assimilation;
    let upper = g.upper();
    let mut total = 0.0;
    for n in 0..g.len() {
        if f[n] == 0.0 {
            continue;
        }
        let wn = g.node(n);
        let mut row = 0.0;
        for l in 0..g.len() {
            let grown = wn + k * g.node(l);
            if grown <= upper || f[l] == 0.0 {
                continue;
            }
            row += g.weight(l) * grown * kernel.eval(wn, g.node(l)) * f[l];
        }
        total += g.weight(n) * f[n] * row;
    }
    Ok(total.max(0.0))
}

/// `Σ c_n w_n^m total_n`: the moment rate implied by a discrete operator value.
pub fn discrete_moment_rate(grid: &Grid, rate: &[f64], m: f64) -> f64 {
    let start = if m > 0.0 { 1 } else { 0 };
    (start..grid.len())
        .map(|n| grid.weight(n) * grid.node(n).powf(m) * rate[n])
        .sum()
}
