//! Explicit embedded Runge–Kutta pairs of orders (4, 5).

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{ModelError, Result};

/// Autonomous right-hand side `dy/dt = rate(y)`.
pub trait RateFunction {
    fn rate(&self, y: &[f64], out: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64])> RateFunction for F {
    fn rate(&self, y: &[f64], out: &mut [f64]) {
        self(y, out)
    }
}

impl RateFunction for crate::operator::CollisionPlan {
    fn rate(&self, y: &[f64], out: &mut [f64]) {
        self.rate_into(y, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFailure {
    /// A stage produced NaN or ∞; the caller should shrink the step.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    /// Higher-order solution.
    pub state: Vec<f64>,
    /// Scaled max-norm of the embedded error; accept when ≤ 1.
    pub error: f64,
    /// Rate at `state` when the last stage already evaluated it.
    pub end_rate: Option<Vec<f64>>,
}

pub trait EmbeddedPair: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// (embedded order, propagated order).
    fn orders(&self) -> (u32, u32);

    /// One step of size `h` from `y`, whose rate `rate0` is already known.
    fn step(
        &self,
        rhs: &dyn RateFunction,
        y: &[f64],
        rate0: &[f64],
        h: f64,
        tol: Tolerance,
    ) -> std::result::Result<StepEstimate, StepFailure>;
}

/// Butcher tableau of an explicit embedded pair. `a` is strictly lower
/// triangular, row `i` holding the coefficients of stages `0..i`.
#[derive(Debug, Clone)]
pub struct Tableau {
    pub name: &'static str,
    pub a: Vec<Vec<f64>>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    /// Last stage is evaluated at the propagated solution.
    pub fsal: bool,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.high.len()
    }

    pub fn dormand_prince() -> Self {
        Self {
            name: "dopri5",
            a: vec![
                vec![],
                vec![1.0 / 5.0],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
                vec![19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
                vec![
                    9017.0 / 3168.0,
                    -355.0 / 33.0,
                    46732.0 / 5247.0,
                    49.0 / 176.0,
                    -5103.0 / 18656.0,
                ],
                vec![
                    35.0 / 384.0,
                    0.0,
                    500.0 / 1113.0,
                    125.0 / 192.0,
                    -2187.0 / 6784.0,
                    11.0 / 84.0,
                ],
            ],
            high: vec![
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
                0.0,
            ],
            low: vec![
                5179.0 / 57600.0,
                0.0,
                7571.0 / 16695.0,
                393.0 / 640.0,
                -92097.0 / 339200.0,
                187.0 / 2100.0,
                1.0 / 40.0,
            ],
            fsal: true,
        }
    }

    pub fn cash_karp() -> Self {
        Self {
            name: "cash-karp",
            a: vec![
                vec![],
                vec![1.0 / 5.0],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0],
                vec![-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0],
                vec![
                    1631.0 / 55296.0,
                    175.0 / 512.0,
                    575.0 / 13824.0,
                    44275.0 / 110592.0,
                    253.0 / 4096.0,
                ],
            ],
            high: vec![
                37.0 / 378.0,
                0.0,
                250.0 / 621.0,
                125.0 / 594.0,
                0.0,
                512.0 / 1771.0,
            ],
            low: vec![
                2825.0 / 27648.0,
                0.0,
                18575.0 / 48384.0,
                13525.0 / 55296.0,
                277.0 / 14336.0,
                1.0 / 4.0,
            ],
            fsal: false,
        }
    }

    pub fn fehlberg() -> Self {
        Self {
            name: "rkf45",
            a: vec![
                vec![],
                vec![1.0 / 4.0],
                vec![3.0 / 32.0, 9.0 / 32.0],
                vec![1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
                vec![439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
                vec![-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
            ],
            high: vec![
                16.0 / 135.0,
                0.0,
                6656.0 / 12825.0,
                28561.0 / 56430.0,
                -9.0 / 50.0,
                2.0 / 55.0,
            ],
            low: vec![
                25.0 / 216.0,
                0.0,
                1408.0 / 2565.0,
                2197.0 / 4104.0,
                -1.0 / 5.0,
                0.0,
            ],
            fsal: false,
        }
    }
}

/// Generic explicit pair driven by a [`Tableau`].
#[derive(Debug, Clone)]
pub struct ExplicitPair {
    tableau: Tableau,
}

impl ExplicitPair {
    pub fn new(tableau: Tableau) -> Self {
        Self { tableau }
    }

    pub fn tableau(&self) -> &Tableau {
        &self.tableau
    }
}

impl EmbeddedPair for ExplicitPair {
    fn name(&self) -> &'static str {
        self.tableau.name
    }

    fn orders(&self) -> (u32, u32) {
        (4, 5)
    }

    fn step(
        &self,
        rhs: &dyn RateFunction,
        y: &[f64],
        rate0: &[f64],
        h: f64,
        tol: Tolerance,
    ) -> std::result::Result<StepEstimate, StepFailure> {
        let tab = &self.tableau;
        let dim = y.len();
        let stages = tab.stages();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(stages);
        k.push(rate0.to_vec());
        let mut tmp = vec![0.0; dim];
        for row in tab.a.iter().skip(1) {
            for (i, t) in tmp.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &a) in row.iter().enumerate() {
                    if a != 0.0 {
                        acc += a * k[j][i];
                    }
                }
                *t = y[i] + h * acc;
            }
            let mut out = vec![0.0; dim];
            rhs.rate(&tmp, &mut out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(StepFailure::NonFinite);
            }
            k.push(out);
        }

        let mut state = vec![0.0; dim];
        let mut error: f64 = 0.0;
        for i in 0..dim {
            let mut hi = 0.0;
            let mut diff = 0.0;
            for s in 0..stages {
                let ks = k[s][i];
                hi += tab.high[s] * ks;
                diff += (tab.high[s] - tab.low[s]) * ks;
            }
            let yn = y[i] + h * hi;
            if !yn.is_finite() {
                return Err(StepFailure::NonFinite);
            }
            state[i] = yn;
            let scale = tol.abs + tol.rel * y[i].abs().max(yn.abs());
            error = error.max((h * diff).abs() / scale);
        }
        if error.is_nan() {
            return Err(StepFailure::NonFinite);
        }
        let end_rate = if tab.fsal { k.pop() } else { None };
        Ok(StepEstimate {
            state,
            error,
            end_rate,
        })
    }
}

pub type SchemeFactory = fn() -> Box<dyn EmbeddedPair>;

/// Name → constructor table for embedded pairs.
#[derive(Clone)]
pub struct SchemeRegistry {
    factories: BTreeMap<String, SchemeFactory>,
}

impl fmt::Debug for SchemeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("dopri5", || Box::new(ExplicitPair::new(Tableau::dormand_prince())));
        reg.register("cash-karp", || Box::new(ExplicitPair::new(Tableau::cash_karp())));
        reg.register("rkf45", || Box::new(ExplicitPair::new(Tableau::fehlberg())));
        reg
    }

    pub fn register(&mut self, name: &str, factory: SchemeFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn EmbeddedPair>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| ModelError::UnknownName {
                kind: "integration scheme",
                name: name.to_string(),
            })
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableaux_are_consistent() {
        for tab in [Tableau::dormand_prince(), Tableau::cash_karp(), Tableau::fehlberg()] {
            let sum_hi: f64 = tab.high.iter().sum();
            let sum_lo: f64 = tab.low.iter().sum();
            assert!((sum_hi - 1.0).abs() < 1e-14, "{}", tab.name);
            assert!((sum_lo - 1.0).abs() < 1e-14, "{}", tab.name);
            assert_eq!(tab.a.len(), tab.stages());
            for (i, row) in tab.a.iter().enumerate() {
                assert_eq!(row.len(), i);
            }
            // second-order condition Σ b_i c_i = 1/2 with c_i = Σ_j a_ij
            let c: Vec<f64> = tab.a.iter().map(|r| r.iter().sum()).collect();
            let bc: f64 = tab.high.iter().zip(&c).map(|(b, c)| b * c).sum();
            assert!((bc - 0.5).abs() < 1e-14, "{}", tab.name);
            let bc4: f64 = tab.high.iter().zip(&c).map(|(b, c)| b * c * c * c).sum();
            assert!((bc4 - 0.25).abs() < 1e-14, "{}", tab.name);
        }
    }

    #[test]
    fn zero_rate_leaves_state_unchanged() {
        let rhs = |_: &[f64], out: &mut [f64]| out.fill(0.0);
        let pair = SchemeRegistry::builtin().build("dopri5").unwrap();
        let y = vec![1.0, -2.0, 3.5];
        let tol = Tolerance { rel: 1e-6, abs: 1e-9 };
        let est = pair.step(&rhs, &y, &[0.0; 3], 0.1, tol).unwrap();
        assert_eq!(est.state, y);
        assert_eq!(est.error, 0.0);
    }

    #[test]
    fn fifth_order_local_error() {
        // y' = y from y=1: one-step error should scale like h^6
        let rhs = |y: &[f64], out: &mut [f64]| out[0] = y[0];
        let tol = Tolerance { rel: 1.0, abs: 1.0 };
        for name in ["dopri5", "cash-karp", "rkf45"] {
            let pair = SchemeRegistry::builtin().build(name).unwrap();
            let err = |h: f64| {
                let est = pair.step(&rhs, &[1.0], &[1.0], h, tol).unwrap();
                (est.state[0] - h.exp()).abs()
            };
            let ratio = err(0.2) / err(0.1);
            assert!(ratio > 40.0 && ratio < 90.0, "{name}: {ratio}");
        }
    }

    #[test]
    fn nonfinite_stage_is_reported() {
        let rhs = |y: &[f64], out: &mut [f64]| out[0] = if y[0] > 1.5 { f64::NAN } else { 1.0 };
        let pair = SchemeRegistry::builtin().build("cash-karp").unwrap();
        let tol = Tolerance { rel: 1e-6, abs: 1e-9 };
        let res = pair.step(&rhs, &[1.0], &[1.0], 1.0, tol);
        assert_eq!(res.unwrap_err(), StepFailure::NonFinite);
    }

    #[test]
    fn unknown_scheme_is_an_error() {
        assert!(SchemeRegistry::builtin().build("rk4").is_err());
        let names: Vec<_> = SchemeRegistry::builtin().names().map(str::to_owned).collect();
        assert_eq!(names, ["cash-karp", "dopri5", "rkf45"]);
    }
}
