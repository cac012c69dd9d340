//! `sim analyze`: closed-form quantities printed as small tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use sizespec::diagnostics::predicted_support;
use sizespec::kernel::{
    blowup_constant, find_m_star, find_m_tilde, power_law_exponent, powerlaw_residual, DEFAULT_ROOT_TOL,
};
use sizespec::{ModelParams, PreferenceKind};

use crate::run::RunError;

pub const SUBCOMMANDS: [&str; 3] = ["mstar", "powerlaw", "gaps"];

const POWERLAW_SAMPLES: usize = 1000;
const DEFAULT_DEPTH: usize = 5;

struct Args {
    values: BTreeMap<String, f64>,
}

fn canonical(key: &str) -> &str {
    match key {
        "K'" | "Kp" | "k_prime" => "K_prime",
        "σ" => "sigma",
        "α" => "alpha",
        "w_bar" | "w̄" => "wbar",
        other => other,
    }
}

impl Args {
    fn parse(raw: &[String], allowed: &[&str]) -> Result<Self, RunError> {
        let mut values = BTreeMap::new();
        for item in raw {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| RunError::Config(format!("expected key=value, got `{item}`")))?;
            let k = canonical(k.trim());
            if !allowed.contains(&k) {
                return Err(RunError::Config(format!(
                    "unknown key `{k}` (expected one of {})",
                    allowed.join(", ")
                )));
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| RunError::Config(format!("key `{k}`: `{v}` is not a number")))?;
            values.insert(k.to_string(), v);
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Result<f64, RunError> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| RunError::Config(format!("missing key `{key}`")))
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.values.get(key).copied().unwrap_or(default)
    }
}

fn model_err(e: sizespec::ModelError) -> RunError {
    RunError::Config(e.to_string())
}

/// Runs one subcommand and returns the rendered table.
pub fn analyze(subcommand: &str, raw: &[String]) -> Result<String, RunError> {
    match subcommand {
        "mstar" => mstar(&Args::parse(raw, &["K", "K_prime", "B", "sigma", "alpha"])?),
        "powerlaw" => powerlaw(&Args::parse(raw, &["alpha", "K", "K_prime", "B", "sigma"])?),
        "gaps" => gaps(&Args::parse(raw, &["wbar", "B", "sigma", "depth"])?),
        other => Err(RunError::Config(format!(
            "unknown analyze subcommand `{other}` (expected one of {})",
            SUBCOMMANDS.join(", ")
        ))),
    }
}

/// `α` only enters the blow-up constant; without it `C` is not printed.
fn mstar(a: &Args) -> Result<String, RunError> {
    let alpha = a.values.get("alpha").copied();
    let p = ModelParams::new(
        PreferenceKind::CompactBump,
        alpha.unwrap_or(1.0),
        a.get("B")?,
        a.get("sigma")?,
        a.get("K")?,
        a.get("K_prime")?,
    )
    .map_err(model_err)?;
    let mut out = String::new();
    match find_m_star(&p, DEFAULT_ROOT_TOL).map_err(model_err)? {
        Some(ms) => {
            writeln!(out, "m_star         {:.6}", ms.value).unwrap();
            writeln!(out, "binding_ratio  {:.6}", ms.binding_ratio).unwrap();
            writeln!(out, "verified       {}", ms.verified).unwrap();
        }
        None => writeln!(out, "m_star         none").unwrap(),
    }
    match find_m_tilde(&p, DEFAULT_ROOT_TOL).map_err(model_err)? {
        Some(v) => writeln!(out, "m_tilde        {v:.6}").unwrap(),
        None => writeln!(out, "m_tilde        none").unwrap(),
    }
    match alpha {
        Some(al) => writeln!(out, "C(alpha={al})  {:.6e}", blowup_constant(&p).map_err(model_err)?).unwrap(),
        None => writeln!(out, "C              n/a (pass alpha=<value>)").unwrap(),
    }
    Ok(out)
}

/// `max |G(γ, r)|` over `r` in `[B−σ, B+σ]`, by default `[0.1, 10]`.
fn powerlaw(a: &Args) -> Result<String, RunError> {
    let alpha = a.get("alpha")?;
    let (lo, hi) = match (a.values.get("B"), a.values.get("sigma")) {
        (Some(b), Some(s)) => (b - s, b + s),
        (None, None) => (0.1, 10.0),
        _ => return Err(RunError::Config("give both B and sigma, or neither".into())),
    };
    if !(lo > 0.0 && hi > lo) {
        return Err(RunError::Config("ratio sample needs 0 < B - sigma".into()));
    }
    let p = ModelParams::new(
        PreferenceKind::CompactBump,
        alpha,
        0.5 * (lo + hi),
        0.5 * (hi - lo),
        a.get_or("K", 0.1),
        a.get_or("K_prime", 0.01),
    )
    .map_err(model_err)?;
    let gamma = power_law_exponent(alpha);
    let worst = (0..POWERLAW_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (POWERLAW_SAMPLES - 1) as f64)
        .map(|r| powerlaw_residual(&p, gamma, r).abs())
        .fold(0.0_f64, f64::max);
    let mut out = String::new();
    writeln!(out, "gamma          {gamma}").unwrap();
    writeln!(out, "max_abs_G      {worst:.3e}").unwrap();
    writeln!(out, "r_sample       [{lo}, {hi}] x {POWERLAW_SAMPLES}").unwrap();
    Ok(out)
}

fn gaps(a: &Args) -> Result<String, RunError> {
    let depth = a.get_or("depth", DEFAULT_DEPTH as f64);
    if !(depth >= 1.0 && depth.fract() == 0.0) {
        return Err(RunError::Config("key `depth`: expected a positive integer".into()));
    }
    let g = predicted_support(a.get("wbar")?, a.get("B")?, a.get("sigma")?, depth as usize).map_err(model_err)?;
    let mut out = String::new();
    writeln!(out, "{:>3}  {:>12}  {:>12}  {:>12}", "i", "lo", "hi", "length").unwrap();
    for (i, (iv, len)) in g.intervals.iter().zip(&g.lengths).enumerate() {
        writeln!(out, "{:>3}  {:>12.6}  {:>12.6}  {:>12.6}", i + 1, iv[0], iv[1], len).unwrap();
    }
    Ok(out)
}
