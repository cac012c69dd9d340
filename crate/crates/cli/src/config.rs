//! Run configuration: a sectioned TOML document mapped onto [`RunConfig`].

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sizespec::diagnostics::DiagnosticsSettings;
use sizespec::integrator::{NegativityMode, StepControl};
use sizespec::{Grid, ModelParams, PreferenceKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialState {
    Linear { left: f64, right: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: Grid,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub control: StepControl,
    pub initial: InitialState,
    pub output_dir: Option<PathBuf>,
    pub diagnostics: DiagnosticsSettings,
}

impl RunConfig {
    /// `{0, T/10, T/2, T}`.
    pub fn default_snapshots(t_end: f64) -> Vec<f64> {
        vec![0.0, t_end / 10.0, t_end / 2.0, t_end]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(k), None) => write!(f, "key `{k}`: {}", self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    model: ModelSection,
    grid: GridSection,
    time: TimeSection,
    #[serde(default)]
    control: ControlSection,
    initial: InitialSection,
    #[serde(default)]
    diagnostics: DiagnosticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    preference: String,
    alpha: f64,
    #[serde(rename = "B")]
    b: f64,
    sigma: f64,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "K_prime")]
    k_prime: f64,
    #[serde(rename = "A", default = "one")]
    a: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(rename = "W")]
    w: f64,
    #[serde(rename = "N")]
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    #[serde(rename = "T")]
    t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ControlSection {
    rel_tol: f64,
    abs_tol: f64,
    h_init: f64,
    h_min: f64,
    h_max: f64,
    safety_factor: f64,
    max_steps: usize,
    method: String,
    negativity: NegativityMode,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self::from(StepControl::default())
    }
}

impl From<StepControl> for ControlSection {
    fn from(c: StepControl) -> Self {
        Self {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            h_init: c.h_init,
            h_min: c.h_min,
            h_max: c.h_max,
            safety_factor: c.safety_factor,
            max_steps: c.max_steps,
            method: c.method,
            negativity: c.negativity,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DiagnosticsSection {
    exponents: Vec<f64>,
    gap_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scan_range: Option<[f64; 2]>,
    support_threshold: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsSettings::default();
        Self {
            exponents: d.exponents,
            gap_threshold: d.gap_threshold,
            scan_range: d.scan_range,
            support_threshold: d.support_threshold,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: String,
}

/// 1-based line of `key` inside `[section]`, if present.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((lhs, _)) = line.split_once('=') {
            if lhs.trim().trim_matches('"') == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn section_line(text: &str, section: &str) -> Option<usize> {
    text.lines()
        .position(|l| l.trim() == format!("[{section}]"))
        .map(|i| i + 1)
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            key: Some(key.to_string()),
            line: key_line(self.text, section, key).or_else(|| section_line(self.text, section)),
            message: message.into(),
        }
    }
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn from_toml_error(text: &str, e: toml::de::Error) -> ConfigError {
    let message = e.message().trim().to_string();
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let key = if message.starts_with("unknown field") || message.starts_with("missing field") {
        backticked(&message)
    } else {
        None
    };
    ConfigError { key, line, message }
}

/// Key in `[model]` that a model validation message is about.
fn model_key(message: &str) -> &'static str {
    const KEYS: [(&str, &str); 7] = [
        ("assimilation", "K"),
        ("offspring_scale", "K_prime"),
        ("search_exponent", "alpha"),
        ("search_volume", "A"),
        ("preferred_ratio", "B"),
        ("diet_breadth", "sigma"),
        ("B - sigma", "sigma"),
    ];
    KEYS.iter()
        .find(|(needle, _)| message.contains(needle))
        .map(|(_, k)| *k)
        .unwrap_or("preference")
}

fn control_key(message: &str) -> &'static str {
    const KEYS: [&str; 7] = [
        "rel_tol",
        "step sizes",
        "safety_factor",
        "max_steps",
        "abs_tol",
        "h_min",
        "method",
    ];
    match KEYS.iter().find(|k| message.contains(*k)) {
        Some(&"step sizes") => "h_init",
        Some(k) => k,
        None => "method",
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc: Document = toml::from_str(text).map_err(|e| from_toml_error(text, e))?;
    resolve(doc, &Ctx { text })
}

fn resolve(doc: Document, cx: &Ctx) -> Result<RunConfig, ConfigError> {
    let m = &doc.model;
    let preference: PreferenceKind = m
        .preference
        .parse()
        .map_err(|e: sizespec::ModelError| cx.err("model", "preference", e.to_string()))?;
    if preference == PreferenceKind::Dirac {
        return Err(cx.err(
            "model",
            "preference",
            "dirac has no density and cannot be integrated; use compact or gaussian",
        ));
    }
    let model = ModelParams {
        assimilation: m.k,
        offspring_scale: m.k_prime,
        search_exponent: m.alpha,
        search_volume: m.a,
        preferred_ratio: m.b,
        diet_breadth: m.sigma,
        preference,
    };
    model.validate().map_err(|e| {
        let msg = match e {
            sizespec::ModelError::InvalidParam(s) => s,
            other => other.to_string(),
        };
        cx.err("model", model_key(&msg), msg)
    })?;

    if !(doc.grid.w > 0.0 && doc.grid.w.is_finite()) {
        return Err(cx.err("grid", "W", "upper mass W must be finite and > 0"));
    }
    if doc.grid.n < 2 {
        return Err(cx.err("grid", "N", "N must be at least 2"));
    }
    let grid = Grid::uniform(doc.grid.w, doc.grid.n).map_err(|e| cx.err("grid", "N", e.to_string()))?;

    let t_end = doc.time.t;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(cx.err("time", "T", "final time T must be finite and > 0"));
    }
    let snapshot_times = doc
        .time
        .snapshots
        .clone()
        .unwrap_or_else(|| RunConfig::default_snapshots(t_end));
    if snapshot_times.is_empty() {
        return Err(cx.err("time", "snapshots", "at least one snapshot time is needed"));
    }
    if snapshot_times.iter().any(|&s| !(0.0..=t_end).contains(&s)) {
        return Err(cx.err("time", "snapshots", "snapshot times must lie in [0, T]"));
    }
    if snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(cx.err("time", "snapshots", "snapshot times must be strictly increasing"));
    }

    let c = doc.control;
    let control = StepControl {
        rel_tol: c.rel_tol,
        abs_tol: c.abs_tol,
        h_init: c.h_init,
        h_min: c.h_min,
        h_max: c.h_max,
        safety_factor: c.safety_factor,
        max_steps: c.max_steps,
        method: c.method,
        negativity: c.negativity,
    };
    control.validate().map_err(|e| {
        let msg = e.to_string();
        cx.err("control", control_key(&msg), msg)
    })?;

    let ini = &doc.initial;
    let initial = match ini.kind.as_str() {
        "linear" => {
            if ini.path.is_some() {
                return Err(cx.err("initial", "path", "path is only valid with kind = \"csv\""));
            }
            let left = ini.left.ok_or_else(|| cx.err("initial", "left", "missing key `left`"))?;
            let right = ini.right.ok_or_else(|| cx.err("initial", "right", "missing key `right`"))?;
            for (k, v) in [("left", left), ("right", right)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(cx.err("initial", k, "initial values must be finite and >= 0"));
                }
            }
            InitialState::Linear { left, right }
        }
        "csv" => {
            for k in ["left", "right"] {
                if key_line(cx.text, "initial", k).is_some() {
                    return Err(cx.err("initial", k, "left/right are only valid with kind = \"linear\""));
                }
            }
            let path = ini
                .path
                .as_deref()
                .filter(|p| !p.is_empty())
                .ok_or_else(|| cx.err("initial", "path", "missing key `path`"))?;
            InitialState::Csv { path: PathBuf::from(path) }
        }
        other => {
            return Err(cx.err(
                "initial",
                "kind",
                format!("unknown initial kind `{other}` (expected linear or csv)"),
            ))
        }
    };

    let dg = doc.diagnostics;
    if dg.exponents.iter().any(|m| !m.is_finite()) {
        return Err(cx.err("diagnostics", "exponents", "exponents must be finite"));
    }
    if !(dg.gap_threshold > 0.0 && dg.gap_threshold < 1.0) {
        return Err(cx.err("diagnostics", "gap_threshold", "gap_threshold must lie in (0,1)"));
    }
    if !(dg.support_threshold > 0.0 && dg.support_threshold.is_finite()) {
        return Err(cx.err("diagnostics", "support_threshold", "support_threshold must be > 0"));
    }
    if let Some([lo, hi]) = dg.scan_range {
        if !(lo >= 0.0 && lo < hi && hi <= doc.grid.w) {
            return Err(cx.err("diagnostics", "scan_range", "scan_range must satisfy 0 <= lo < hi <= W"));
        }
    }
    let diagnostics = DiagnosticsSettings {
        exponents: dg.exponents,
        gap_threshold: dg.gap_threshold,
        scan_range: dg.scan_range,
        support_threshold: dg.support_threshold,
    };

    let output_dir = match doc.output {
        Some(o) if o.dir.is_empty() => return Err(cx.err("output", "dir", "empty output directory")),
        Some(o) => Some(PathBuf::from(o.dir)),
        None => None,
    };

    Ok(RunConfig {
        model,
        grid,
        t_end,
        snapshot_times,
        control,
        initial,
        output_dir,
        diagnostics,
    })
}

/// Renders `cfg` in the document schema; `parse_config` reads it back unchanged.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let m = &cfg.model;
    let (kind, left, right, path) = match &cfg.initial {
        InitialState::Linear { left, right } => ("linear", Some(*left), Some(*right), None),
        InitialState::Csv { path } => ("csv", None, None, Some(path.to_string_lossy().into_owned())),
    };
    let doc = Document {
        model: ModelSection {
            preference: m.preference.name().to_string(),
            alpha: m.search_exponent,
            b: m.preferred_ratio,
            sigma: m.diet_breadth,
            k: m.assimilation,
            k_prime: m.offspring_scale,
            a: m.search_volume,
        },
        grid: GridSection {
            w: cfg.grid.upper(),
            n: cfg.grid.cells(),
        },
        time: TimeSection {
            t: cfg.t_end,
            snapshots: Some(cfg.snapshot_times.clone()),
        },
        control: ControlSection::from(cfg.control.clone()),
        initial: InitialSection {
            kind: kind.to_string(),
            left,
            right,
            path,
        },
        diagnostics: DiagnosticsSection {
            exponents: cfg.diagnostics.exponents.clone(),
            gap_threshold: cfg.diagnostics.gap_threshold,
            scan_range: cfg.diagnostics.scan_range,
            support_threshold: cfg.diagnostics.support_threshold,
        },
        output: cfg.output_dir.as_ref().map(|d| OutputSection {
            dir: d.to_string_lossy().into_owned(),
        }),
    };
    toml::to_string(&doc).expect("config document is always representable")
}
