//! Experiment specification files (TOML).
//!
//! A spec holds a mandatory `master_seed`, optional top-level flags, and
//! exactly one engine table: `[two_level]`, `[rotor]` or `[decay]`. Unknown
//! keys anywhere are rejected and listed together. After parsing every default
//! is resolved, and the resolved spec is echoed into each output artifact.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{BreakTimeOptions, LocalizationOptions};
use crate::decay::{self, DecayConfig, SpectralModel};
use crate::error::{Error, Result};
use crate::rotor::RotorConfig;
use crate::two_level::{TwoLevelConfig, TwoLevelMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    TwoLevel,
    Rotor,
    Decay,
}

impl EngineKind {
    pub fn table_name(&self) -> &'static str {
        match self {
            EngineKind::TwoLevel => "two_level",
            EngineKind::Rotor => "rotor",
            EngineKind::Decay => "decay",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub master_seed: u64,
    pub emit_reference_curves: bool,
    /// Output directory from the file; not part of the echoed spec.
    pub output_dir: Option<PathBuf>,
    pub engine: EngineSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineSpec {
    TwoLevel(TwoLevelConfig),
    Rotor {
        config: RotorConfig,
        analysis: AnalysisSpec,
    },
    Decay(DecaySpec),
}

impl EngineSpec {
    pub fn kind(&self) -> EngineKind {
        match self {
            EngineSpec::TwoLevel(_) => EngineKind::TwoLevel,
            EngineSpec::Rotor { .. } => EngineKind::Rotor,
            EngineSpec::Decay(_) => EngineKind::Decay,
        }
    }
}

/// Estimator settings for rotor runs (`[analysis]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    #[serde(default = "default_central_exclusion")]
    pub tail_exclusion: f64,
    #[serde(default = "default_floor_factor")]
    pub floor_factor: f64,
    #[serde(default = "default_min_tail_bins")]
    pub min_tail_bins: usize,
    #[serde(default = "default_r2_floor")]
    pub r2_floor: f64,
    #[serde(default = "default_plateau_fraction")]
    pub plateau_fraction: f64,
    #[serde(default = "default_saturation_ratio")]
    pub saturation_ratio: f64,
}

fn default_central_exclusion() -> f64 {
    LocalizationOptions::default().central_exclusion
}
fn default_floor_factor() -> f64 {
    LocalizationOptions::default().floor_factor
}
fn default_min_tail_bins() -> usize {
    LocalizationOptions::default().min_tail_bins
}
fn default_r2_floor() -> f64 {
    LocalizationOptions::default().r2_floor
}
fn default_plateau_fraction() -> f64 {
    BreakTimeOptions::default().plateau_fraction
}
fn default_saturation_ratio() -> f64 {
    BreakTimeOptions::default().saturation_ratio
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            tail_exclusion: default_central_exclusion(),
            floor_factor: default_floor_factor(),
            min_tail_bins: default_min_tail_bins(),
            r2_floor: default_r2_floor(),
            plateau_fraction: default_plateau_fraction(),
            saturation_ratio: default_saturation_ratio(),
        }
    }
}

impl AnalysisSpec {
    pub fn localization(&self) -> LocalizationOptions {
        LocalizationOptions {
            central_exclusion: self.tail_exclusion,
            floor_factor: self.floor_factor,
            min_tail_bins: self.min_tail_bins,
            r2_floor: self.r2_floor,
        }
    }

    pub fn break_time(&self) -> BreakTimeOptions {
        BreakTimeOptions {
            plateau_fraction: self.plateau_fraction,
            saturation_ratio: self.saturation_ratio,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tail_exclusion) {
            return Err(Error::config("analysis.tail_exclusion must be in [0, 1)"));
        }
        if !(self.plateau_fraction > 0.0 && self.plateau_fraction < 1.0) {
            return Err(Error::config("analysis.plateau_fraction must be in (0, 1)"));
        }
        if !(self.saturation_ratio > 0.0) {
            return Err(Error::config("analysis.saturation_ratio must be > 0"));
        }
        if !(self.floor_factor >= 1.0) {
            return Err(Error::config("analysis.floor_factor must be >= 1"));
        }
        Ok(())
    }
}

/// `[decay]`: spectral model, time grid and optional repeated-observation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySpec {
    pub model: ModelSpec,
    pub times: TimeGrid,
    /// `t (E_u - E_l)` below which the quadratic law is expected.
    #[serde(default = "default_validity")]
    pub validity_threshold: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeated: Option<DecayConfig>,
}

fn default_validity() -> f64 {
    decay::QUADRATIC_REGIME_THRESHOLD
}

fn default_rel_tol() -> f64 {
    decay::DECAY_REL_TOL
}

/// `preset = "flat"` uses the scalar fields; `preset = "tabulated"` uses
/// `table` rows `[E, |V|^2, rho]` with linear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_upper: Option<f64>,
    #[serde(default)]
    pub e0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 3]>>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<SpectralModel> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::config(format!("decay.model.{name} is required for preset \"flat\"")))
        };
        match self.preset.as_str() {
            "flat" => {
                if self.table.is_some() {
                    return Err(Error::config("decay.model.table is only valid with preset \"tabulated\""));
                }
                SpectralModel::flat(
                    need(self.coupling, "coupling")?,
                    need(self.density, "density")?,
                    need(self.e_lower, "e_lower")?,
                    need(self.e_upper, "e_upper")?,
                    self.e0,
                )
                .map_err(|e| Error::config(format!("decay.model: {e}")))
            }
            "tabulated" => {
                if self.coupling.is_some() || self.density.is_some() || self.e_lower.is_some() || self.e_upper.is_some() {
                    return Err(Error::config(
                        "decay.model with preset \"tabulated\" takes only `table` and `e0`",
                    ));
                }
                let table = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::config("decay.model.table is required for preset \"tabulated\""))?;
                let rows: Vec<(f64, f64, f64)> = table.iter().map(|r| (r[0], r[1], r[2])).collect();
                SpectralModel::tabulated(&rows, self.e0).map_err(|e| Error::config(format!("decay.model: {e}")))
            }
            other => Err(Error::config(format!(
                "decay.model.preset must be \"flat\" or \"tabulated\", got \"{other}\""
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + f * (self.stop - self.start),
                    Spacing::Log => (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points < 1 {
            return Err(Error::config("decay.times.points must be >= 1"));
        }
        if !(self.start >= 0.0 && self.stop >= self.start && self.stop.is_finite()) {
            return Err(Error::config("decay.times needs 0 <= start <= stop"));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0) {
            return Err(Error::config("decay.times.start must be > 0 for log spacing"));
        }
        Ok(())
    }
}

impl DecaySpec {
    fn validate(&self) -> Result<()> {
        self.model.build()?;
        self.times.validate()?;
        if !(self.validity_threshold > 0.0) {
            return Err(Error::config("decay.validity_threshold must be > 0"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::config("decay.rel_tol must be in (0, 1)"));
        }
        if let Some(r) = &self.repeated {
            r.validate()?;
        }
        Ok(())
    }
}

/// Seeds above `i64::MAX` do not fit a TOML integer and are written as strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SeedRepr {
    Int(u64),
    Text(String),
}

impl SeedRepr {
    fn from_seed(seed: u64) -> Self {
        if seed <= i64::MAX as u64 {
            SeedRepr::Int(seed)
        } else {
            SeedRepr::Text(seed.to_string())
        }
    }

    fn value(&self) -> Result<u64> {
        match self {
            SeedRepr::Int(v) => Ok(*v),
            SeedRepr::Text(s) => s
                .parse()
                .map_err(|_| Error::config(format!("master_seed \"{s}\" is not a 64-bit unsigned integer"))),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct RawSpec {
    master_seed: Option<SeedRepr>,
    #[serde(default)]
    emit_reference_curves: bool,
    #[serde(default)]
    output: RawOutput,
    two_level: Option<TwoLevelConfig>,
    rotor: Option<RotorConfig>,
    decay: Option<DecaySpec>,
    analysis: Option<AnalysisSpec>,
}

#[derive(Serialize)]
struct EchoSpec<'a> {
    master_seed: SeedRepr,
    emit_reference_curves: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    two_level: Option<&'a TwoLevelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotor: Option<&'a RotorConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analysis: Option<&'a AnalysisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay: Option<&'a DecaySpec>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub realizations: Option<usize>,
}

/// Parses and validates a spec. A missing `master_seed` is an error.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    parse_spec_with(text, &Overrides::default())
}

pub fn parse_spec_with(text: &str, overrides: &Overrides) -> Result<ExperimentSpec> {
    let value: toml::Value =
        toml::from_str(text).map_err(|e| Error::config(format!("spec is not valid TOML: {e}")))?;
    let mut unknown = BTreeSet::new();
    let raw: RawSpec = serde_ignored::deserialize(value, |path| {
        unknown.insert(path.to_string().replace(".?", ""));
    })
    .map_err(|e| Error::config(format!("spec: {e}")))?;
    if !unknown.is_empty() {
        return Err(Error::config(format!(
            "unknown keys: {}",
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let master_seed = match (overrides.seed, &raw.master_seed) {
        (Some(s), _) => s,
        (None, Some(s)) => s.value()?,
        (None, None) => {
            return Err(Error::config(
                "master_seed is required (set it in the spec or pass --seed); there is no clock-based default",
            ))
        }
    };

    let present: Vec<&str> = [
        raw.two_level.as_ref().map(|_| "two_level"),
        raw.rotor.as_ref().map(|_| "rotor"),
        raw.decay.as_ref().map(|_| "decay"),
    ]
    .into_iter()
    .flatten()
    .collect();
    if present.len() != 1 {
        return Err(Error::config(format!(
            "exactly one engine table ([two_level], [rotor] or [decay]) is required, found {}",
            if present.is_empty() { "none".to_string() } else { present.join(", ") }
        )));
    }
    if raw.analysis.is_some() && raw.rotor.is_none() {
        return Err(Error::config("[analysis] applies only to rotor specs"));
    }

    let engine = if let Some(mut cfg) = raw.two_level {
        if let Some(n) = overrides.realizations {
            cfg.n_realizations = n;
        }
        if cfg.mode == TwoLevelMode::Analytic {
            cfg.n_realizations = 1;
        }
        cfg.validate()?;
        EngineSpec::TwoLevel(cfg)
    } else if let Some(mut cfg) = raw.rotor {
        if let Some(n) = overrides.realizations {
            cfg.n_realizations = n;
        }
        cfg.validate()?;
        cfg.basis_size = Some(cfg.resolved_basis_size());
        let analysis = raw.analysis.unwrap_or_default();
        analysis.validate()?;
        EngineSpec::Rotor { config: cfg, analysis }
    } else {
        let d = raw.decay.expect("one engine table is present");
        if overrides.realizations.is_some() {
            return Err(Error::config("--realizations does not apply to the decay engine"));
        }
        d.validate()?;
        EngineSpec::Decay(d)
    };

    Ok(ExperimentSpec {
        master_seed,
        emit_reference_curves: raw.emit_reference_curves,
        output_dir: overrides.out.clone().or(raw.output.dir),
        engine,
    })
}

impl ExperimentSpec {
    /// Resolved spec as TOML, without the output location.
    pub fn to_toml(&self) -> String {
        let mut echo = EchoSpec {
            master_seed: SeedRepr::from_seed(self.master_seed),
            emit_reference_curves: self.emit_reference_curves,
            two_level: None,
            rotor: None,
            analysis: None,
            decay: None,
        };
        match &self.engine {
            EngineSpec::TwoLevel(c) => echo.two_level = Some(c),
            EngineSpec::Rotor { config, analysis } => {
                echo.rotor = Some(config);
                echo.analysis = Some(analysis);
            }
            EngineSpec::Decay(d) => echo.decay = Some(d),
        }
        toml::to_string(&echo).expect("spec serializes to TOML")
    }
}

/// Recovers the spec echoed into a CSV header (the lines between
/// `# spec:` and `# end spec`).
pub fn extract_echoed_spec(artifact: &str) -> Option<String> {
    let mut lines = artifact.lines();
    lines.find(|l| l.trim_end() == "# spec:")?;
    let mut out = String::new();
    for line in lines {
        if line.trim_end() == "# end spec" {
            return Some(out);
        }
        let body = line.strip_prefix("# ").or_else(|| line.strip_prefix('#'))?;
        out.push_str(body);
        out.push('\n');
    }
    None
}
