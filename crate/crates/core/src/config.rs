//! JSON experiment configuration (`"schema": 1`).
//!
//! Every field has a default; unknown keys are rejected. [`ExperimentConfig::resolve`]
//! fills density-dependent defaults so the echoed config is self-describing.

use crate::density::{DensityKind, DensitySpec, TailClass};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub density: DensityConfig,
    /// Sampling window and spacing; `None` means "derive from the density".
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub dri: DriConfig,
    #[serde(default)]
    pub conv_power: ConvPowerConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub renewal: RenewalConfig,
    #[serde(default)]
    pub heavy_tail: HeavyTailConfig,
    #[serde(default)]
    pub local_clt: LocalCltConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A catalog name with numeric parameters, or a tabulated CSV.
///
/// Names and parameters (defaults in brackets): `exponential` rate [1];
/// `uniform` a [0], b [1]; `gamma` shape [2], rate [1]; `pareto` alpha [0.6],
/// scale [1]; `gaussian` mean [0], sd [1]; `log_counterexample`;
/// `sqrt_singular`; `tabulated` with `csv` and an optional `envelope` JSON
/// sidecar. `epsilon` overrides the default moment order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub window: (f64, f64),
    pub spacing: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSourceKind {
    /// Cell averages on the grid.
    Grid,
    /// Exact block extrema of a catalog density.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriConfig {
    pub ladder: Vec<f64>,
    pub tol: f64,
    pub source: BlockSourceKind,
}

impl Default for DriConfig {
    fn default() -> Self {
        Self {
            ladder: crate::riemann::default_ladder(),
            tol: 0.1,
            source: BlockSourceKind::Grid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvPowerConfig {
    pub k: usize,
    /// Keep only this window of each intermediate power.
    pub truncate: Option<(f64, f64)>,
}

impl Default for ConvPowerConfig {
    fn default() -> Self {
        Self { k: 2, truncate: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub n_max: usize,
    /// Weight exponent for the weighted sum; `None` uses the density's ε.
    pub eps: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_max: 6, eps: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenewalConfig {
    pub n_terms: usize,
    pub x_max: f64,
    pub spacing: f64,
    pub remainder_tol: f64,
    /// Defect order: `u − Σ_{n<k} f_n`.
    pub k: usize,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        Self {
            n_terms: 200,
            x_max: 30.0,
            spacing: 1.0 / 128.0,
            remainder_tol: crate::renewal::REMAINDER_TOL,
            k: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeavyTailConfig {
    pub n_terms: usize,
    pub probes: Vec<f64>,
    pub spacing: f64,
    /// `None` resolves k̄ from the envelope chain.
    pub kbar: Option<usize>,
}

impl Default for HeavyTailConfig {
    fn default() -> Self {
        Self {
            n_terms: 400,
            probes: vec![100.0, 300.0, 1000.0],
            spacing: 0.125,
            kbar: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalCltConfig {
    pub n_list: Vec<usize>,
    pub points_per_sd: usize,
}

impl Default for LocalCltConfig {
    fn default() -> Self {
        Self {
            n_list: vec![2, 4, 8, 16],
            points_per_sd: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// `(x, δ)` pairs.
    pub windows: Vec<(f64, f64)>,
    pub paths: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            windows: vec![(10.0, 0.5), (20.0, 0.25)],
            paths: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    /// Defaults for everything but the density.
    pub fn for_density(density: DensityConfig) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            density,
            grid: None,
            dri: DriConfig::default(),
            conv_power: ConvPowerConfig::default(),
            chain: ChainConfig::default(),
            renewal: RenewalConfig::default(),
            heavy_tail: HeavyTailConfig::default(),
            local_clt: LocalCltConfig::default(),
            simulate: SimulateConfig::default(),
            seed: 0,
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    /// Reads a config; relative CSV paths are taken relative to the file.
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.density.csv, &mut cfg.density.envelope].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Builds the density and fills the grid default.
    pub fn resolve(mut self) -> Result<(Self, DensitySpec)> {
        let spec = self.density.build()?;
        if self.grid.is_none() {
            self.grid = Some(default_grid(&spec));
        }
        if self.density.epsilon.is_none() {
            self.density.epsilon = spec.epsilon();
        }
        Ok((self, spec))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl DensityConfig {
    pub fn named(name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            name: name.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            csv: None,
            envelope: None,
            epsilon: None,
        }
    }

    pub fn build(&self) -> Result<DensitySpec> {
        let allowed: &[(&str, f64)] = match self.name.as_str() {
            "exponential" => &[("rate", 1.0)],
            "uniform" => &[("a", 0.0), ("b", 1.0)],
            "gamma" => &[("shape", 2.0), ("rate", 1.0)],
            "pareto" => &[("alpha", 0.6), ("scale", 1.0)],
            "gaussian" => &[("mean", 0.0), ("sd", 1.0)],
            "log_counterexample" | "sqrt_singular" | "tabulated" => &[],
            other => return Err(Error::Config(format!("unknown density '{other}'"))),
        };
        if let Some(k) = self.params.keys().find(|k| !allowed.iter().any(|(a, _)| a == k)) {
            return Err(Error::Config(format!(
                "unknown parameter '{k}' for density '{}'",
                self.name
            )));
        }
        if self.name != "tabulated" && (self.csv.is_some() || self.envelope.is_some()) {
            return Err(Error::Config(
                "'csv' and 'envelope' apply only to tabulated densities".into(),
            ));
        }
        let p = |key: &str| {
            self.params.get(key).copied().unwrap_or_else(|| {
                allowed
                    .iter()
                    .find(|(a, _)| *a == key)
                    .map(|(_, v)| *v)
                    .unwrap_or(f64::NAN)
            })
        };
        let spec = match self.name.as_str() {
            "exponential" => DensitySpec::exponential(p("rate"))?,
            "uniform" => DensitySpec::uniform(p("a"), p("b"))?,
            "gamma" => DensitySpec::gamma(p("shape"), p("rate"))?,
            "pareto" => DensitySpec::pareto(p("alpha"), p("scale"))?,
            "gaussian" => DensitySpec::gaussian(p("mean"), p("sd"))?,
            "log_counterexample" => DensitySpec::log_counterexample(),
            "sqrt_singular" => DensitySpec::sqrt_singular(),
            _ => {
                let csv = self
                    .csv
                    .as_ref()
                    .ok_or_else(|| Error::Config("tabulated density needs 'csv'".into()))?;
                let mut g = GridFunction::read_csv(csv)?;
                if let Some(env) = &self.envelope {
                    let env = GridFunction::read_envelope(env)?;
                    g = g.with_envelope(env, (f64::NEG_INFINITY, f64::INFINITY));
                }
                DensitySpec::tabulated(g)?
            }
        };
        match self.epsilon {
            Some(e) => spec.with_epsilon(e),
            None => Ok(spec),
        }
    }
}

/// Density-dependent default grid: a window holding all but 1e-9 of the
/// mass (at most 4096 wide) and a dyadic spacing with about 16k cells.
pub fn default_grid(spec: &DensitySpec) -> GridConfig {
    if let DensityKind::LogCounterexample = spec.kind() {
        return GridConfig {
            window: (0.0, 64.0),
            spacing: 1.0 / 512.0,
        };
    }
    if let DensityKind::Tabulated { grid } = spec.kind() {
        return GridConfig {
            window: (grid.origin(), grid.last_x()),
            spacing: grid.spacing(),
        };
    }
    let (lo, hi) = match spec.tail_class() {
        TailClass::PowerLaw { .. } | TailClass::LogPower => {
            let (lo, _) = spec.support();
            let lo = if lo.is_finite() { lo } else { -1024.0 };
            (lo, lo + 1024.0)
        }
        _ => spec.suggested_window(1e-9),
    };
    let hi = hi.min(lo + 4096.0);
    let spacing = 2f64.powi(((hi - lo) / 16384.0).log2().floor() as i32);
    GridConfig {
        window: (lo, hi),
        spacing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema":1,"density":{"name":"exponential"}}"#).unwrap();
        assert_eq!(cfg.renewal.n_terms, 200);
        let (r, spec) = cfg.resolve().unwrap();
        assert_eq!(spec.name(), "exponential(rate=1)");
        let g = r.grid.unwrap();
        assert_eq!(g.window.0, 0.0);
        assert!(g.window.1 > 20.0);
        assert_eq!(r.density.epsilon, Some(1.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"schema":1,"density":{"name":"exponential"},"bogus":1}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"schema":1,"density":{"name":"exponential"},"renewal":{"n":3}}"#).is_err()
        );
        let cfg = ExperimentConfig::from_json(r#"{"schema":1,"density":{"name":"exponential","params":{"alpha":1}}}"#)
            .unwrap();
        assert!(cfg.resolve().is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema":2,"density":{"name":"exponential"}}"#).is_err());
    }

    #[test]
    fn log_counterexample_default_grid() {
        let g = default_grid(&DensitySpec::log_counterexample());
        assert_eq!(g.window, (0.0, 64.0));
        assert_eq!(g.spacing, 1.0 / 512.0);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::for_density(DensityConfig::named("pareto", &[("alpha", 0.5)]));
        let (r, _) = cfg.resolve().unwrap();
        let back = ExperimentConfig::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
