//! Experiment configuration (TOML).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::alignment::AlignConfig;
use crate::data::{CountBand, SynthSpec};
use crate::model::FeatureConfig;
use crate::selection::{Strategy, DEFAULT_LEVEL};
use crate::{Error, Result};

/// Where scenes come from. Exactly one of `manifest` / `synth` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Manifest CSV; relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Optional fixed test manifest; otherwise a seeded 60/40 split is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    /// Seed of the train/test shuffle.
    #[serde(default)]
    pub split_seed: u64,
}

/// Extractor/head sizes and feature windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub latent: usize,
    pub radii: Vec<usize>,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            latent: 8,
            radii: FeatureConfig::default().radii,
            batch_size: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alignment {
    None,
    /// Gradient reversal on individual latents only.
    Grl,
    /// Gradient reversal plus latent MixUp.
    GrlMix,
}

/// A selection strategy plus the alignment used in the final cycle,
/// written `pssw`, `pssw+grl`, `pssw+grl+mx`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub strategy: Strategy,
    pub alignment: Alignment,
}

impl Variant {
    pub fn new(strategy: Strategy, alignment: Alignment) -> Self {
        Self {
            strategy,
            alignment,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.alignment {
            Alignment::None => "",
            Alignment::Grl => "+grl",
            Alignment::GrlMix => "+grl+mx",
        };
        write!(f, "{}{suffix}", self.strategy)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('+');
        let strategy: Strategy = parts.next().unwrap_or_default().parse()?;
        let rest: Vec<&str> = parts.collect();
        let alignment = match rest[..] {
            [] => Alignment::None,
            ["grl"] => Alignment::Grl,
            ["grl", "mx"] => Alignment::GrlMix,
            _ => return Err(Error::invalid(format!("unknown variant {s:?}"))),
        };
        Ok(Self::new(strategy, alignment))
    }
}

impl Serialize for Variant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_variants() -> Vec<Variant> {
    vec![
        Variant::new(Strategy::Random, Alignment::None),
        Variant::new(Strategy::Pssw, Alignment::None),
    ]
}

fn default_budget() -> usize {
    40
}
fn default_batch() -> usize {
    10
}
fn default_level() -> u32 {
    DEFAULT_LEVEL
}
fn default_beta() -> f64 {
    3.0
}
fn default_alpha() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    4.0
}
fn default_cell_size() -> u32 {
    8
}
fn default_epochs() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.95
}
fn default_max_grad_norm() -> f64 {
    10.0
}
fn default_trials() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Total labeling budget `M`.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Scenes labeled per cycle `m`.
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Finest GDSIM level `L_A`.
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size: u32,
    #[serde(default = "default_epochs")]
    pub epochs_per_cycle: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Gradient norm clip for the regressor; `inf` disables clipping.
    #[serde(default = "default_max_grad_norm")]
    pub max_grad_norm: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Align in every cycle instead of only the last one.
    #[serde(default)]
    pub align_every_cycle: bool,
    #[serde(default)]
    pub model: ModelConfig,
}

impl ExperimentConfig {
    /// Config with defaults around a synthetic dataset.
    pub fn with_synth(spec: SynthSpec) -> Self {
        Self {
            dataset: DatasetConfig {
                manifest: None,
                test_manifest: None,
                synth: Some(spec),
                split_seed: 0,
            },
            budget: default_budget(),
            batch: default_batch(),
            variants: default_variants(),
            level: default_level(),
            beta: default_beta(),
            alpha: default_alpha(),
            sigma: default_sigma(),
            cell_size: default_cell_size(),
            epochs_per_cycle: default_epochs(),
            lr: default_lr(),
            momentum: default_momentum(),
            max_grad_norm: default_max_grad_norm(),
            trials: default_trials(),
            base_seed: 0,
            align_every_cycle: false,
            model: ModelConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; dataset paths are resolved
    /// relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.dataset.manifest, &mut cfg.dataset.test_manifest]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_owned()));
        match (&self.dataset.manifest, &self.dataset.synth) {
            (Some(_), Some(_)) => return fail("dataset: set either `manifest` or `synth`, not both"),
            (None, None) => return fail("dataset: one of `manifest` or `synth` is required"),
            _ => {}
        }
        if let Some(spec) = &self.dataset.synth {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.batch == 0 {
            return fail("batch (m) must be at least 1");
        }
        if self.batch > self.budget {
            return fail("batch (m) must not exceed budget (M)");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.variants.is_empty() {
            return fail("at least one variant is required");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return fail("sigma must be positive");
        }
        if self.cell_size == 0 {
            return fail("cell_size must be positive");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail("lr must be a non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return fail("max_grad_norm must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return fail("alpha must be positive");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return fail("beta must be non-negative");
        }
        if self.model.hidden == 0 || self.model.latent == 0 || self.model.batch_size == 0 {
            return fail("model sizes and batch_size must be positive");
        }
        if self.model.radii.is_empty() {
            return fail("model.radii must not be empty");
        }
        Ok(())
    }

    /// Number of cycles `T = ceil(M / m)`.
    pub fn cycles(&self) -> usize {
        self.budget.div_ceil(self.batch)
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            cell_size: self.cell_size,
            radii: self.model.radii.clone(),
        }
    }

    /// Clip threshold handed to the regressor state.
    pub fn grad_clip(&self) -> Option<f64> {
        self.max_grad_norm.is_finite().then_some(self.max_grad_norm)
    }

    pub fn align(&self, alignment: Alignment) -> AlignConfig {
        AlignConfig {
            beta: self.beta,
            alpha: self.alpha,
            mix: alignment == Alignment::GrlMix,
        }
    }
}

/// The skewed two-band synthetic benchmark: 500 scenes (300 train / 200 test
/// after the split), mostly sparse with a heavy dense tail.
pub fn benchmark_synth_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_scenes: 500,
        width: 128,
        height: 128,
        bands: vec![CountBand::new(0.8, 5, 60), CountBand::new(0.2, 150, 400)],
        clustering: 0.6,
        seed,
    }
}

/// The benchmark experiment: every selection baseline plus the aligned
/// variant, `M = 30`, `m = 10`, 10 trials. The learning rate is lowered and
/// the epoch count raised from the defaults so each cycle ends close to
/// convergence; trial-to-trial noise otherwise swamps the strategy effect.
pub fn benchmark_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        budget: 30,
        batch: 10,
        variants: ["rs", "pssw", "even_partition", "global_diff", "pssw+grl+mx"]
            .iter()
            .map(|v| v.parse().expect("known variant"))
            .collect(),
        lr: 1e-4,
        epochs_per_cycle: 200,
        ..ExperimentConfig::with_synth(benchmark_synth_spec(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
budget = 30
batch = 10
variants = ["rs", "pssw", "pssw+grl+mx"]

[dataset.synth]
n_scenes = 20
width = 32
height = 32
bands = [{ weight = 1.0, min_count = 1, max_count = 5 }]
clustering = 0.5
seed = 3
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.cycles(), 3);
        assert_eq!(cfg.beta, 3.0);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.level, 3);
        assert_eq!(cfg.epochs_per_cycle, 100);
        assert_eq!(cfg.momentum, 0.95);
        assert_eq!(cfg.variants[2].to_string(), "pssw+grl+mx");
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("bogus = 1\n{MINIMAL}");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_invalid_budget() {
        let text = MINIMAL.replace("batch = 10", "batch = 40");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let text = MINIMAL.replace("batch = 10", "batch = 0");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn variant_names() {
        for name in ["rs", "pssw", "even_partition", "global_diff", "pssw+grl", "pssw+grl+mx"] {
            assert_eq!(name.parse::<Variant>().unwrap().to_string(), name);
        }
        assert!("pssw+mx".parse::<Variant>().is_err());
        assert!("".parse::<Variant>().is_err());
    }
}
