//! Run configuration: architecture, encoder, optimizer, data source.
//!
//! Configs are TOML documents; every key has a default so partial files work.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::Sharing;
use crate::error::{Error, Result};
use crate::neurons::{ForwardMode, Parametrization};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub neurons: usize,
    #[serde(default = "default_arity")]
    pub arity: usize,
    #[serde(default = "default_kind")]
    pub kind: Parametrization,
    #[serde(default = "default_mode")]
    pub mode: ForwardMode,
    /// Sigmoid temperature; `None` scales with arity as `2^n / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

fn default_arity() -> usize {
    2
}
fn default_kind() -> Parametrization {
    Parametrization::Warp
}
fn default_mode() -> ForwardMode {
    ForwardMode::Soft
}

impl LayerConfig {
    pub fn new(neurons: usize, arity: usize, kind: Parametrization, mode: ForwardMode) -> Self {
        Self {
            neurons,
            arity,
            kind,
            mode,
            tau: None,
        }
    }

    pub fn effective_tau(&self) -> f64 {
        self.tau
            .unwrap_or_else(|| ((1usize << self.arity) as f64 / 4.0).max(0.5))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Uniform,
    Distributive,
    Learnable,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(EncoderKind::Uniform),
            "distributive" => Ok(EncoderKind::Distributive),
            "learnable" => Ok(EncoderKind::Learnable),
            _ => Err(Error::Config(format!("unknown encoder {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub bits_per_feature: usize,
    pub sharing: Sharing,
    /// Soft-threshold temperature, in units of each feature's scale.
    pub rho: f64,
    /// Divide the soft-threshold argument by each feature's standard deviation.
    pub feature_scaling: bool,
    /// Logistic noise inside the soft thresholds of learnable plans.
    pub noise: bool,
    /// Learning-rate multiplier for thresholds; `None` means `1 / bits_per_feature`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_scale: Option<f64>,
    /// Minimum gap used when converting collapsed thresholds to a learnable plan.
    pub min_gap: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Uniform,
            bits_per_feature: 3,
            sharing: Sharing::Global,
            rho: 0.001,
            feature_scaling: false,
            noise: false,
            lr_scale: None,
            min_gap: 1e-6,
        }
    }
}

impl EncoderConfig {
    pub fn effective_lr_scale(&self) -> f64 {
        self.lr_scale.unwrap_or(1.0 / self.bits_per_feature as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Csv,
    Synth,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion" => Ok(DatasetKind::Fashion),
            "csv" => Ok(DatasetKind::Csv),
            "synth" => Ok(DatasetKind::Synth),
            _ => Err(Error::Config(format!("unknown dataset {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: DatasetKind,
    /// Seed of synthetic generation and of the train/validation split.
    pub seed: u64,
    /// IDX directory (mnist/fashion) or CSV file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub label_column: String,
    /// Use only the first `limit` samples of the source, before splitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    pub synth_samples: usize,
    pub synth_features: usize,
    pub synth_classes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synth,
            seed: 0,
            path: None,
            label_column: "label".into(),
            limit: None,
            synth_samples: 10_000,
            synth_features: 8,
            synth_classes: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub seed: u64,
    pub classes: usize,
    /// GroupSum temperature: class score = group sum / `tau_gs`.
    pub tau_gs: f64,
    /// Each declared layer is repeated this many times in sequence.
    pub depth_factor: usize,
    /// Pass-through probability of residual initialization.
    pub residual_p: f64,
    pub epochs: usize,
    /// Metrics cadence in optimizer steps; 0 evaluates once per epoch.
    pub eval_every: u64,
    pub layers: Vec<LayerConfig>,
    pub encoder: EncoderConfig,
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 2,
            tau_gs: 1.0,
            depth_factor: 1,
            residual_p: 0.95,
            epochs: 1,
            eval_every: 0,
            layers: vec![LayerConfig::new(64, 2, Parametrization::Warp, ForwardMode::Soft)],
            encoder: EncoderConfig::default(),
            optimizer: OptimizerConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml_string().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Declared layers with the depth factor applied.
    pub fn expanded_layers(&self) -> Vec<LayerConfig> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.clone(), self.depth_factor.max(1)))
            .collect()
    }

    /// Sets every layer's forward mode.
    pub fn set_mode(&mut self, mode: ForwardMode) {
        self.layers.iter_mut().for_each(|l| l.mode = mode);
    }

    /// Sets every layer's arity; automatic temperatures follow.
    pub fn set_arity(&mut self, arity: usize) {
        self.layers.iter_mut().for_each(|l| l.arity = arity);
    }

    /// Mode label for metrics: the shared mode, or `mixed`.
    pub fn mode_label(&self) -> String {
        match self.layers.first() {
            Some(first) if self.layers.iter().all(|l| l.mode == first.mode) => first.mode.name().into(),
            Some(_) => "mixed".into(),
            None => "none".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad(format!("need at least two classes, got {}", self.classes));
        }
        if !(self.tau_gs > 0.0) {
            return bad(format!("tau_gs must be positive, got {}", self.tau_gs));
        }
        if self.layers.is_empty() {
            return bad("no layers declared".into());
        }
        if self.depth_factor == 0 {
            return bad("depth_factor must be at least 1".into());
        }
        if self.encoder.bits_per_feature == 0 {
            return bad("bits_per_feature must be at least 1".into());
        }
        if !(self.encoder.rho > 0.0) {
            return bad(format!("encoder rho must be positive, got {}", self.encoder.rho));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || o.batch_size == 0 || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("optimizer needs lr > 0, batch_size > 0 and betas in [0, 1)".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.neurons == 0 {
                return bad(format!("layer {i}: zero neurons"));
            }
            if l.arity == 0 || l.arity > crate::hadamard::MAX_ARITY {
                return bad(format!("layer {i}: arity {} outside 1..={}", l.arity, crate::hadamard::MAX_ARITY));
            }
            if l.kind == Parametrization::Dlgn && l.arity != 2 {
                return bad(format!("layer {i}: DLGN supports arity 2 only"));
            }
            if !(l.effective_tau() > 0.0) {
                return bad(format!("layer {i}: temperature must be positive"));
            }
        }
        Ok(())
    }
}
