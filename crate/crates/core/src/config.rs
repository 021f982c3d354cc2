//! Loss weights, training configuration and architecture widths.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the generator objective terms, plus the attention gain `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_rec: f64,
    pub lambda_gan: f64,
    pub lambda_path: f64,
    pub lambda_bone: f64,
    pub lambda_kl: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rec: 5.0,
            lambda_gan: 1.0,
            lambda_path: 0.1,
            lambda_bone: 5.0,
            lambda_kl: 0.05,
            alpha: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_rec: 0.0,
            lambda_gan: 0.0,
            lambda_path: 0.0,
            lambda_bone: 0.0,
            lambda_kl: 0.0,
            alpha: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_rec", self.lambda_rec),
            ("lambda_gan", self.lambda_gan),
            ("lambda_path", self.lambda_path),
            ("lambda_bone", self.lambda_bone),
            ("lambda_kl", self.lambda_kl),
            ("alpha", self.alpha),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Which regularizers are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Neither path nor contour regularization.
    A,
    /// Path regularization only.
    B,
    /// Path and contour regularization.
    C,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::A => "A",
            Setting::B => "B",
            Setting::C => "C",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Setting::A),
            "B" | "b" => Ok(Setting::B),
            "C" | "c" => Ok(Setting::C),
            other => Err(Error::InvalidConfig(format!(
                "unknown setting `{other}` (expected A, B or C)"
            ))),
        }
    }
}

/// Source of the bone-contour target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourMode {
    /// Trainable contour network applied to the source image.
    Learned,
    /// Sobel edges of the source image, no trainable network.
    SobelInput,
    /// No contour term.
    None,
}

impl fmt::Display for ContourMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContourMode::Learned => "learned",
            ContourMode::SobelInput => "sobel_input",
            ContourMode::None => "none",
        })
    }
}

impl FromStr for ContourMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "learned" => Ok(ContourMode::Learned),
            "sobel_input" | "sobel-input" | "sobel" => Ok(ContourMode::SobelInput),
            "none" => Ok(ContourMode::None),
            other => Err(Error::InvalidConfig(format!(
                "unknown contour mode `{other}` (expected learned, sobel_input or none)"
            ))),
        }
    }
}

/// Channel widths of the four networks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// One entry per stride-2 encoder stage; the decoder has `len + 1` blocks.
    pub encoder_channels: Vec<usize>,
    pub residual_blocks: usize,
    pub latent_channels: usize,
    pub time_embed_dim: usize,
    /// One entry per stride-2 discriminator stage.
    pub disc_channels: Vec<usize>,
    pub contour_channels: usize,
    pub contour_blocks: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl ArchConfig {
    pub fn standard() -> Self {
        Self {
            encoder_channels: vec![32, 64, 128],
            residual_blocks: 2,
            latent_channels: 64,
            time_embed_dim: 64,
            disc_channels: vec![64, 128, 256, 512],
            contour_channels: 32,
            contour_blocks: 6,
        }
    }

    /// Same topology at a quarter of the width, sized for CPU-only runs.
    pub fn compact() -> Self {
        Self {
            encoder_channels: vec![8, 16, 32],
            residual_blocks: 2,
            latent_channels: 16,
            time_embed_dim: 64,
            disc_channels: vec![16, 32, 64, 128],
            contour_channels: 8,
            contour_blocks: 6,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim() {
            "standard" => Ok(Self::standard()),
            "compact" => Ok(Self::compact()),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture preset `{other}`"
            ))),
        }
    }

    /// Number of stride-2 encoder stages.
    pub fn downsamplings(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Number of decoder blocks, which is also the number of layer taps.
    pub fn decoder_blocks(&self) -> usize {
        self.encoder_channels.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let nonzero = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::InvalidConfig(format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        };
        if self.encoder_channels.is_empty() || self.disc_channels.is_empty() {
            return Err(Error::InvalidConfig(
                "encoder and discriminator need at least one stage".into(),
            ));
        }
        for &c in self.encoder_channels.iter().chain(&self.disc_channels) {
            nonzero("channel width", c)?;
        }
        nonzero("latent_channels", self.latent_channels)?;
        nonzero("contour_channels", self.contour_channels)?;
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(Error::InvalidConfig(
                "time_embed_dim must be even and >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub setting: Setting,
    pub multiscale: bool,
    pub use_attention_map: bool,
    pub contour_mode: ContourMode,
    pub weights: LossWeights,
    /// Validation period in steps; 0 validates only at the end.
    pub eval_every: u64,
    /// Eval pairs used for validation PSNR; 0 uses all of them.
    pub eval_images: usize,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.0e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            h_min: 0.1,
            h_max: 0.2,
            steps: 3000,
            batch_size: 8,
            seed: 0,
            setting: Setting::C,
            multiscale: true,
            use_attention_map: true,
            contour_mode: ContourMode::Learned,
            weights: LossWeights::default(),
            eval_every: 500,
            eval_images: 0,
            arch: ArchConfig::standard(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_min <= self.h_max && self.h_max < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < h_min <= h_max < 1, got h_min={} h_max={}",
                self.h_min, self.h_max
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        self.weights.validate()?;
        self.arch.validate()
    }

    /// Whether a contour target exists at all (setting C with a contour source).
    pub fn contour_active(&self) -> bool {
        self.setting == Setting::C && self.contour_mode != ContourMode::None
    }

    /// Whether the contour network is trained.
    pub fn learned_contour(&self) -> bool {
        self.contour_active() && self.contour_mode == ContourMode::Learned
    }

    /// Weights after the ablation switches.
    ///
    /// Setting A drops path and bone, setting B drops bone, and the attention
    /// gain is zero whenever there is no contour to attend to or the map is
    /// switched off.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.setting == Setting::A {
            w.lambda_path = 0.0;
        }
        if !self.contour_active() {
            w.lambda_bone = 0.0;
        }
        if !self.contour_active() || !self.use_attention_map {
            w.alpha = 0.0;
        }
        w
    }

    /// Sets one field from its `key = value` spelling.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{value}`")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::InvalidConfig(format!(
                    "`{key}`: expected a boolean, got `{value}`"
                ))),
            }
        }
        fn list(key: &str, value: &str) -> Result<Vec<usize>> {
            value.split(',').map(|v| num(key, v.trim())).collect()
        }
        let v = value.trim();
        match key.trim() {
            "learning_rate" => self.learning_rate = num(key, v)?,
            "adam_beta1" => self.adam_beta1 = num(key, v)?,
            "adam_beta2" => self.adam_beta2 = num(key, v)?,
            "h_min" => self.h_min = num(key, v)?,
            "h_max" => self.h_max = num(key, v)?,
            "steps" => self.steps = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "setting" => self.setting = v.parse()?,
            "multiscale" => self.multiscale = flag(key, v)?,
            "use_attention_map" => self.use_attention_map = flag(key, v)?,
            "contour_mode" => self.contour_mode = v.parse()?,
            "lambda_rec" => self.weights.lambda_rec = num(key, v)?,
            "lambda_gan" => self.weights.lambda_gan = num(key, v)?,
            "lambda_path" => self.weights.lambda_path = num(key, v)?,
            "lambda_bone" => self.weights.lambda_bone = num(key, v)?,
            "lambda_kl" => self.weights.lambda_kl = num(key, v)?,
            "alpha" => self.weights.alpha = num(key, v)?,
            "eval_every" => self.eval_every = num(key, v)?,
            "eval_images" => self.eval_images = num(key, v)?,
            "arch" => self.arch = ArchConfig::preset(v)?,
            "encoder_channels" => self.arch.encoder_channels = list(key, v)?,
            "residual_blocks" => self.arch.residual_blocks = num(key, v)?,
            "latent_channels" => self.arch.latent_channels = num(key, v)?,
            "time_embed_dim" => self.arch.time_embed_dim = num(key, v)?,
            "disc_channels" => self.arch.disc_channels = list(key, v)?,
            "contour_channels" => self.arch.contour_channels = num(key, v)?,
            "contour_blocks" => self.arch.contour_blocks = num(key, v)?,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Defaults overridden by a `key = value` file.
    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::default();
        cfg.apply_kv(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
