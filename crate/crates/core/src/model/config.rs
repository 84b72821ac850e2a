use serde::{Deserialize, Serialize};

use crate::data::CompletionMode;
use crate::error::{Error, Result};
use crate::spatial::PartGrouping;

/// Model size preset. Sets the encoder/decoder depth for a given window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    S,
    Base,
    L,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMode {
    /// Five body-part nodes with a learned adjacency.
    AdaptiveGraph,
    /// Part encoder only, no graph attention.
    Mlp,
    /// One node per joint with the same learned adjacency.
    JointwiseGcn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    Skipped,
    /// Full attention with a kernel-3 convolutional feed-forward.
    VtConv,
    /// Full attention; decoder feed-forward is a strided convolution.
    VtStrided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length T (odd).
    pub frames: usize,
    pub joints: usize,
    /// Skip interval m.
    pub skip: usize,
    /// Part feature channels C.
    pub part_channels: usize,
    /// Token width D.
    pub width: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Weight of the full-sequence loss.
    pub lambda: f64,
    pub variant: Variant,
    pub spatial_mode: SpatialMode,
    pub temporal_mode: TemporalMode,
    pub activation: Activation,
    pub temporal_pos_embedding: bool,
    /// Joint indices of each body part.
    pub grouping: Vec<Vec<usize>>,
    /// Rolling threshold R; `None` picks the default for `frames`.
    pub rolling_threshold: Option<usize>,
    pub completion: CompletionMode,
    /// Kernel and stride of the convolutional baselines.
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Network outputs are multiplied by this to give millimeters.
    pub output_scale_mm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 243,
            joints: 17,
            skip: 3,
            part_channels: 64,
            width: 256,
            heads: 8,
            encoder_layers: 3,
            decoder_layers: 5,
            lambda: 1.0,
            variant: Variant::S,
            spatial_mode: SpatialMode::AdaptiveGraph,
            temporal_mode: TemporalMode::Skipped,
            activation: Activation::Gelu,
            temporal_pos_embedding: true,
            grouping: PartGrouping::human36m().parts().to_vec(),
            rolling_threshold: None,
            completion: CompletionMode::Roll,
            conv_kernel: 3,
            conv_stride: 3,
            output_scale_mm: 1000.0,
        }
    }
}

/// Encoder/decoder depth of a variant at a supported window length.
pub fn preset_layers(variant: Variant, frames: usize) -> Option<(usize, usize)> {
    match (frames, variant) {
        (243, Variant::S) => Some((3, 5)),
        (243, Variant::Base) => Some((4, 5)),
        (243, Variant::L) => Some((8, 5)),
        (81, _) => Some((3, 4)),
        (27, _) => Some((3, 3)),
        _ => None,
    }
}

/// Sequence lengths produced by repeated ceil-division by `factor`.
pub fn reduction_chain(frames: usize, factor: usize, layers: usize) -> Vec<usize> {
    let mut chain = vec![frames];
    let mut t = frames;
    for _ in 0..layers {
        t = t.div_ceil(factor.max(1));
        chain.push(t);
    }
    chain
}

/// Smallest decoder depth that reduces `frames` to one token.
pub fn layers_to_single(frames: usize, factor: usize) -> Option<usize> {
    if factor < 2 {
        return (frames == 1).then_some(0);
    }
    let mut t = frames;
    let mut layers = 0;
    while t > 1 {
        t = t.div_ceil(factor);
        layers += 1;
    }
    Some(layers)
}

impl ModelConfig {
    /// Full-size preset for `variant` at `frames` (243, 81 or 27).
    pub fn preset(variant: Variant, frames: usize) -> Result<Self> {
        let (l1, l2) = preset_layers(variant, frames)
            .ok_or_else(|| Error::config("frames", format!("no preset for {variant:?} at {frames} frames")))?;
        Ok(Self { frames, variant, encoder_layers: l1, decoder_layers: l2, ..Self::default() })
    }

    /// Small configuration for gradient checks and unit tests.
    pub fn tiny() -> Self {
        Self {
            frames: 9,
            joints: 5,
            skip: 3,
            part_channels: 4,
            width: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 2,
            grouping: vec![vec![0, 1], vec![2], vec![3], vec![4]],
            ..Self::default()
        }
    }

    pub fn grouping(&self) -> Result<PartGrouping> {
        PartGrouping::new(self.grouping.clone(), self.joints)
    }

    pub fn head_width(&self) -> usize {
        self.width / self.heads.max(1)
    }

    /// R, defaulting to 30 at 243 frames and round(0.12·T) otherwise.
    pub fn rolling_threshold(&self) -> usize {
        self.rolling_threshold.unwrap_or_else(|| default_rolling_threshold(self.frames))
    }

    /// Temporal reduction factor of one decoder layer.
    pub fn decoder_factor(&self) -> usize {
        match self.temporal_mode {
            TemporalMode::Skipped => self.skip,
            TemporalMode::VtStrided => self.conv_stride,
            TemporalMode::VtConv => 1,
        }
    }

    /// Token counts after each decoder layer.
    pub fn decoder_chain(&self) -> Vec<usize> {
        match self.temporal_mode {
            TemporalMode::VtConv => {
                let mut c = vec![self.frames; self.decoder_layers + 1];
                c.push(1);
                c
            }
            _ => reduction_chain(self.frames, self.decoder_factor(), self.decoder_layers),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frames", self.frames),
            ("joints", self.joints),
            ("skip", self.skip),
            ("part_channels", self.part_channels),
            ("width", self.width),
            ("heads", self.heads),
            ("conv_kernel", self.conv_kernel),
            ("conv_stride", self.conv_stride),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.frames.is_multiple_of(2) {
            return Err(Error::config("frames", format!("window length must be odd, got {}", self.frames)));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::config(
                "heads",
                format!("width {} is not divisible by {} heads", self.width, self.heads),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be finite and non-negative"));
        }
        if !(self.output_scale_mm > 0.0 && self.output_scale_mm.is_finite()) {
            return Err(Error::config("output_scale_mm", "must be positive"));
        }
        self.grouping()?;
        let r = self.rolling_threshold();
        if r > (self.frames - 1) / 2 {
            return Err(Error::config(
                "rolling_threshold",
                format!("R = {r} exceeds (T-1)/2 = {}", (self.frames - 1) / 2),
            ));
        }
        let chain = self.decoder_chain();
        let last = *chain.last().expect("chain is never empty");
        if last != 1 {
            return Err(Error::config(
                "decoder_layers",
                format!(
                    "decoder reduces {} frames to {last} tokens after {} layers (chain {chain:?}), expected 1",
                    self.frames, self.decoder_layers
                ),
            ));
        }
        Ok(())
    }
}

pub fn default_rolling_threshold(frames: usize) -> usize {
    if frames == 243 {
        30
    } else {
        (0.12 * frames as f64).round() as usize
    }
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    /// Random targets drawn per training sequence per epoch.
    pub clips_per_sequence: usize,
    /// Fraction of sequences held out for evaluation.
    pub test_fraction: f64,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    /// Evaluate every n-th target frame of each test sequence.
    pub eval_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 0.95,
            clips_per_sequence: 1,
            test_fraction: 0.2,
            threads: None,
            eval_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.clips_per_sequence == 0 {
            return Err(Error::config("train.clips_per_sequence", "must be at least 1"));
        }
        if self.eval_stride == 0 {
            return Err(Error::config("train.eval_stride", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("train.lr_decay", "must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("train.test_fraction", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Full configuration document: `{"model": {...}, "train": {...}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Parses and validates a JSON document. Parse errors carry the JSON
    /// path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path.is_empty() { ".".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config { field: format!("model.{field}"), reason },
            other => other,
        })?;
        self.train.validate()
    }
}
