use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// The three ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain 3D ResNet-18.
    Base,
    /// Stage 5 built from Residual Transformer Modules with height and width
    /// positional encodings.
    Rtm,
    /// As [`Variant::Rtm`], plus the temporal positional encoding.
    RtmTpe,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::Rtm, Variant::RtmTpe];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Rtm => "rtm",
            Variant::RtmTpe => "rtm_tpe",
        }
    }

    pub fn uses_attention(self) -> bool {
        !matches!(self, Variant::Base)
    }

    pub fn temporal_encoding(self) -> bool {
        matches!(self, Variant::RtmTpe)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "rtm" => Ok(Variant::Rtm),
            "rtm_tpe" => Ok(Variant::RtmTpe),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected base, rtm or rtm_tpe)"
            ))),
        }
    }
}

/// Positive rational channel scale, e.g. `1/8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WidthMultiplier {
    pub num: u32,
    pub den: u32,
}

impl WidthMultiplier {
    pub const ONE: WidthMultiplier = WidthMultiplier { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("width multiplier {num}/{den} must be positive")));
        }
        Ok(WidthMultiplier { num, den })
    }

    /// `ceil(channels · num / den)`, at least 1.
    pub fn scale(self, channels: usize) -> usize {
        let scaled = (channels * self.num as usize).div_ceil(self.den as usize);
        scaled.max(1)
    }
}

impl fmt::Display for WidthMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthMultiplier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse width multiplier {s:?}"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        WidthMultiplier::new(num, den)
    }
}

/// Channel widths of the stem and stages conv2..conv5 at full width.
pub const BASE_WIDTHS: [usize; 5] = [64, 64, 128, 256, 512];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub in_frames: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub num_heads: usize,
    pub width: WidthMultiplier,
    pub bn_eps: f32,
    pub bn_momentum: f32,
    /// Seed of the parameter initializer.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::RtmTpe,
            in_frames: 16,
            in_height: 64,
            in_width: 64,
            num_heads: 4,
            width: WidthMultiplier::ONE,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for tests and quick runs: 8×16×16 input at
    /// one eighth of the full width.
    pub fn desk(variant: Variant) -> Self {
        ModelConfig {
            variant,
            in_frames: 8,
            in_height: 16,
            in_width: 16,
            width: WidthMultiplier { num: 1, den: 8 },
            ..Default::default()
        }
    }

    /// Stem and stage widths after scaling, each rounded up to a multiple of
    /// `num_heads`.
    pub fn widths(&self) -> [usize; 5] {
        let heads = self.num_heads.max(1);
        BASE_WIDTHS.map(|c| self.width.scale(c).div_ceil(heads) * heads)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.in_frames == 0 || !self.in_frames.is_multiple_of(8) {
            return fail(format!("in_frames {} must be a positive multiple of 8", self.in_frames));
        }
        if self.in_height == 0 || !self.in_height.is_multiple_of(16) {
            return fail(format!("in_height {} must be a positive multiple of 16", self.in_height));
        }
        if self.in_width == 0 || !self.in_width.is_multiple_of(16) {
            return fail(format!("in_width {} must be a positive multiple of 16", self.in_width));
        }
        if self.num_heads == 0 {
            return fail("num_heads must be positive".into());
        }
        if self.width.num == 0 || self.width.den == 0 {
            return fail(format!("width multiplier {} must be positive", self.width));
        }
        let d = self.widths()[4];
        if !d.is_multiple_of(self.num_heads) {
            return fail(format!("stage-5 width {d} is not divisible by {} heads", self.num_heads));
        }
        if !(self.bn_eps > 0.0) {
            return fail(format!("bn_eps {} must be positive", self.bn_eps));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail(format!("bn_momentum {} must lie in [0, 1]", self.bn_momentum));
        }
        Ok(())
    }

    /// Input shape of one batch item, `[1, T0, H0, W0]`.
    pub fn item_shape(&self) -> [usize; 4] {
        [1, self.in_frames, self.in_height, self.in_width]
    }
}
