//! Video regression network: 3D ResNet-18 with optional attention blocks in
//! the last stage.

mod blocks;
mod config;
mod mhsa;
mod network;
mod params;

pub use blocks::{Block, ResidualModule, Rtm};
pub use config::{ModelConfig, Variant, WidthMultiplier, BASE_WIDTHS};
pub use mhsa::{mhsa3d_forward, positional_sum, positional_sum_tensor, Mhsa3d, MhsaOutput, MhsaVars};
pub use network::{ForwardOutput, Model, Stage, StageShape, STAGE_NAMES};
pub use params::{Builder, ConvLayer, Forward, NormBuffer, NormId, NormLayer, ParamId, ParamSet, Projection};
