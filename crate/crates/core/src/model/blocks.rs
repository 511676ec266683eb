use alloc::format;

use crate::autodiff::Var;
use crate::error::Result;
use crate::model::mhsa::Mhsa3d;
use crate::model::params::{Builder, ConvLayer, Forward, NormLayer, Projection};

/// Two `3×3×3` convolutions with batch norm and a skip connection:
/// `relu(bn2(conv2(relu(bn1(conv1(x))))) + skip(x))`.
#[derive(Debug, Clone)]
pub struct ResidualModule {
    pub conv1: ConvLayer,
    pub bn1: NormLayer,
    pub conv2: ConvLayer,
    pub bn2: NormLayer,
    pub downsample: Option<Projection>,
}

impl ResidualModule {
    pub fn new(b: &mut Builder<'_>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Self {
        let downsample = (stride != 1 || c_in != c_out)
            .then(|| Projection::new(b, &format!("{name}.downsample"), c_in, c_out, stride));
        ResidualModule {
            conv1: ConvLayer::cube3(b, &format!("{name}.conv1"), c_in, c_out, stride),
            bn1: NormLayer::new(b, &format!("{name}.bn1"), c_out),
            conv2: ConvLayer::cube3(b, &format!("{name}.conv2"), c_out, c_out, 1),
            bn2: NormLayer::new(b, &format!("{name}.bn2"), c_out),
            downsample,
        }
    }

    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<Var> {
        let y = self.conv1.forward(f, x)?;
        let y = self.bn1.forward(f, y)?;
        let y = f.graph.relu(y);
        let y = self.conv2.forward(f, y)?;
        let y = self.bn2.forward(f, y)?;
        let skip = match &self.downsample {
            Some(p) => p.forward(f, x)?,
            None => x,
        };
        let y = f.graph.add(y, skip)?;
        Ok(f.graph.relu(y))
    }
}

/// Residual Transformer Module: the second convolution of a residual module
/// replaced by 3D attention,
/// `post_bn(mhsa(relu(bn(conv(x))))) + skip(x)`, with no trailing ReLU.
#[derive(Debug, Clone)]
pub struct Rtm {
    pub conv: ConvLayer,
    pub bn: NormLayer,
    pub mhsa: Mhsa3d,
    pub post_bn: NormLayer,
    pub downsample: Option<Projection>,
}

impl Rtm {
    /// `dims` is the `(T, H, W)` extent after the (possibly strided) conv.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        b: &mut Builder<'_>,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        dims: [usize; 3],
        heads: usize,
        temporal: bool,
    ) -> Result<Self> {
        let downsample = (stride != 1 || c_in != c_out)
            .then(|| Projection::new(b, &format!("{name}.downsample"), c_in, c_out, stride));
        Ok(Rtm {
            conv: ConvLayer::cube3(b, &format!("{name}.conv"), c_in, c_out, stride),
            bn: NormLayer::new(b, &format!("{name}.bn"), c_out),
            mhsa: Mhsa3d::new(b, &format!("{name}.mhsa"), c_out, dims, heads, true, temporal)?,
            post_bn: NormLayer::new(b, &format!("{name}.post_bn"), c_out),
            downsample,
        })
    }

    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<Var> {
        let y = self.conv.forward(f, x)?;
        let y = self.bn.forward(f, y)?;
        let y = f.graph.relu(y);
        let y = self.mhsa.forward(f, y)?.output;
        let y = self.post_bn.forward(f, y)?;
        let skip = match &self.downsample {
            Some(p) => p.forward(f, x)?,
            None => x,
        };
        f.graph.add(y, skip)
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Block {
    Residual(ResidualModule),
    Transformer(Rtm),
}

impl Block {
    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<Var> {
        match self {
            Block::Residual(r) => r.forward(f, x),
            Block::Transformer(r) => r.forward(f, x),
        }
    }

    /// Entry convolution; it alone determines the output extent.
    pub fn entry_conv(&self) -> &ConvLayer {
        match self {
            Block::Residual(r) => &r.conv1,
            Block::Transformer(r) => &r.conv,
        }
    }
}
