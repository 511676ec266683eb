use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{BatchMoments, Conv3dSpec, Graph, Mode, Var};
use crate::error::{Error, Result};
use crate::model::blocks::{Block, ResidualModule, Rtm};
use crate::model::config::ModelConfig;
use crate::model::params::{Builder, ConvLayer, Forward, NormId, NormLayer, ParamId, ParamSet};
use crate::tensor::{Parameter, Tensor};

pub const STAGE_NAMES: [&str; 5] = ["conv1", "conv2", "conv3", "conv4", "conv5"];

/// Channels and `(T, H, W)` extent at the output of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShape {
    pub channels: usize,
    pub dims: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub name: &'static str,
    pub blocks: Vec<Block>,
}

/// Instantiated network: stem, four residual stages, global average pooling
/// and a single-output linear head.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    stem_conv: ConvLayer,
    stem_bn: NormLayer,
    stages: Vec<Stage>,
    fc_weight: ParamId,
    fc_bias: ParamId,
}

pub struct ForwardOutput {
    /// `[N, 1]`
    pub prediction: Var,
    /// Parameter leaves, index-aligned with `Model::params.params`.
    pub vars: Vec<Var>,
    pub moments: Vec<(NormId, BatchMoments)>,
    /// Realized outputs of conv1..conv5.
    pub stage_outputs: Vec<Var>,
}

impl Model {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let widths = config.widths();
        let mut params = ParamSet::default();
        let mut b = Builder::new(&mut params, config.seed);

        let stem_conv = ConvLayer::new(
            &mut b,
            "conv1.conv",
            1,
            widths[0],
            [3, 7, 7],
            Conv3dSpec::new([1, 2, 2], [1, 3, 3]),
        );
        let stem_bn = NormLayer::new(&mut b, "conv1.bn", widths[0]);
        let mut dims = stem_conv.output_dims([config.in_frames, config.in_height, config.in_width])?;

        let mut stages = Vec::with_capacity(4);
        let mut c_in = widths[0];
        for (s, &name) in STAGE_NAMES.iter().enumerate().skip(1) {
            let c_out = widths[s];
            let first_stride = if s == 1 { 1 } else { 2 };
            let mut blocks = Vec::with_capacity(2);
            for i in 0..2 {
                let stride = if i == 0 { first_stride } else { 1 };
                let block_in = if i == 0 { c_in } else { c_out };
                let block_name = format!("{name}.{i}");
                let block = if s == 4 && config.variant.uses_attention() {
                    let out_dims = dims.map(|d| (d + 2 - 3) / stride + 1);
                    Block::Transformer(Rtm::new(
                        &mut b,
                        &block_name,
                        block_in,
                        c_out,
                        stride,
                        out_dims,
                        config.num_heads,
                        config.variant.temporal_encoding(),
                    )?)
                } else {
                    Block::Residual(ResidualModule::new(&mut b, &block_name, block_in, c_out, stride))
                };
                dims = block.entry_conv().output_dims(dims)?;
                blocks.push(block);
            }
            stages.push(Stage { name, blocks });
            c_in = c_out;
        }

        let fc_weight = b.uniform("fc.weight".into(), &[1, widths[4]], widths[4]);
        let fc_bias = b.uniform("fc.bias".into(), &[1], widths[4]);
        Ok(Model {
            config,
            params,
            stem_conv,
            stem_bn,
            stages,
            fc_weight,
            fc_bias,
        })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Stage output shapes derived from the layer geometry alone, without
    /// running the network.
    pub fn stage_shapes(&self) -> Result<Vec<StageShape>> {
        let c = &self.config;
        let mut dims = self.stem_conv.output_dims([c.in_frames, c.in_height, c.in_width])?;
        let mut out = vec![StageShape {
            channels: self.stem_conv.out_channels,
            dims,
        }];
        for stage in &self.stages {
            let mut channels = 0;
            for block in &stage.blocks {
                dims = block.entry_conv().output_dims(dims)?;
                channels = block.entry_conv().out_channels;
            }
            out.push(StageShape { channels, dims });
        }
        Ok(out)
    }

    /// Exact number of trainable scalars.
    pub fn count_parameters(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn forward(&self, g: &mut Graph, input: Var, mode: Mode) -> Result<ForwardOutput> {
        self.forward_with(&self.params.params, g, input, mode)
    }

    /// Forward pass with parameter values taken from `params`, which must
    /// have the same layout as `self.params.params`.
    pub fn forward_with(
        &self,
        params: &[Parameter],
        g: &mut Graph,
        input: Var,
        mode: Mode,
    ) -> Result<ForwardOutput> {
        let c = &self.config;
        let want = [g.shape(input).first().copied().unwrap_or(0), 1, c.in_frames, c.in_height, c.in_width];
        if g.shape(input).len() != 5 || g.shape(input)[1..] != want[1..] || want[0] == 0 {
            return Err(Error::shape("model input", g.shape(input), &want));
        }
        if params.len() != self.params.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                self.params.params.len(),
                params.len()
            )));
        }
        let mut f = Forward::bind_with(g, params, &self.params.norms, mode, c.bn_eps);
        let mut stage_outputs = Vec::with_capacity(5);
        let x = self.stem_conv.forward(&mut f, input)?;
        let x = self.stem_bn.forward(&mut f, x)?;
        let mut x = f.graph.relu(x);
        stage_outputs.push(x);
        for stage in &self.stages {
            for block in &stage.blocks {
                x = block.forward(&mut f, x)?;
            }
            stage_outputs.push(x);
        }
        let pooled = f.graph.global_avg_pool(x)?;
        let (w, b) = (f.var(self.fc_weight), f.var(self.fc_bias));
        let prediction = f.graph.linear(pooled, w, Some(b))?;
        Ok(ForwardOutput {
            prediction,
            vars: f.vars,
            moments: f.moments,
            stage_outputs,
        })
    }

    /// Eval-mode prediction for a batch `[N, 1, T0, H0, W0]`; returns `[N, 1]`.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let out = self.forward(&mut g, x, Mode::Eval)?;
        Ok(g.value(out.prediction).clone())
    }

    /// Train-mode forward of `input` whose only effect is folding its batch
    /// statistics into the running buffers.
    pub fn update_statistics(&mut self, input: &Tensor) -> Result<()> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let out = self.forward(&mut g, x, Mode::Train)?;
        self.apply_moments(&out.moments);
        Ok(())
    }

    /// Folds train-mode batch statistics into the running buffers.
    pub fn apply_moments(&mut self, moments: &[(NormId, BatchMoments)]) {
        self.params.apply_moments(moments, self.config.bn_momentum);
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.params.iter().map(|p| p.name.clone()).collect()
    }
}
