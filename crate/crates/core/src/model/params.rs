use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{BatchMoments, Conv3dSpec, Graph, Mode, RunningStats, Var};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormId(pub(crate) usize);

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBuffer {
    pub name: String,
    pub stats: RunningStats,
}

/// Owns every trainable parameter and batch-norm buffer of a network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub params: Vec<Parameter>,
    pub norms: Vec<NormBuffer>,
}

impl ParamSet {
    pub fn add(&mut self, name: String, tensor: Tensor) -> ParamId {
        self.params.push(Parameter::new(name, tensor));
        ParamId(self.params.len() - 1)
    }

    pub fn add_norm(&mut self, name: String, channels: usize) -> NormId {
        self.norms.push(NormBuffer {
            name,
            stats: RunningStats::new(channels),
        });
        NormId(self.norms.len() - 1)
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn norm_mut(&mut self, name: &str) -> Option<&mut NormBuffer> {
        self.norms.iter_mut().find(|n| n.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.clear_grad());
    }

    /// Adds the leaf gradients recorded in `graph` for `vars` (one per
    /// parameter, as returned by binding) into the parameter buffers.
    pub fn accumulate_grads(&mut self, graph: &Graph, vars: &[Var]) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(vars) {
            if let Some(g) = graph.grad(*v) {
                p.tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn apply_moments(&mut self, moments: &[(NormId, BatchMoments)], momentum: f32) {
        for (id, m) in moments {
            self.norms[id.0].stats.update(m, momentum);
        }
    }
}

/// Parameter allocation with the default initialization scheme: weights
/// uniform in `±1/sqrt(fan_in)`, batch-norm γ = 1 and β = 0, positional
/// encodings normal with standard deviation 0.02.
pub struct Builder<'a> {
    pub set: &'a mut ParamSet,
    rng: SeededRng,
}

impl<'a> Builder<'a> {
    pub fn new(set: &'a mut ParamSet, seed: u64) -> Self {
        Builder {
            set,
            rng: rng::seeded(seed),
        }
    }

    pub fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / libm::sqrtf(fan_in as f32);
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound));
        self.set.add(name, t)
    }

    pub fn normal(&mut self, name: String, shape: &[usize], std: f32) -> ParamId {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| std * rng::standard_normal(rng));
        self.set.add(name, t)
    }

    pub fn constant(&mut self, name: String, shape: &[usize], value: f32) -> ParamId {
        self.set.add(name, Tensor::full(shape, value))
    }
}

/// Forward-pass context: the graph being recorded, the parameter leaves,
/// and the batch statistics collected by train-mode batch norms.
pub struct Forward<'g> {
    pub graph: &'g mut Graph,
    pub vars: Vec<Var>,
    norms: &'g [NormBuffer],
    pub mode: Mode,
    eps: f32,
    pub moments: Vec<(NormId, BatchMoments)>,
}

impl<'g> Forward<'g> {
    /// Registers every parameter of `set` as a gradient-tracking leaf.
    pub fn bind(graph: &'g mut Graph, set: &'g ParamSet, mode: Mode, eps: f32) -> Self {
        Self::bind_with(graph, &set.params, &set.norms, mode, eps)
    }

    /// As [`Forward::bind`], but with parameter values taken from `params`
    /// (which must mirror the layout of the owning set).
    pub fn bind_with(
        graph: &'g mut Graph,
        params: &[Parameter],
        norms: &'g [NormBuffer],
        mode: Mode,
        eps: f32,
    ) -> Self {
        let vars = params.iter().map(|p| graph.param(&p.tensor)).collect();
        Forward {
            graph,
            vars,
            norms,
            mode,
            eps,
            moments: Vec::new(),
        }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub spec: Conv3dSpec,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
}

impl ConvLayer {
    /// Bias-free convolution (every convolution here feeds a batch norm).
    pub fn new(
        b: &mut Builder<'_>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        spec: Conv3dSpec,
    ) -> Self {
        let fan_in = in_channels * kernel.iter().product::<usize>();
        let weight = b.uniform(
            format!("{name}.weight"),
            &[out_channels, in_channels, kernel[0], kernel[1], kernel[2]],
            fan_in,
        );
        ConvLayer {
            weight,
            spec,
            in_channels,
            out_channels,
            kernel,
        }
    }

    /// `3×3×3` convolution, padding 1.
    pub fn cube3(b: &mut Builder<'_>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Self {
        Self::new(b, name, c_in, c_out, [3; 3], Conv3dSpec::new([stride; 3], [1; 3]))
    }

    /// `1×1×1` convolution.
    pub fn point(b: &mut Builder<'_>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Self {
        Self::new(b, name, c_in, c_out, [1; 3], Conv3dSpec::new([stride; 3], [0; 3]))
    }

    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<Var> {
        let w = f.var(self.weight);
        f.graph.conv3d(x, w, None, self.spec)
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = crate::autodiff::conv_output_len(
                dims[a],
                self.kernel[a],
                self.spec.stride[a],
                self.spec.padding[a],
            )
            .ok_or_else(|| Error::Config(format!("kernel does not fit input {dims:?}")))?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct NormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: NormId,
}

impl NormLayer {
    pub fn new(b: &mut Builder<'_>, name: &str, channels: usize) -> Self {
        let gamma = b.constant(format!("{name}.gamma"), &[channels], 1.0);
        let beta = b.constant(format!("{name}.beta"), &[channels], 0.0);
        let stats = b.set.add_norm(String::from(name), channels);
        NormLayer { gamma, beta, stats }
    }

    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<Var> {
        let (g, b) = (f.var(self.gamma), f.var(self.beta));
        let running = &f.norms[self.stats.0].stats;
        let (y, moments) = f.graph.batch_norm(x, g, b, running, f.mode, f.eps)?;
        if let Some(m) = moments {
            f.moments.push((self.stats, m));
        }
        Ok(y)
    }
}

/// Skip-path projection used whenever a block changes shape:
/// strided `1×1×1` convolution followed by batch norm.
#[derive(Debug, Clone)]
pub struct Projection {
    pub conv: ConvLayer,
    pub bn: NormLayer,
}

impl Projection {
    pub fn new(b: &mut Builder<'_>, name: &str, c_in: usize, c_out: usize, stride: usize) -> Self {
        Projection {
            conv: ConvLayer::point(b, &format!("{name}.conv"), c_in, c_out, stride),
            bn: NormLayer::new(b, &format!("{name}.bn"), c_out),
        }
    }

    pub fn forward(&self, f: &mut Forward<'_>, x: Var) -> Result<Var> {
        let y = self.conv.forward(f, x)?;
        self.bn.forward(f, y)
    }
}
