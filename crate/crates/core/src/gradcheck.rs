//! Central-difference verification of analytic gradients.
//!
//! For each checked scalar θ the numeric derivative is
//! `(f(θ + ε) − f(θ − ε)) / 2ε`, and the mismatch against the analytic value
//! `a` is reported as `|a − n| / max(|a|, |n|, floor)`. The floor keeps
//! near-zero gradients, where `f32` round-off dominates both estimates, from
//! producing meaningless ratios.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;

use crate::autodiff::{Graph, Mode, Var};
use crate::model::Model;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Perturbation size; `[1e-4, 1e-2]` is the useful range for `f32`.
    pub eps: f32,
    /// Maximum accepted relative error.
    pub tol: f32,
    /// Lower bound of the relative-error denominator.
    pub floor: f32,
    /// Check a uniform random subset of this many scalars instead of all.
    pub sample: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-2,
            tol: 1e-2,
            floor: 1e-2,
            sample: None,
            seed: 0,
        }
    }
}

/// One checked scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryCheck {
    pub param: usize,
    pub index: usize,
    pub analytic: f32,
    pub numeric: f32,
    pub rel_error: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub entries: Vec<EntryCheck>,
    pub tol: f32,
    /// Candidates rejected because a perturbation crossed a ReLU kink.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f32 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f32::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.rel_error < self.tol)
    }

    /// The entry with the largest relative error.
    pub fn worst(&self) -> Option<&EntryCheck> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn worst_param_name(&self) -> Option<&str> {
        self.worst().map(|e| self.params[e.param].name.as_str())
    }
}

pub fn relative_error(analytic: f32, numeric: f32, floor: f32) -> f32 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares the gradient buffers already stored in `params` with central
/// differences of `loss`. Parameters without a gradient buffer are treated as
/// having zero gradient. Every perturbation is undone before returning.
pub fn finite_difference_check<F, L>(
    params: &mut [Parameter],
    mut loss: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Parameter]) -> Result<L>,
    L: Into<f64>,
{
    run_check(params, |p| Ok((loss(p)?.into(), None)), opts)
}

/// As [`finite_difference_check`], but `loss` also returns the ReLU sign
/// pattern of its evaluation (see [`Graph::relu_pattern`]). A candidate
/// whose `θ ± ε` evaluations change the pattern straddles a kink, where the
/// derivative is not defined; it is skipped and another one is drawn.
pub fn finite_difference_check_smooth<F>(
    params: &mut [Parameter],
    loss: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Parameter]) -> Result<(f64, Vec<u64>)>,
{
    let mut loss = loss;
    run_check(params, |p| loss(p).map(|(v, k)| (v, Some(k))), opts)
}

fn run_check<F>(params: &mut [Parameter], mut loss: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&[Parameter]) -> Result<(f64, Option<Vec<u64>>)>,
{
    if !(opts.eps > 0.0) {
        return Err(Error::invalid("finite-difference eps must be positive"));
    }
    let sizes: Vec<usize> = params.iter().map(|p| p.tensor.numel()).collect();
    let total: usize = sizes.iter().sum();
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for s in &sizes {
        offsets.push(acc);
        acc += s;
    }

    let base = loss(params)?.1;
    let wanted = opts.sample.map_or(total, |n| n.min(total));
    // Candidate order: a uniform random permutation prefix when sampling.
    let candidates: Vec<usize> = match opts.sample {
        Some(n) if n < total => {
            let pool = if base.is_some() { (n * 50).min(total) } else { n };
            let mut c = index::sample(&mut rng::seeded(opts.seed), total, pool).into_vec();
            if base.is_none() {
                c.sort_unstable();
            }
            c
        }
        _ => (0..total).collect(),
    };

    let mut entries = Vec::with_capacity(wanted);
    let mut skipped = 0;
    for f in candidates {
        if entries.len() == wanted {
            break;
        }
        let param = offsets.partition_point(|&o| o <= f) - 1;
        let index = f - offsets[param];
        let analytic = params[param].tensor.grad().map_or(0.0, |g| g[index]);
        let original = params[param].tensor.data()[index];

        params[param].tensor.data_mut()[index] = original + opts.eps;
        let plus = loss(params);
        params[param].tensor.data_mut()[index] = original - opts.eps;
        let minus = loss(params);
        params[param].tensor.data_mut()[index] = original;
        let ((plus, kp), (minus, km)) = (plus?, minus?);
        if base.is_some() && (kp != base || km != base) {
            skipped += 1;
            continue;
        }

        let numeric = ((plus - minus) / (2.0 * opts.eps as f64)) as f32;
        entries.push(EntryCheck {
            param,
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, opts.floor),
        });
    }
    entries.sort_by_key(|e| (e.param, e.index));

    let params_report = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mine = entries.iter().filter(|e| e.param == i);
            ParamCheck {
                name: p.name.clone(),
                checked: mine.clone().count(),
                max_rel_error: mine.map(|e| e.rel_error).fold(0.0, f32::max),
            }
        })
        .collect();
    Ok(GradCheckReport {
        params: params_report,
        entries,
        tol: opts.tol,
        skipped,
    })
}

/// Populates the gradients of `params` by one forward/backward pass of
/// `build`, replacing whatever was stored before. Returns the loss.
pub fn analytic_gradients<F>(params: &mut [Parameter], build: &F) -> Result<f32>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(&p.tensor)).collect();
    let loss = build(&mut g, &vars)?;
    let value = g.value(loss).data()[0];
    g.backward(loss)?;
    for (p, v) in params.iter_mut().zip(&vars) {
        p.tensor.clear_grad();
        if let Some(grad) = g.grad(*v) {
            p.tensor.accumulate_grad(grad)?;
        }
    }
    Ok(value)
}

/// Evaluates `build` on `params` without recording gradients.
pub fn evaluate<F>(params: &[Parameter], build: &F) -> Result<f32>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.constant(p.tensor.clone())).collect();
    let loss = build(&mut g, &vars)?;
    Ok(g.value(loss).data()[0])
}

/// Gradient check of a graph-building function: analytic gradients from the
/// backward pass versus central differences of the forward pass.
pub fn check_graph<F>(
    params: &mut [Parameter],
    build: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    analytic_gradients(params, &build)?;
    finite_difference_check(params, |p| evaluate(p, &build), opts)
}

/// Gradient check of a whole network under the MSE loss against `target`.
/// The finite-difference side evaluates the loss in `f64` from the `f32`
/// predictions and skips candidates whose perturbation crosses a ReLU kink.
/// The model's own parameters are left untouched.
pub fn check_model(
    model: &Model,
    input: &Tensor,
    target: &Tensor,
    mode: Mode,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut params = model.params.params.clone();
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let y = g.constant(target.clone());
    let out = model.forward_with(&params, &mut g, x, mode)?;
    let l = g.mse_loss(out.prediction, y)?;
    g.backward(l)?;
    for (p, v) in params.iter_mut().zip(&out.vars) {
        p.tensor.clear_grad();
        if let Some(grad) = g.grad(*v) {
            p.tensor.accumulate_grad(grad)?;
        }
    }
    drop(g);

    let loss = |params: &[Parameter]| -> Result<(f64, Vec<u64>)> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let out = model.forward_with(params, &mut g, x, mode)?;
        let pred = g.value(out.prediction).data();
        let sq: f64 = pred
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p as f64 - t as f64;
                d * d
            })
            .sum();
        Ok((sq / pred.len() as f64, g.relu_pattern()))
    };
    finite_difference_check_smooth(&mut params, loss, opts)
}
