//! Differentiable layer graph.
//!
//! Layers own their parameters and forward caches; `forward` records what
//! `backward` needs, and parameter gradients accumulate into each [`Param`].
//! Three execution modes cover the two-stage binarization schedule plus a
//! real-valued surrogate used only by finite-difference tests:
//!
//! - [`BinMode::StageI`]: binary activations (sign STE), real latent weights.
//! - [`BinMode::StageII`]: binary activations and binarized weights.
//! - [`BinMode::Surrogate`]: sign replaced by identity and winner-take-all
//!   gating replaced by softmax mixing, making every layer smooth.

mod block;
mod conv;
mod ebconv;
pub mod gemm;
mod gate;
mod layers;
mod mixup;
mod ste;

pub use block::{BinaryBlock, ConvUnit, DownsampleBlock, DownsampleVariant, SkipPath};
pub use conv::{col2im_add, im2col_sample, Conv2d};
pub use ebconv::{BinaryConv2d, ConvMode, ExpertBank, ExpertBinaryConv2d};
pub use gate::{aggregate_channel_means, gate_backward, gate_forward, GateState};
pub use layers::{
    softmax_xent, AvgPool2d, BatchNorm2d, GlobalAvgPool, Linear, MaxPool2d, PReLU,
};
pub use mixup::{mixup_apply, MixedLabels};
pub use ste::{sign_ste_backward, sign_ste_forward, weight_binarize_ste};

use crate::bitcore::{DenseTensor, Shape4};
use crate::error::{Error, Result};

/// Numeric precision of the inner GEMM loops. Training runs are fine at f32;
/// gradient checks and packed-equivalence tests require exact f64.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Exact,
    Fast32,
}

/// Binarization mode of the whole graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinMode {
    /// Real activations and weights, softmax-mixed experts. Test-only.
    Surrogate,
    /// Binary activations, real latent weights (training stage I).
    StageI,
    /// Binary activations and binarized weights (training stage II).
    StageII,
}

impl BinMode {
    pub fn binarizes_weights(&self) -> bool {
        matches!(self, BinMode::StageII)
    }
}

/// Per-pass execution context threaded through `forward`.
#[derive(Clone, Copy, Debug)]
pub struct Context {
    pub mode: BinMode,
    /// Batch statistics + caches when true; running statistics otherwise.
    pub training: bool,
    pub precision: Precision,
    /// Route binary convolutions through the bit-packed kernel
    /// (stage II inference only).
    pub packed: bool,
}

impl Context {
    pub fn train(mode: BinMode) -> Self {
        Context {
            mode,
            training: true,
            precision: Precision::Exact,
            packed: false,
        }
    }

    pub fn eval(mode: BinMode) -> Self {
        Context {
            mode,
            training: false,
            precision: Precision::Exact,
            packed: false,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_packed(mut self, packed: bool) -> Self {
        self.packed = packed;
        self
    }
}

/// How a parameter behaves under the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    /// Latent binary weight: clamped to [−1, 1] after every optimizer step.
    LatentBinary,
}

/// A named, flat parameter tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
    pub kind: ParamKind,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>, kind: ParamKind) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(len, data.len(), "param shape/buffer mismatch");
        Param {
            name: name.into(),
            shape,
            grad: vec![0.0; data.len()],
            data,
            kind,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Node kinds, used to introspect built graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    RealConv,
    BConv,
    EbConv,
    Bn,
    PRelu,
    MaxPool,
    AvgPool,
    Linear,
    Add,
    GroupMix,
    Downsample,
    Block,
}

/// Commands for batch-norm statistics recalibration (one aggregate pass with
/// momentum 0 after expert replication).
#[derive(Clone, Copy, Debug)]
pub enum BnCalib {
    Begin,
    Finish,
}

/// A differentiable graph node. `backward` consumes the cache left by the
/// most recent `forward` call.
pub trait Layer {
    fn forward(&mut self, x: &DenseTensor, ctx: &Context) -> Result<DenseTensor>;
    fn backward(&mut self, dy: &DenseTensor) -> Result<DenseTensor>;
    fn out_shape(&self, input: Shape4) -> Result<Shape4>;
    fn kind(&self) -> LayerKind;

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}

    /// Recursively report this node and any children.
    fn collect_kinds(&self, out: &mut Vec<LayerKind>) {
        out.push(self.kind());
    }

    /// Batch-norm calibration plumbing; composites delegate to children.
    fn bn_calibration(&mut self, _cmd: BnCalib) {}

    /// Copy expert 0 over all expert slots and reinitialize the gating
    /// projection; no-op for layers without experts.
    fn replicate_experts(&mut self, _rng: &mut rand_chacha::ChaCha8Rng) {}

    /// Reset per-expert routing counters.
    fn reset_gate_stats(&mut self) {}

    /// Append (layer name, per-expert routing counts) for expert layers.
    fn collect_gate_stats(&self, _out: &mut Vec<(String, Vec<u64>)>) {}

    /// Re-derive binary-conv scales from the latent weights
    /// (per-channel mean absolute value); used at stage-II entry.
    fn reinit_scales_from_latent(&mut self) {}

    fn clear_cache(&mut self) {}
}

/// A sequential stack of layers. Skips and branches live inside composite
/// layers, so the top level is a plain chain.
pub struct Network {
    pub layers: Vec<Box<dyn Layer + Send>>,
    pub input_shape: Shape4,
}

impl Network {
    pub fn new(input_shape: Shape4) -> Self {
        Network {
            layers: Vec::new(),
            input_shape,
        }
    }

    pub fn push(&mut self, layer: Box<dyn Layer + Send>) {
        self.layers.push(layer);
    }

    pub fn forward(&mut self, x: &DenseTensor, ctx: &Context) -> Result<DenseTensor> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, ctx)?;
        }
        Ok(cur)
    }

    pub fn backward(&mut self, dy: &DenseTensor) -> Result<DenseTensor> {
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.data.len());
        n
    }

    pub fn collect_kinds(&self) -> Vec<LayerKind> {
        let mut out = Vec::new();
        for layer in &self.layers {
            layer.collect_kinds(&mut out);
        }
        out
    }

    pub fn out_shape(&self) -> Result<Shape4> {
        let mut s = self.input_shape;
        for layer in &self.layers {
            s = layer.out_shape(s)?;
        }
        Ok(s)
    }

    pub fn bn_calibration(&mut self, cmd: BnCalib) {
        for layer in &mut self.layers {
            layer.bn_calibration(cmd);
        }
    }

    pub fn replicate_experts(&mut self, rng: &mut rand_chacha::ChaCha8Rng) {
        for layer in &mut self.layers {
            layer.replicate_experts(rng);
        }
    }

    pub fn reset_gate_stats(&mut self) {
        for layer in &mut self.layers {
            layer.reset_gate_stats();
        }
    }

    pub fn gate_stats(&self) -> Vec<(String, Vec<u64>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            layer.collect_gate_stats(&mut out);
        }
        out
    }

    pub fn reinit_scales_from_latent(&mut self) {
        for layer in &mut self.layers {
            layer.reinit_scales_from_latent();
        }
    }

    pub fn clear_caches(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }
}

pub(crate) fn grad_tensor(shape: Shape4, values: Vec<f64>) -> DenseTensor {
    DenseTensor {
        shape,
        values,
        grad: None,
    }
}

pub(crate) fn expect_shape(actual: Shape4, expected: Shape4, who: &str) -> Result<()> {
    if actual != expected {
        return Err(Error::InvalidShape(format!(
            "{who}: expected {expected}, got {actual}"
        )));
    }
    Ok(())
}
