//! One Darknet-style convolutional layer: convolution, optional batch
//! normalization, bias and activation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gemm::{
    gemm_3loop, gemm_6loop, gemm_naive, tune_block_sizes, BlockConfig, GemmDims, DEFAULT_UNROLL,
};
use crate::im2col::{conv_output_dims, im2col};
use crate::tensor::{Matrix, Tensor3};
use crate::vla::{TraceSink, Vpu};
use crate::winograd::{conv_winograd, WinogradPlan, WinogradWeights};

/// Slope of the leaky activation for negative inputs.
pub const LEAKY_SLOPE: f32 = 0.1;
/// Default variance epsilon of batch normalization.
pub const BN_EPSILON: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Linear,
    Leaky,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Leaky => "leaky",
        }
    }

    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Linear => x,
            Activation::Leaky if x > 0.0 => x,
            Activation::Leaky => LEAKY_SLOPE * x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "leaky" => Ok(Activation::Leaky),
            other => Err(Error::InvalidSpec(format!("unknown activation `{other}`"))),
        }
    }
}

/// Shape and post-ops of a layer. Weights are laid out `filters x in_c x k x k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub filters: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub batchnorm: bool,
    pub activation: Activation,
}

impl ConvLayerSpec {
    pub fn output_dims(&self) -> Result<(usize, usize)> {
        conv_output_dims(self.in_h, self.in_w, self.k, self.stride, self.pad)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_c == 0 || self.filters == 0 {
            return Err(Error::InvalidSpec(format!(
                "channels and filters must be positive, got {} and {}",
                self.in_c, self.filters
            )));
        }
        self.output_dims().map(|_| ())
    }

    pub fn weight_len(&self) -> usize {
        self.filters * self.in_c * self.k * self.k
    }
}

/// Per-filter batch-normalization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub mean: Vec<f32>,
    pub variance: Vec<f32>,
    pub scale: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNormParams {
    /// Parameters that normalize nothing: mean 0, variance 1, scale 1.
    pub fn identity(filters: usize) -> Self {
        BatchNormParams {
            mean: vec![0.0; filters],
            variance: vec![1.0; filters],
            scale: vec![1.0; filters],
            epsilon: BN_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Winograd,
    Im2colGemm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Winograd => "winograd",
            Algorithm::Im2colGemm => "im2col-gemm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Winograd for 3x3 stride-1 layers, im2col + GEMM otherwise.
pub fn select_algorithm(spec: &ConvLayerSpec) -> Algorithm {
    if spec.k == 3 && spec.stride == 1 {
        Algorithm::Winograd
    } else {
        Algorithm::Im2colGemm
    }
}

/// GEMM used by the im2col path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GemmKernel {
    Naive,
    ThreeLoop {
        unroll: usize,
    },
    /// `None` tunes block sizes for the attached cache.
    SixLoop {
        blocks: Option<BlockConfig>,
    },
}

impl Default for GemmKernel {
    fn default() -> Self {
        GemmKernel::SixLoop { blocks: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConvContext {
    pub gemm: GemmKernel,
    /// Forces an algorithm instead of [`select_algorithm`].
    pub algorithm: Option<Algorithm>,
}

/// Runs the layer on `input` and returns the activated output.
///
/// Kernels other than 1x1 and 3x3 always use the naive GEMM.
pub fn forward<S: TraceSink>(
    spec: &ConvLayerSpec,
    input: &Tensor3,
    weights: &[f32],
    bn: Option<&BatchNormParams>,
    bias: &[f32],
    ctx: &ConvContext,
    vpu: &mut Vpu<S>,
) -> Result<Tensor3> {
    spec.validate()?;
    if weights.len() != spec.weight_len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for a layer needing {}",
            weights.len(),
            spec.weight_len()
        )));
    }
    if bias.len() != spec.filters {
        return Err(Error::ShapeMismatch(format!(
            "{} biases for {} filters",
            bias.len(),
            spec.filters
        )));
    }
    if spec.batchnorm != bn.is_some() {
        return Err(Error::InvalidSpec(format!(
            "layer batchnorm={} but parameters {}",
            spec.batchnorm,
            if bn.is_some() { "given" } else { "missing" }
        )));
    }
    if let Some(bn) = bn {
        let f = spec.filters;
        if bn.mean.len() != f || bn.variance.len() != f || bn.scale.len() != f {
            return Err(Error::ShapeMismatch(format!(
                "batch-norm parameters must have {f} entries"
            )));
        }
    }

    let algorithm = ctx.algorithm.unwrap_or_else(|| select_algorithm(spec));
    let mut out = match algorithm {
        Algorithm::Winograd => {
            let plan = WinogradPlan::for_vector_elements(vpu.max_elements());
            conv_winograd(input, WinogradWeights::Raw(weights), spec, &plan, vpu)?
        }
        Algorithm::Im2colGemm => conv_im2col(spec, input, weights, ctx.gemm, vpu)?,
    };
    post_ops(&mut out, bn, bias, spec.activation);
    Ok(out)
}

fn conv_im2col<S: TraceSink>(
    spec: &ConvLayerSpec,
    input: &Tensor3,
    weights: &[f32],
    kernel: GemmKernel,
    vpu: &mut Vpu<S>,
) -> Result<Tensor3> {
    if (input.channels(), input.height(), input.width()) != (spec.in_c, spec.in_h, spec.in_w) {
        return Err(Error::ShapeMismatch(format!(
            "input {}x{}x{} does not match layer input {}x{}x{}",
            input.channels(),
            input.height(),
            input.width(),
            spec.in_c,
            spec.in_h,
            spec.in_w
        )));
    }
    let (oh, ow) = spec.output_dims()?;
    let cols = im2col(input, spec.k, spec.stride, spec.pad)?;
    let a = Matrix::from_vec(spec.filters, spec.in_c * spec.k * spec.k, weights.to_vec())?;
    let dims = GemmDims::new(spec.filters, oh * ow, a.cols());
    let mut c = Matrix::zeros(dims.m, dims.n);
    let kernel = if matches!(spec.k, 1 | 3) {
        kernel
    } else {
        GemmKernel::Naive
    };
    match kernel {
        GemmKernel::Naive => gemm_naive(&a, &cols, &mut c, &dims)?,
        GemmKernel::ThreeLoop { unroll } => gemm_3loop(&a, &cols, &mut c, &dims, vpu, unroll)?,
        GemmKernel::SixLoop { blocks } => {
            let blocks = match blocks {
                Some(b) => b,
                None => {
                    let gvl = vpu.max_elements();
                    tune_block_sizes(&dims, vpu.config(), gvl, DEFAULT_UNROLL).blocks
                }
            };
            gemm_6loop(&a, &cols, &mut c, &dims, vpu, &blocks)?
        }
    }
    Tensor3::from_matrix(c, oh, ow)
}

/// Batch normalization, bias and activation, in that order, per channel.
pub fn post_ops(out: &mut Tensor3, bn: Option<&BatchNormParams>, bias: &[f32], act: Activation) {
    let plane = out.height() * out.width();
    for (f, chunk) in out.as_mut_slice().chunks_mut(plane).enumerate() {
        if let Some(bn) = bn {
            let denom = (bn.variance[f] + bn.epsilon).sqrt();
            for x in chunk.iter_mut() {
                *x = bn.scale[f] * ((*x - bn.mean[f]) / denom);
            }
        }
        for x in chunk.iter_mut() {
            *x = act.apply(*x + bias[f]);
        }
    }
}
