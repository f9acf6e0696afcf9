//! The learnable retina network.
//!
//! Per channel `c`, with `*` the "same" correlation:
//!
//! ```text
//! h_c = I_c * g_c + bias_g_c          horizontal cells
//! b_c = I_c + h_c                     bipolar input, residual form
//! v_c = I_c + b_c * f_c + bias_f_c    ganglion drive, photoreceptor skip
//! ```
//!
//! `g` starts as a 3x3 Gaussian and `f` as a 5x5 difference of Gaussians; both
//! are then learned. There is no nonlinearity, so the output is affine in the
//! input for fixed weights.

pub mod checkpoint;
pub mod variants;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{merge_channels, split_channels, Tensor};
use crate::kernels::{conv2d_input_grad, conv2d_kernel_grad, conv2d_same, dog_kernel, gaussian_kernel, GaussianSpec, Kernel2D, PaddingMode};
use crate::real::Real;

pub const STAGE_G_KERNEL_SIZE: usize = 3;
pub const STAGE_F_KERNEL_SIZE: usize = 5;

/// 3 * (3 * 3) + 3 + 3 * (5 * 5) + 3.
pub const PARAMETER_COUNT: usize = 108;

/// Depthwise kernels and biases of one stage, one per RGB channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams<T> {
    pub kernels: [Kernel2D<T>; 3],
    pub biases: [T; 3],
}

impl<T: Real> StageParams<T> {
    pub fn new(kernels: [Kernel2D<T>; 3], biases: [T; 3]) -> Result<Self> {
        let size = kernels[0].size();
        if kernels.iter().any(|k| k.size() != size) {
            return Err(Error::InvalidParameter("all kernels of a stage must share one size".into()));
        }
        Ok(Self { kernels, biases })
    }

    pub fn uniform(kernel: Kernel2D<T>) -> Self {
        Self { kernels: [kernel.clone(), kernel.clone(), kernel], biases: [T::zero(); 3] }
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Ok(Self::uniform(Kernel2D::zeros(size)?))
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels[0].size()
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.iter().map(|k| k.weights().len()).sum::<usize>() + self.biases.len()
    }

    fn push_flat(&self, out: &mut Vec<T>) {
        for k in &self.kernels {
            out.extend_from_slice(k.weights());
        }
        out.extend_from_slice(&self.biases);
    }

    fn read_flat(&mut self, src: &mut impl Iterator<Item = T>) {
        for k in &mut self.kernels {
            for w in k.weights_mut() {
                *w = src.next().expect("parameter vector too short");
            }
        }
        for b in &mut self.biases {
            *b = src.next().expect("parameter vector too short");
        }
    }

    pub fn cast<U: Real>(&self) -> StageParams<U> {
        StageParams {
            kernels: [self.kernels[0].cast(), self.kernels[1].cast(), self.kernels[2].cast()],
            biases: self.biases.map(|b| U::from_f64_lossy(b.as_f64())),
        }
    }
}

/// Initialization constants. The seed is recorded but the initialization
/// itself is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub seed: u64,
    pub sigma_g: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self { seed: 42, sigma_g: 1.0, sigma1: 0.5, sigma2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetinaModel<T = f32> {
    /// Horizontal-cell stage, 3x3.
    pub stage_g: StageParams<T>,
    /// Bipolar-cell center-surround stage, 5x5.
    pub stage_f: StageParams<T>,
    pub padding: PaddingMode,
}

/// Gradients for every learnable parameter, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T = f32> {
    pub stage_g: StageParams<T>,
    pub stage_f: StageParams<T>,
}

/// Intermediates kept by [`RetinaModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape<T> {
    pub input: [Tensor<T>; 3],
    pub horizontal: [Tensor<T>; 3],
    pub bipolar: [Tensor<T>; 3],
}

/// Named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub range: Range<usize>,
}

impl<T: Real> RetinaModel<T> {
    /// Gaussian `g`, DoG `f`, zero biases, replicate padding.
    pub fn init(params: &InitParams) -> Result<Self> {
        let g = gaussian_kernel(GaussianSpec::new(params.sigma_g, STAGE_G_KERNEL_SIZE)?)?;
        let f = dog_kernel(params.sigma1, params.sigma2, STAGE_F_KERNEL_SIZE)?;
        Ok(Self { stage_g: StageParams::uniform(g), stage_f: StageParams::uniform(f), padding: PaddingMode::Replicate })
    }

    /// Every parameter zero: the forward pass reduces to the identity.
    pub fn zeroed(padding: PaddingMode) -> Self {
        Self {
            stage_g: StageParams::zeros(STAGE_G_KERNEL_SIZE).unwrap(),
            stage_f: StageParams::zeros(STAGE_F_KERNEL_SIZE).unwrap(),
            padding,
        }
    }

    pub fn with_padding(mut self, padding: PaddingMode) -> Self {
        self.padding = padding;
        self
    }

    pub fn parameter_count(&self) -> usize {
        self.stage_g.parameter_count() + self.stage_f.parameter_count()
    }

    /// Flat parameter order: g kernels (channel-major), g biases, f kernels, f biases.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.stage_g.push_flat(&mut out);
        self.stage_f.push_flat(&mut out);
        out
    }

    pub fn set_parameters(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        self.stage_g.read_flat(&mut it);
        self.stage_f.read_flat(&mut it);
        Ok(())
    }

    pub fn parameter_groups(&self) -> Vec<ParamGroup> {
        let gk = 3 * self.stage_g.kernel_size().pow(2);
        let fk = 3 * self.stage_f.kernel_size().pow(2);
        let mut at = 0;
        let mut next = |name, len| {
            let g = ParamGroup { name, range: at..at + len };
            at += len;
            g
        };
        vec![
            next("stage_g.kernels", gk),
            next("stage_g.biases", 3),
            next("stage_f.kernels", fk),
            next("stage_f.biases", 3),
        ]
    }

    /// Human-readable name of each flat parameter, e.g. `stage_f.kernel[2][0,4]`.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.parameter_count());
        for (stage, params) in [("stage_g", &self.stage_g), ("stage_f", &self.stage_f)] {
            let k = params.kernel_size();
            for c in 0..3 {
                for i in 0..k {
                    for j in 0..k {
                        names.push(format!("{stage}.kernel[{c}][{i},{j}]"));
                    }
                }
            }
            for c in 0..3 {
                names.push(format!("{stage}.bias[{c}]"));
            }
        }
        names
    }

    pub fn cast<U: Real>(&self) -> RetinaModel<U> {
        RetinaModel { stage_g: self.stage_g.cast(), stage_f: self.stage_f.cast(), padding: self.padding }
    }

    pub fn forward(&self, img: &Tensor<T>) -> Result<(Tensor<T>, ForwardTape<T>)> {
        if img.channels() != 3 {
            return Err(Error::InvalidInput(format!("forward expects 3 channels, got {}", img.channels())));
        }
        let input = split_channels(img)?;
        let mut horizontal = Vec::with_capacity(3);
        let mut bipolar = Vec::with_capacity(3);
        let mut output = Vec::with_capacity(3);
        for (c, plane) in input.iter().enumerate() {
            let bias_g = self.stage_g.biases[c];
            let h = conv2d_same(plane, &self.stage_g.kernels[c], self.padding)?.map(|v| v + bias_g);
            let b = add(plane, &h);
            let bias_f = self.stage_f.biases[c];
            let mut v = conv2d_same(&b, &self.stage_f.kernels[c], self.padding)?;
            for (o, &i) in v.data_mut().iter_mut().zip(plane.data()) {
                *o = i + *o + bias_f;
            }
            horizontal.push(h);
            bipolar.push(b);
            output.push(v);
        }
        let out = merge_channels(&into_array(output))?;
        Ok((out, ForwardTape { input, horizontal: into_array(horizontal), bipolar: into_array(bipolar) }))
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, img: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(img).map(|(out, _)| out)
    }

    /// Parameter gradients given `dL/d(output)`.
    pub fn backward(&self, tape: &ForwardTape<T>, upstream: &Tensor<T>) -> Result<ModelGrads<T>> {
        let out_dims = (tape.input[0].height(), tape.input[0].width(), 3);
        if upstream.dims() != out_dims {
            return Err(Error::InvalidInput(format!(
                "upstream gradient is {:?}, forward output was {:?}",
                upstream.dims(),
                out_dims
            )));
        }
        let up = split_channels(upstream)?;
        let mut grad_g = Vec::with_capacity(3);
        let mut grad_f = Vec::with_capacity(3);
        let mut bias_g = [T::zero(); 3];
        let mut bias_f = [T::zero(); 3];
        for c in 0..3 {
            bias_f[c] = channel_sum(&up[c]);
            grad_f.push(conv2d_kernel_grad(&tape.bipolar[c], self.stage_f.kernel_size(), &up[c], self.padding)?);
            // dL/db = dL/dh since b = I + h
            let grad_b = conv2d_input_grad(&self.stage_f.kernels[c], &up[c], self.padding)?;
            bias_g[c] = channel_sum(&grad_b);
            grad_g.push(conv2d_kernel_grad(&tape.input[c], self.stage_g.kernel_size(), &grad_b, self.padding)?);
        }
        Ok(ModelGrads {
            stage_g: StageParams { kernels: into_array(grad_g), biases: bias_g },
            stage_f: StageParams { kernels: into_array(grad_f), biases: bias_f },
        })
    }
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(model: &RetinaModel<T>) -> Self {
        Self {
            stage_g: StageParams::zeros(model.stage_g.kernel_size()).unwrap(),
            stage_f: StageParams::zeros(model.stage_f.kernel_size()).unwrap(),
        }
    }

    /// Same order as [`RetinaModel::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(PARAMETER_COUNT);
        self.stage_g.push_flat(&mut out);
        self.stage_f.push_flat(&mut out);
        out
    }
}

fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    out
}

fn channel_sum<T: Real>(plane: &Tensor<T>) -> T {
    T::from_f64_lossy(plane.data().iter().map(|v| v.as_f64()).sum())
}

fn into_array<X>(v: Vec<X>) -> [X; 3] {
    v.try_into().unwrap_or_else(|_| unreachable!("exactly three channels"))
}
