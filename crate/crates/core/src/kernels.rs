//! Gaussian and difference-of-Gaussians kernels, and the depthwise "same"
//! convolution used by both network stages.
//!
//! Convolution here is correlation: the kernel is never flipped, in the
//! forward pass or in either gradient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Tensor;
use crate::real::Real;

/// How reads outside the plane are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    /// Clamp to the nearest edge pixel.
    #[default]
    Replicate,
    Zero,
}

impl fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaddingMode::Replicate => "replicate",
            PaddingMode::Zero => "zero",
        })
    }
}

impl FromStr for PaddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicate" => Ok(PaddingMode::Replicate),
            "zero" => Ok(PaddingMode::Zero),
            other => Err(Error::InvalidParameter(format!("unknown padding mode '{other}'"))),
        }
    }
}

/// Square kernel with odd side length, weights row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D<T> {
    size: usize,
    weights: Vec<T>,
}

impl<T: Real> Kernel2D<T> {
    pub fn new(size: usize, weights: Vec<T>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidParameter(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        Ok(Self { size, weights })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![T::zero(); size * size])
    }

    /// Identity kernel: 1 at the center, 0 elsewhere.
    pub fn delta(size: usize) -> Result<Self> {
        let mut k = Self::zeros(size)?;
        let c = k.center();
        k.weights[c * size + c] = T::one();
        Ok(k)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn center(&self) -> usize {
        (self.size - 1) / 2
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.weights[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|w| w.as_f64()).sum()
    }

    pub fn cast<U: Real>(&self) -> Kernel2D<U> {
        Kernel2D { size: self.size, weights: self.weights.iter().map(|w| U::from_f64_lossy(w.as_f64())).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub sigma: f64,
    pub size: usize,
}

impl GaussianSpec {
    pub fn new(sigma: f64, size: usize) -> Result<Self> {
        let spec = Self { sigma, size };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("kernel size must be odd, got {}", self.size)));
        }
        Ok(())
    }
}

fn gaussian_weights(spec: &GaussianSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let c = ((spec.size - 1) / 2) as f64;
    let two_var = 2.0 * spec.sigma * spec.sigma;
    let mut w = Vec::with_capacity(spec.size * spec.size);
    for i in 0..spec.size {
        for j in 0..spec.size {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            w.push((-(di * di + dj * dj) / two_var).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Normalized isotropic Gaussian of the given size. Weights sum to one.
pub fn gaussian_kernel<T: Real>(spec: GaussianSpec) -> Result<Kernel2D<T>> {
    let w = gaussian_weights(&spec)?;
    Kernel2D::new(spec.size, w.into_iter().map(T::from_f64_lossy).collect())
}

/// Center-surround kernel `G(sigma1) - G(sigma2)`; zero-sum by construction.
pub fn dog_kernel<T: Real>(sigma1: f64, sigma2: f64, size: usize) -> Result<Kernel2D<T>> {
    let center = gaussian_weights(&GaussianSpec { sigma: sigma1, size })?;
    let surround = gaussian_weights(&GaussianSpec { sigma: sigma2, size })?;
    Kernel2D::new(size, center.iter().zip(&surround).map(|(a, b)| T::from_f64_lossy(a - b)).collect())
}

fn ensure_plane<T: Real>(plane: &Tensor<T>, what: &str) -> Result<()> {
    if plane.channels() != 1 {
        return Err(Error::InvalidInput(format!("{what}: expected a single-channel plane, got {} channels", plane.channels())));
    }
    Ok(())
}

/// Plane copied into a `(h + 2c) x (w + 2c)` buffer with the border filled per `padding`.
fn padded<T: Real>(plane: &Tensor<T>, margin: usize, padding: PaddingMode) -> Vec<T> {
    let (h, w) = (plane.height(), plane.width());
    let (ph, pw) = (h + 2 * margin, w + 2 * margin);
    let src = plane.data();
    let mut out = vec![T::zero(); ph * pw];
    for pr in 0..ph {
        let row = &mut out[pr * pw..(pr + 1) * pw];
        let r = pr as isize - margin as isize;
        match padding {
            PaddingMode::Zero => {
                if r >= 0 && (r as usize) < h {
                    let r = r as usize;
                    row[margin..margin + w].copy_from_slice(&src[r * w..(r + 1) * w]);
                }
            }
            PaddingMode::Replicate => {
                let r = r.clamp(0, h as isize - 1) as usize;
                let line = &src[r * w..(r + 1) * w];
                for (pc, v) in row.iter_mut().enumerate() {
                    let c = (pc as isize - margin as isize).clamp(0, w as isize - 1) as usize;
                    *v = line[c];
                }
            }
        }
    }
    out
}

/// "Same" correlation of a single-channel plane with `kernel`.
///
/// `out(x, y) = sum_{i,j} plane(x + i - c, y + j - c) * kernel(i, j)`.
pub fn conv2d_same<T: Real>(plane: &Tensor<T>, kernel: &Kernel2D<T>, padding: PaddingMode) -> Result<Tensor<T>> {
    ensure_plane(plane, "conv2d_same")?;
    let (h, w) = (plane.height(), plane.width());
    let k = kernel.size();
    let pw = w + 2 * kernel.center();
    let src = padded(plane, kernel.center(), padding);

    let mut out = vec![T::zero(); h * w];
    for (x, out_row) in out.chunks_exact_mut(w).enumerate() {
        for i in 0..k {
            let base = (x + i) * pw;
            for j in 0..k {
                let kv = kernel.get(i, j);
                let src_row = &src[base + j..base + j + w];
                for (o, &s) in out_row.iter_mut().zip(src_row) {
                    *o += s * kv;
                }
            }
        }
    }
    Tensor::new(h, w, 1, out)
}

/// Gradient of `sum(upstream * conv2d_same(plane, k))` with respect to `k`.
pub fn conv2d_kernel_grad<T: Real>(
    plane: &Tensor<T>,
    kernel_size: usize,
    upstream: &Tensor<T>,
    padding: PaddingMode,
) -> Result<Kernel2D<T>> {
    ensure_plane(plane, "conv2d_backward")?;
    plane.ensure_same_dims(upstream, "conv2d_backward")?;
    if kernel_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("kernel size must be odd, got {kernel_size}")));
    }
    let (h, w) = (plane.height(), plane.width());
    let margin = (kernel_size - 1) / 2;
    let pw = w + 2 * margin;
    let src = padded(plane, margin, padding);
    let up = upstream.data();

    let mut grad = Vec::with_capacity(kernel_size * kernel_size);
    for i in 0..kernel_size {
        for j in 0..kernel_size {
            let mut acc = 0.0f64;
            for x in 0..h {
                let src_row = &src[(x + i) * pw + j..(x + i) * pw + j + w];
                let up_row = &up[x * w..(x + 1) * w];
                let mut row_acc = 0.0f64;
                for (&u, &s) in up_row.iter().zip(src_row) {
                    row_acc += (u * s).as_f64();
                }
                acc += row_acc;
            }
            grad.push(T::from_f64_lossy(acc));
        }
    }
    Kernel2D::new(kernel_size, grad)
}

/// Adjoint of [`conv2d_same`] with respect to its input plane.
///
/// Taps that read padding are routed back to the pixels they were read from:
/// dropped for zero padding, accumulated onto the nearest edge pixel for
/// replicate padding.
pub fn conv2d_input_grad<T: Real>(
    kernel: &Kernel2D<T>,
    upstream: &Tensor<T>,
    padding: PaddingMode,
) -> Result<Tensor<T>> {
    ensure_plane(upstream, "conv2d_backward")?;
    let (h, w) = (upstream.height(), upstream.width());
    let k = kernel.size();
    let margin = kernel.center();
    let (ph, pw) = (h + 2 * margin, w + 2 * margin);
    let up = upstream.data();

    let mut gpad = vec![T::zero(); ph * pw];
    for x in 0..h {
        let up_row = &up[x * w..(x + 1) * w];
        for i in 0..k {
            let base = (x + i) * pw;
            for j in 0..k {
                let kv = kernel.get(i, j);
                let dst = &mut gpad[base + j..base + j + w];
                for (d, &u) in dst.iter_mut().zip(up_row) {
                    *d += u * kv;
                }
            }
        }
    }

    let mut grad = vec![T::zero(); h * w];
    match padding {
        PaddingMode::Zero => {
            for x in 0..h {
                let src = &gpad[(x + margin) * pw + margin..(x + margin) * pw + margin + w];
                grad[x * w..(x + 1) * w].copy_from_slice(src);
            }
        }
        PaddingMode::Replicate => {
            for pr in 0..ph {
                let r = (pr as isize - margin as isize).clamp(0, h as isize - 1) as usize;
                for pc in 0..pw {
                    let c = (pc as isize - margin as isize).clamp(0, w as isize - 1) as usize;
                    grad[r * w + c] += gpad[pr * pw + pc];
                }
            }
        }
    }
    Tensor::new(h, w, 1, grad)
}

/// Both gradients of [`conv2d_same`] given the upstream gradient of its output.
pub fn conv2d_backward<T: Real>(
    plane: &Tensor<T>,
    kernel: &Kernel2D<T>,
    upstream: &Tensor<T>,
    padding: PaddingMode,
) -> Result<(Tensor<T>, Kernel2D<T>)> {
    let grad_kernel = conv2d_kernel_grad(plane, kernel.size(), upstream, padding)?;
    let grad_input = conv2d_input_grad(kernel, upstream, padding)?;
    Ok((grad_input, grad_kernel))
}
