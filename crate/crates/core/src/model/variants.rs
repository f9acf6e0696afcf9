//! Alternative bipolar-cell formulations, forward only.
//!
//! The trained network uses the residual form `b = I + h`. The divisive form
//! `b = I / (alpha + h)` and the two-coefficient form `b = alpha*I + beta*I*h`
//! are kept for side-by-side comparison; the divisive one is unbounded as
//! `alpha + h` approaches zero.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{merge_channels, split_channels, ImageTensor, Tensor};
use crate::kernels::{conv2d_same, gaussian_kernel, GaussianSpec, PaddingMode};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcVariant {
    /// `I / (alpha + h)`
    Recursive,
    /// `alpha * I + beta * I * h`
    Fir,
    /// `I + h`
    Residual,
}

impl fmt::Display for BcVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcVariant::Recursive => "recursive",
            BcVariant::Fir => "fir",
            BcVariant::Residual => "residual",
        })
    }
}

impl FromStr for BcVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(BcVariant::Recursive),
            "fir" => Ok(BcVariant::Fir),
            "residual" => Ok(BcVariant::Residual),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantConfig {
    pub alpha: f64,
    pub beta: f64,
    pub variant: BcVariant,
}

impl VariantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant == BcVariant::Recursive && (self.alpha.is_nan() || self.alpha <= 0.0) {
            return Err(Error::InvalidParameter(format!("recursive variant needs alpha > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

fn pointwise<T: Real>(
    plane: &Tensor<T>,
    h: &Tensor<T>,
    what: &str,
    mut f: impl FnMut(usize, T, T) -> Result<T>,
) -> Result<Tensor<T>> {
    if plane.channels() != 1 {
        return Err(Error::InvalidInput(format!("{what}: expected a single-channel plane")));
    }
    plane.ensure_same_dims(h, what)?;
    let data = plane
        .data()
        .iter()
        .zip(h.data())
        .enumerate()
        .map(|(idx, (&i, &hv))| f(idx, i, hv))
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(plane.height(), plane.width(), 1, data)
}

/// Divisive modulation `I / (alpha + h)`, unclamped.
pub fn bc_recursive<T: Real>(plane: &Tensor<T>, h: &Tensor<T>, cfg: &VariantConfig) -> Result<Tensor<T>> {
    if cfg.variant != BcVariant::Recursive {
        return Err(Error::InvalidParameter(format!("bc_recursive called with {} config", cfg.variant)));
    }
    cfg.validate()?;
    let alpha = T::from_f64_lossy(cfg.alpha);
    let width = plane.width();
    pointwise(plane, h, "bc_recursive", |idx, i, hv| {
        let denom = alpha + hv;
        if denom == T::zero() {
            return Err(Error::DivisionByZero { row: idx / width, col: idx % width });
        }
        Ok(i / denom)
    })
}

/// `alpha * I + beta * I * h`.
pub fn bc_fir<T: Real>(plane: &Tensor<T>, h: &Tensor<T>, cfg: &VariantConfig) -> Result<Tensor<T>> {
    if cfg.variant != BcVariant::Fir {
        return Err(Error::InvalidParameter(format!("bc_fir called with {} config", cfg.variant)));
    }
    let (alpha, beta) = (T::from_f64_lossy(cfg.alpha), T::from_f64_lossy(cfg.beta));
    pointwise(plane, h, "bc_fir", |_, i, hv| Ok(alpha * i + beta * i * hv))
}

/// `I + h`, the form the network is built on.
pub fn bc_residual<T: Real>(plane: &Tensor<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
    pointwise(plane, h, "bc_residual", |_, i, hv| Ok(i + hv))
}

/// Blurs each channel with a fixed 3x3 Gaussian of width `sigma`, then applies
/// the chosen bipolar-cell variant. The result is not clamped.
pub fn bipolar_response(img: &ImageTensor, cfg: &VariantConfig, sigma: f64, padding: PaddingMode) -> Result<ImageTensor> {
    cfg.validate()?;
    let g = gaussian_kernel::<f32>(GaussianSpec::new(sigma, 3)?)?;
    let planes = split_channels(img)?;
    let mut out = Vec::with_capacity(3);
    for plane in &planes {
        let h = conv2d_same(plane, &g, padding)?;
        out.push(match cfg.variant {
            BcVariant::Recursive => bc_recursive(plane, &h, cfg)?,
            BcVariant::Fir => bc_fir(plane, &h, cfg)?,
            BcVariant::Residual => bc_residual(plane, &h)?,
        });
    }
    let out: [ImageTensor; 3] = out.try_into().unwrap_or_else(|_| unreachable!());
    merge_channels(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(1, 1, 1, vec![v]).unwrap()
    }

    fn cfg(variant: BcVariant, alpha: f64, beta: f64) -> VariantConfig {
        VariantConfig { alpha, beta, variant }
    }

    #[test]
    fn recursive_arithmetic() {
        let out = bc_recursive(&scalar(0.5), &scalar(0.5), &cfg(BcVariant::Recursive, 1.0, 0.0)).unwrap();
        assert!((out.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        let out = bc_recursive(&scalar(0.2), &scalar(0.0), &cfg(BcVariant::Recursive, 0.01, 0.0)).unwrap();
        assert!((out.data()[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn recursive_reports_zero_denominator_position() {
        let plane = Tensor::<f64>::filled(2, 3, 1, 0.5).unwrap();
        let mut h = Tensor::<f64>::filled(2, 3, 1, 0.0).unwrap();
        h.set(1, 2, 0, -0.25);
        let err = bc_recursive(&plane, &h, &cfg(BcVariant::Recursive, 0.25, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DivisionByZero { row: 1, col: 2 }));
    }

    #[test]
    fn recursive_needs_positive_alpha() {
        let err = bc_recursive(&scalar(0.5), &scalar(0.5), &cfg(BcVariant::Recursive, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn fir_arithmetic_and_identity() {
        let out = bc_fir(&scalar(0.5), &scalar(0.4), &cfg(BcVariant::Fir, 1.0, 2.0)).unwrap();
        assert!((out.data()[0] - 0.9).abs() < 1e-15);

        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let p = Tensor::<f64>::from_fn(4, 4, 1, |_, _, _| rng.gen()).unwrap();
        let h = Tensor::<f64>::from_fn(4, 4, 1, |_, _, _| rng.gen()).unwrap();
        assert_eq!(bc_fir(&p, &h, &cfg(BcVariant::Fir, 1.0, 0.0)).unwrap(), p);
    }

    #[test]
    fn mismatched_planes_rejected() {
        let a = Tensor::<f64>::zeros(2, 2, 1).unwrap();
        let b = Tensor::<f64>::zeros(2, 3, 1).unwrap();
        assert!(bc_fir(&a, &b, &cfg(BcVariant::Fir, 1.0, 1.0)).is_err());
        assert!(bc_residual(&a, &b).is_err());
    }

    #[test]
    fn pointwise_reference_and_fir_bounds() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
        for _ in 0..50 {
            let p = Tensor::<f64>::from_fn(5, 7, 1, |_, _, _| rng.gen_range(0.0..=1.0)).unwrap();
            let h = Tensor::<f64>::from_fn(5, 7, 1, |_, _, _| rng.gen_range(0.0..=1.0)).unwrap();
            let alpha = rng.gen_range(0.01..2.0);
            let beta = rng.gen_range(0.0..2.0);

            let rec = bc_recursive(&p, &h, &cfg(BcVariant::Recursive, alpha, 0.0)).unwrap();
            for k in 0..p.len() {
                let want = p.data()[k] / (alpha + h.data()[k]);
                assert!((rec.data()[k] - want).abs() < 1e-7);
            }

            let fir = bc_fir(&p, &h, &cfg(BcVariant::Fir, alpha, beta)).unwrap();
            assert!(fir.data().iter().all(|&v| v >= 0.0 && v <= alpha + beta + 1e-12));
        }
    }

    #[test]
    fn recursive_exceeds_residual_bound_on_dark_input() {
        // dark field with isolated brighter specks, like sensor noise
        let img = ImageTensor::from_fn(8, 8, 3, |r, c, ch| if (r * 8 + c + ch) % 11 == 0 { 0.12 } else { 0.01 }).unwrap();
        let res = bipolar_response(&img, &cfg(BcVariant::Residual, 1.0, 1.0), 1.0, PaddingMode::Replicate).unwrap();
        let rec = bipolar_response(&img, &cfg(BcVariant::Recursive, 0.01, 0.0), 1.0, PaddingMode::Replicate).unwrap();
        assert!(res.min_max().1 <= 2.0);
        assert!(rec.min_max().1 > 2.0);
    }
}
