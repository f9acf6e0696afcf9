//! Central finite-difference check of the hand-written backward pass.
//!
//! The loss is quadratic in any single parameter, so central differences are
//! exact up to rounding and the comparison is tight.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;

use super::mse_loss;
use crate::error::{Error, Result};
use crate::image::Tensor;
use crate::kernels::PaddingMode;
use crate::model::{InitParams, RetinaModel};
use crate::real::Real;

/// Denominator floor for the relative error, so two near-zero gradients
/// don't report a large ratio.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `backward` against central differences of `mse_loss(forward(img), target)`
/// for every parameter, in double precision.
pub fn grad_check<T: Real>(model: &RetinaModel<T>, img: &Tensor<T>, target: &Tensor<T>, epsilon: f64) -> Result<GradCheckReport> {
    check(model, img, target, epsilon, None)
}

/// Same as [`grad_check`] but adds `offset` to every analytic gradient. A
/// negative control for the checker itself.
pub fn grad_check_corrupted<T: Real>(
    model: &RetinaModel<T>,
    img: &Tensor<T>,
    target: &Tensor<T>,
    epsilon: f64,
    offset: f64,
) -> Result<GradCheckReport> {
    check(model, img, target, epsilon, Some(offset))
}

fn check<T: Real>(
    model: &RetinaModel<T>,
    img: &Tensor<T>,
    target: &Tensor<T>,
    epsilon: f64,
    corrupt: Option<f64>,
) -> Result<GradCheckReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let model: RetinaModel<f64> = model.cast();
    let img: Tensor<f64> = img.cast();
    let target: Tensor<f64> = target.cast();

    let (out, tape) = model.forward(&img)?;
    let (_, upstream) = mse_loss(&out, &target)?;
    let mut analytic = model.backward(&tape, &upstream)?.flatten();
    if let Some(offset) = corrupt {
        analytic.iter_mut().for_each(|g| *g += offset);
    }

    let loss_at = |params: &[f64]| -> Result<f64> {
        let mut probe = model.clone();
        probe.set_parameters(params)?;
        Ok(mse_loss(&probe.predict(&img)?, &target)?.0)
    };

    let base = model.parameters();
    let names = model.parameter_names();
    let mut params = Vec::with_capacity(base.len());
    let mut shifted = base.clone();
    for (k, name) in names.into_iter().enumerate() {
        shifted[k] = base[k] + epsilon;
        let plus = loss_at(&shifted)?;
        shifted[k] = base[k] - epsilon;
        let minus = loss_at(&shifted)?;
        shifted[k] = base[k];
        let numeric = (plus - minus) / (2.0 * epsilon);
        params.push(ParamCheck { name, analytic: analytic[k], numeric, rel_error: relative_error(analytic[k], numeric) });
    }
    let max_rel_error = params.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { epsilon, params, max_rel_error })
}

/// A reproducible (model, image, target) triple for gradient checking: the
/// default initialization with every parameter jittered, an 8x8 random image
/// and target, and padding alternating with the seed's parity.
pub fn random_draw(seed: u64) -> (RetinaModel<f64>, Tensor<f64>, Tensor<f64>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let padding = if seed.is_multiple_of(2) { PaddingMode::Replicate } else { PaddingMode::Zero };
    let mut model = RetinaModel::<f64>::init(&InitParams::default()).expect("default init is valid").with_padding(padding);
    let jittered: Vec<f64> = model.parameters().iter().map(|v| v + rng.gen_range(-0.25..0.25)).collect();
    model.set_parameters(&jittered).expect("same length");
    let img = Tensor::from_fn(8, 8, 3, |_, _, _| rng.gen_range(0.0..1.0)).expect("8x8x3");
    let target = Tensor::from_fn(8, 8, 3, |_, _, _| rng.gen_range(0.0..1.0)).expect("8x8x3");
    (model, img, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;

    #[test]
    fn zeroed_model_on_identity_pair_is_exact() {
        let img = ImageTensor::from_fn(5, 5, 3, |r, c, ch| ((r * 7 + c * 3 + ch) % 10) as f32 / 10.0).unwrap();
        let report = grad_check(&RetinaModel::<f32>::zeroed(PaddingMode::Replicate), &img, &img, 1e-4).unwrap();
        assert_eq!(report.params.len(), 108);
        // +eps and -eps give the same quadratic loss up to rounding
        assert!(report.params.iter().all(|p| p.analytic == 0.0 && p.numeric.abs() < 1e-12));
        assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
    }

    #[test]
    fn default_init_passes() {
        let (_, img, target) = random_draw(3);
        let model = RetinaModel::<f64>::init(&InitParams::default()).unwrap();
        let report = grad_check(&model, &img, &target, 1e-4).unwrap();
        assert!(report.passes(1e-5), "{:?}", report.worst());
    }

    #[test]
    fn random_draws_pass() {
        for seed in 0..20 {
            let (model, img, target) = random_draw(seed);
            let report = grad_check(&model, &img, &target, 1e-4).unwrap();
            assert!(report.passes(1e-5), "seed {seed}: {:?}", report.worst());
        }
    }

    #[test]
    fn corrupted_gradients_are_caught() {
        let (model, img, target) = random_draw(1);
        let report = grad_check_corrupted(&model, &img, &target, 1e-4, 1e-3).unwrap();
        assert!(!report.passes(1e-5));
    }

    #[test]
    fn report_names_every_parameter_once() {
        let (model, img, target) = random_draw(4);
        let report = grad_check(&model, &img, &target, 1e-4).unwrap();
        let mut names: Vec<&str> = report.params.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 108);
    }

    #[test]
    fn epsilon_must_be_positive() {
        let (model, img, target) = random_draw(0);
        assert!(grad_check(&model, &img, &target, 0.0).is_err());
    }
}
