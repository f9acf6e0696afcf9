//! Loss, optimizer and the training loop.

pub mod adam;
pub mod grad_check;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use self::adam::{adam_step, AdamConfig, OptimizerState};
use crate::dataio::PairSource;
use crate::error::{Error, Result};
use crate::image::Tensor;
use crate::model::RetinaModel;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            learning_rate: 0.001,
            seed: 42,
            loss: LossKind::Mse,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    pred.ensure_same_dims(target, "mse_loss")?;
    let n = pred.len() as f64;
    let scale = T::from_f64_lossy(2.0 / n);
    let mut sum = 0.0f64;
    let mut grad = pred.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        sum += d.as_f64() * d.as_f64();
        *g = d * scale;
    }
    Ok((sum / n, grad))
}

/// Mean loss and mean flat gradient over a set of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub mean_loss: f64,
    pub per_image_loss: Vec<f64>,
    pub gradient: Vec<f64>,
}

/// Per-image forward/backward in parallel, reduced in index order.
pub fn batch_gradient<S: PairSource + ?Sized>(model: &RetinaModel<f32>, data: &S, indices: &[usize]) -> Result<BatchGradient> {
    let per_image = indices
        .par_iter()
        .map(|&idx| -> Result<(f64, Vec<f32>)> {
            let (low, high) = data.load(idx)?;
            let (out, tape) = model.forward(&low)?;
            let (loss, grad) = mse_loss(&out, &high)?;
            Ok((loss, model.backward(&tape, &grad)?.flatten()))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_image.len() as f64;
    let mut gradient = vec![0.0f64; model.parameter_count()];
    let mut per_image_loss = Vec::with_capacity(per_image.len());
    for (loss, g) in &per_image {
        per_image_loss.push(*loss);
        for (acc, &v) in gradient.iter_mut().zip(g) {
            *acc += v as f64;
        }
    }
    gradient.iter_mut().for_each(|g| *g /= n);
    let mean_loss = per_image_loss.iter().sum::<f64>() / n;
    Ok(BatchGradient { mean_loss, per_image_loss, gradient })
}

/// Visit order for one epoch: Fisher-Yates over `0..n` driven by a
/// SplitMix64 stream keyed on `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = SplitMix64::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    /// Zero-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

/// Trains `init` on `data`, calling `on_epoch` after every epoch with the
/// updated model. Returns the final model and per-epoch mean loss.
pub fn train_with<S, F>(data: &S, cfg: &TrainConfig, init: RetinaModel<f32>, mut on_epoch: F) -> Result<(RetinaModel<f32>, Vec<f64>)>
where
    S: PairSource + ?Sized,
    F: FnMut(&EpochSummary, &RetinaModel<f32>) -> Result<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let adam = cfg.adam();
    let mut model = init;
    let mut state = OptimizerState::for_model(&model);
    let mut params: Vec<f64> = model.parameters().iter().map(|&v| v as f64).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (batch, indices) in order.chunks(cfg.batch_size).enumerate() {
            let bg = batch_gradient(&model, data, indices)?;
            if !bg.mean_loss.is_finite() {
                return Err(Error::NonFinite(format!("loss {} at epoch {}, batch {}", bg.mean_loss, epoch + 1, batch)));
            }
            adam_step(&mut params, &bg.gradient, &mut state, &adam)
                .map_err(|e| Error::NonFinite(format!("epoch {}, batch {}: {e}", epoch + 1, batch)))?;
            let as_f32: Vec<f32> = params.iter().map(|&v| v as f32).collect();
            model.set_parameters(&as_f32)?;
            loss_sum += bg.per_image_loss.iter().sum::<f64>();
            steps += 1;
        }
        let mean_loss = loss_sum / data.len() as f64;
        log::debug!("epoch {} mean loss {mean_loss}", epoch + 1);
        history.push(mean_loss);
        on_epoch(&EpochSummary { epoch, mean_loss, steps }, &model)?;
    }
    Ok((model, history))
}

pub fn train<S: PairSource + ?Sized>(data: &S, cfg: &TrainConfig, init: RetinaModel<f32>) -> Result<(RetinaModel<f32>, Vec<f64>)> {
    train_with(data, cfg, init, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::PreloadedDataset;
    use crate::image::ImageTensor;
    use crate::kernels::PaddingMode;
    use crate::model::InitParams;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_image(rng: &mut impl Rng, h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, 3, |_, _, _| rng.gen()).unwrap()
    }

    /// Dim copies of random scenes: `low = 0.3 * high`.
    fn dark_pairs(n: usize, seed: u64) -> PreloadedDataset {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let pairs = (0..n)
            .map(|i| {
                let high = random_image(&mut rng, 10, 12);
                (format!("{i:03}.png"), high.map(|v| 0.3 * v), high)
            })
            .collect();
        PreloadedDataset::new(pairs).unwrap()
    }

    #[test]
    fn mse_basics() {
        let a = ImageTensor::filled(3, 4, 3, 1.0).unwrap();
        let z = ImageTensor::zeros(3, 4, 3).unwrap();
        let (loss, grad) = mse_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
        assert_eq!(mse_loss(&a, &z).unwrap().0, 1.0);
        assert!(mse_loss(&a, &ImageTensor::zeros(3, 5, 3).unwrap()).is_err());
    }

    #[test]
    fn mse_matches_reference_and_finite_differences() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(12);
        let p: Tensor<f64> = Tensor::from_fn(4, 5, 3, |_, _, _| rng.gen()).unwrap();
        let t: Tensor<f64> = Tensor::from_fn(4, 5, 3, |_, _, _| rng.gen()).unwrap();
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        let mut sum = 0.0;
        for i in 0..p.len() {
            sum += (p.data()[i] - t.data()[i]) * (p.data()[i] - t.data()[i]);
        }
        assert!((loss - sum / p.len() as f64).abs() < 1e-7);
        let eps = 1e-6;
        for i in 0..p.len() {
            let mut hi = p.clone();
            hi.data_mut()[i] += eps;
            let mut lo = p.clone();
            lo.data_mut()[i] -= eps;
            let numeric = (mse_loss(&hi, &t).unwrap().0 - mse_loss(&lo, &t).unwrap().0) / (2.0 * eps);
            assert!((numeric - grad.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 7, 0);
        assert_eq!(a, epoch_order(50, 7, 0));
        assert_ne!(a, epoch_order(50, 7, 1));
        assert_ne!(a, epoch_order(50, 8, 0));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn identity_pairs_at_optimum_stay_put() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let x = random_image(&mut rng, 6, 6);
        let data = PreloadedDataset::new(vec![("a".into(), x.clone(), x)]).unwrap();
        let init = RetinaModel::zeroed(PaddingMode::Replicate);
        let cfg = TrainConfig { epochs: 3, batch_size: 2, ..Default::default() };
        let (model, history) = train(&data, &cfg, init.clone()).unwrap();
        assert_eq!(model, init);
        assert_eq!(history, vec![0.0; 3]);
    }

    #[test]
    fn batch_gradient_is_mean_of_singles() {
        let data = dark_pairs(5, 4);
        let model = RetinaModel::init(&InitParams::default()).unwrap();
        let all = batch_gradient(&model, &data, &[0, 1, 2, 3, 4]).unwrap();
        let mut mean = vec![0.0; 108];
        for i in 0..5 {
            let single = batch_gradient(&model, &data, &[i]).unwrap();
            for (m, g) in mean.iter_mut().zip(&single.gradient) {
                *m += g / 5.0;
            }
        }
        for (a, b) in all.gradient.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let data = dark_pairs(11, 9);
        let cfg = TrainConfig { epochs: 4, batch_size: 4, learning_rate: 0.01, ..Default::default() };
        let init = RetinaModel::init(&InitParams::default()).unwrap();
        let mut seen = Vec::new();
        let (m1, h1) = train_with(&data, &cfg, init.clone(), |s, _| {
            seen.push((s.epoch, s.steps));
            Ok(())
        })
        .unwrap();
        // ceil(11 / 4) = 3 steps per epoch, short final batch kept
        assert_eq!(seen, vec![(0, 3), (1, 3), (2, 3), (3, 3)]);
        assert!(h1[3] < h1[0]);
        let (m2, h2) = train(&data, &cfg, init).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn non_finite_data_aborts() {
        let mut high = ImageTensor::zeros(4, 4, 3).unwrap();
        high.set(1, 1, 1, f32::NAN);
        let data = PreloadedDataset::new(vec![("bad".into(), ImageTensor::zeros(4, 4, 3).unwrap(), high)]).unwrap();
        let err = train(&data, &TrainConfig { epochs: 1, ..Default::default() }, RetinaModel::init(&InitParams::default()).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains("epoch 1, batch 0")), "{err}");
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = PreloadedDataset::new(vec![]).unwrap();
        assert!(train(&data, &TrainConfig::default(), RetinaModel::zeroed(PaddingMode::Zero)).is_err());
    }
}
