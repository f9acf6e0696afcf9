//! SSIM, PSNR and test-set evaluation.
//!
//! SSIM uses the usual constants: an 11x11 Gaussian window with sigma 1.5,
//! `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`, `L = 1`. Only window positions that
//! fit entirely inside the image are scored. Each channel is averaged over
//! those positions, then the channels are averaged. Inputs are clamped to
//! `[0, 1]` first.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dataio::PairSource;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, Tensor};
use crate::model::RetinaModel;
use crate::real::Real;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn window_1d() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Valid-region separable filtering of an `h x w` field.
fn filter_valid(field: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &field[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = win.iter().zip(&src[c..c + SSIM_WINDOW]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|i| win[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

fn ssim_channel(x: &[f64], y: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> f64 {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, h, w, win);
    let mu_y = filter_valid(y, h, w, win);
    let e_xx = filter_valid(&xx, h, w, win);
    let e_yy = filter_valid(&yy, h, w, win);
    let e_xy = filter_valid(&xy, h, w, win);

    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2);
        total += num / den;
    }
    total / mu_x.len() as f64
}

/// Mean SSIM over channels.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_same_dims(b, "ssim")?;
    let (h, w, channels) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let win = window_1d();
    let plane = |img: &Tensor<T>, c: usize| -> Vec<f64> {
        img.data().iter().skip(c).step_by(channels).map(|v| v.as_f64().clamp(0.0, 1.0)).collect()
    };
    let sum: f64 = (0..channels).map(|c| ssim_channel(&plane(a, c), &plane(b, c), h, w, &win)).sum();
    Ok(sum / channels as f64)
}

/// Peak signal-to-noise ratio in dB for peak value 1. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.ensure_same_dims(b, "psnr")?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageScore {
    pub name: String,
    pub ssim: f64,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageScore>,
    pub mean_ssim: f64,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr: f64,
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

impl EvalReport {
    pub fn from_scores(per_image: Vec<ImageScore>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::InvalidInput("no images were scored".into()));
        }
        let n = per_image.len() as f64;
        let mean_ssim = per_image.iter().map(|s| s.ssim).sum::<f64>() / n;
        let mean_psnr = per_image.iter().map(|s| s.psnr).sum::<f64>() / n;
        Ok(Self { per_image, mean_ssim, mean_psnr })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per image plus a mean row.
    pub fn table(&self) -> String {
        let width = self.per_image.iter().map(|s| s.name.len()).max().unwrap_or(0).max(4);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>10}", "name", "ssim", "psnr_db");
        for s in &self.per_image {
            let _ = writeln!(out, "{:<width$}  {:>8.4}  {:>10}", s.name, s.ssim, fmt_db(s.psnr));
        }
        let _ = writeln!(out, "{:<width$}  {:>8.4}  {:>10}", "mean", self.mean_ssim, fmt_db(self.mean_psnr));
        out
    }
}

/// Scores an already-enhanced image against ground truth, clamping first.
pub fn score(name: &str, enhanced: &ImageTensor, truth: &ImageTensor) -> Result<ImageScore> {
    let clamped = enhanced.clamped();
    Ok(ImageScore { name: name.to_string(), ssim: ssim(&clamped, truth)?, psnr: psnr(&clamped, truth)? })
}

/// Enhances every low-light image of `test` and scores it against its pair.
pub fn evaluate<S: PairSource + ?Sized>(model: &RetinaModel<f32>, test: &S) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let with_name = |idx: usize, e: Error| match e {
        e @ (Error::Data { .. } | Error::Io { .. }) => e,
        other => Error::Data { name: test.name(idx).to_string(), reason: other.to_string() },
    };
    let scores = (0..test.len())
        .into_par_iter()
        .map(|idx| {
            let (low, high) = test.load(idx)?;
            let out = model.predict(&low).map_err(|e| with_name(idx, e))?;
            score(test.name(idx), &out, &high).map_err(|e| with_name(idx, e))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(scores)
}

/// Mean SSIM/PSNR of the unenhanced low-light inputs.
pub fn baseline<S: PairSource + ?Sized>(test: &S) -> Result<EvalReport> {
    let scores = (0..test.len())
        .into_par_iter()
        .map(|idx| {
            let (low, high) = test.load(idx)?;
            score(test.name(idx), &low, &high)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(scores)
}
