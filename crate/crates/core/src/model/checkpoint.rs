//! JSON checkpoints.
//!
//! Keys are written in a fixed order and reals in shortest round-trip form, so
//! saving a loaded checkpoint reproduces the original bytes.

use serde::{Deserialize, Serialize};

use super::{InitParams, RetinaModel, StageParams, STAGE_F_KERNEL_SIZE, STAGE_G_KERNEL_SIZE};
use crate::error::{Error, Result};
use crate::kernels::{Kernel2D, PaddingMode};
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub init: InitParams,
    #[serde(default)]
    pub training: Option<TrainConfig>,
    /// Mean training loss per epoch.
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageDoc {
    kernel_size: usize,
    kernels: Vec<Vec<f32>>,
    biases: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    padding: PaddingMode,
    stage_g: StageDoc,
    stage_f: StageDoc,
    metadata: CheckpointMetadata,
}

impl StageDoc {
    fn from_params(p: &StageParams<f32>) -> Self {
        Self {
            kernel_size: p.kernel_size(),
            kernels: p.kernels.iter().map(|k| k.weights().to_vec()).collect(),
            biases: p.biases.to_vec(),
        }
    }

    fn into_params(self, stage: &str, expected_size: usize) -> Result<StageParams<f32>> {
        let fail = |msg: String| Error::CheckpointFormat(format!("{stage}: {msg}"));
        if self.kernel_size != expected_size {
            return Err(fail(format!("kernel_size must be {expected_size}, got {}", self.kernel_size)));
        }
        if self.kernels.len() != 3 {
            return Err(fail(format!("expected 3 kernels, got {}", self.kernels.len())));
        }
        if self.biases.len() != 3 {
            return Err(fail(format!("expected 3 biases, got {}", self.biases.len())));
        }
        let n = expected_size * expected_size;
        let mut kernels = Vec::with_capacity(3);
        for (c, w) in self.kernels.into_iter().enumerate() {
            if w.len() != n {
                return Err(fail(format!("kernel {c} has {} weights, expected {n}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(fail(format!("kernel {c} contains a non-finite weight")));
            }
            kernels.push(Kernel2D::new(expected_size, w)?);
        }
        if self.biases.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite bias".into()));
        }
        let kernels: [Kernel2D<f32>; 3] = kernels.try_into().unwrap_or_else(|_| unreachable!());
        StageParams::new(kernels, [self.biases[0], self.biases[1], self.biases[2]])
    }
}

pub fn save_checkpoint(model: &RetinaModel<f32>, metadata: &CheckpointMetadata) -> Result<Vec<u8>> {
    if model.parameters().iter().any(|v| !v.is_finite()) {
        return Err(Error::CheckpointFormat("refusing to save non-finite parameters".into()));
    }
    let doc = CheckpointDoc {
        format_version: FORMAT_VERSION,
        padding: model.padding,
        stage_g: StageDoc::from_params(&model.stage_g),
        stage_f: StageDoc::from_params(&model.stage_f),
        metadata: metadata.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| Error::CheckpointFormat(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn load_checkpoint_with_metadata(bytes: &[u8]) -> Result<(RetinaModel<f32>, CheckpointMetadata)> {
    let doc: CheckpointDoc = serde_json::from_slice(bytes).map_err(|e| Error::CheckpointFormat(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let model = RetinaModel {
        stage_g: doc.stage_g.into_params("stage_g", STAGE_G_KERNEL_SIZE)?,
        stage_f: doc.stage_f.into_params("stage_f", STAGE_F_KERNEL_SIZE)?,
        padding: doc.padding,
    };
    Ok((model, doc.metadata))
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<RetinaModel<f32>> {
    load_checkpoint_with_metadata(bytes).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;
    use serde_json::Value;

    fn default_model() -> RetinaModel<f32> {
        RetinaModel::init(&InitParams::default()).unwrap()
    }

    #[test]
    fn resave_is_byte_identical() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        let mut m = default_model();
        let p: Vec<f32> = m.parameters().iter().map(|v| v + rng.gen_range(-0.1f32..0.1)).collect();
        m.set_parameters(&p).unwrap();
        let meta = CheckpointMetadata { loss_history: vec![0.25, 0.125], ..Default::default() };
        let first = save_checkpoint(&m, &meta).unwrap();
        let (loaded, meta2) = load_checkpoint_with_metadata(&first).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(meta2, meta);
        assert_eq!(save_checkpoint(&loaded, &meta2).unwrap(), first);
    }

    #[test]
    fn forward_agrees_after_round_trip() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
        let m = default_model();
        let loaded = load_checkpoint(&save_checkpoint(&m, &CheckpointMetadata::default()).unwrap()).unwrap();
        let img = ImageTensor::from_fn(9, 11, 3, |_, _, _| rng.gen()).unwrap();
        let a = m.predict(&img).unwrap();
        let b = loaded.predict(&img).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn layout_and_key_order() {
        let bytes = save_checkpoint(&default_model(), &CheckpointMetadata::default()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let keys = ["\"format_version\"", "\"padding\"", "\"stage_g\"", "\"stage_f\"", "\"metadata\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));

        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["padding"], "replicate");
        assert_eq!(v["stage_g"]["kernel_size"], 3);
        assert_eq!(v["stage_f"]["kernels"][2].as_array().unwrap().len(), 25);
    }

    fn mutate(f: impl FnOnce(&mut Value)) -> Vec<u8> {
        let bytes = save_checkpoint(&default_model(), &CheckpointMetadata::default()).unwrap();
        let mut v: Value = serde_json::from_slice(&bytes).unwrap();
        f(&mut v);
        serde_json::to_vec(&v).unwrap()
    }

    #[test]
    fn rejects_malformed_documents() {
        let cases = [
            mutate(|v| v["stage_g"]["kernels"][0].as_array_mut().unwrap().pop().map(|_| ()).unwrap()),
            mutate(|v| v["format_version"] = 2.into()),
            mutate(|v| v["stage_f"]["biases"] = serde_json::json!([0.0, 0.0])),
            mutate(|v| v["stage_f"]["kernel_size"] = 3.into()),
            mutate(|v| v["stage_g"]["kernels"][1][4] = Value::Null),
            mutate(|v| v["stage_g"]["biases"][0] = serde_json::json!(1e300)),
            mutate(|v| v["padding"] = "mirror".into()),
        ];
        for bytes in cases {
            assert!(matches!(load_checkpoint(&bytes), Err(Error::CheckpointFormat(_))));
        }
        assert!(matches!(load_checkpoint(b"{"), Err(Error::CheckpointFormat(_))));
    }

    #[test]
    fn refuses_to_save_nan() {
        let mut m = default_model();
        m.stage_f.biases[1] = f32::NAN;
        assert!(save_checkpoint(&m, &CheckpointMetadata::default()).is_err());
    }
}
