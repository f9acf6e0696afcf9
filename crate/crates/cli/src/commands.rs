use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use retina_core::metrics::evaluate;
use retina_core::model::variants::bipolar_response;
use retina_core::model::InitParams;
use retina_core::training::grad_check::{grad_check, grad_check_corrupted, random_draw};
use retina_core::{
    decode_png, discover, discover_dirs, encode_png, load_checkpoint, save_checkpoint,
    train_with, CheckpointMetadata, Error, ImageTensor, Kernel2D, PairedDataset, RetinaModel, Split,
    StageParams, TrainConfig, VariantConfig,
};

use crate::{CompareArgs, DataArgs, EnhanceArgs, EvalArgs, GradcheckArgs, KernelsArgs, TrainArgs};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_CHECK: u8 = 4;

/// Heatmap upscale factor for exported kernels.
const HEATMAP_SCALE: usize = 32;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_numeric() => EXIT_NUMERIC,
            Error::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult = Result<(), CliError>;

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_image(path: &Path) -> Result<ImageTensor, CliError> {
    decode_png(&read(path)?).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })
}

fn read_model(path: &Path) -> Result<RetinaModel<f32>, CliError> {
    load_checkpoint(&read(path)?).map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })
}

fn dataset(data: &DataArgs, split: Split) -> Result<PairedDataset, CliError> {
    let ds = match (&data.low_dir, &data.high_dir, &data.data_root) {
        (Some(low), Some(high), _) => discover_dirs(low, high, split)?,
        (_, _, Some(root)) => discover(root, split)?,
        _ => return Err(CliError::usage("either --data-root or both --low-dir and --high-dir are required")),
    };
    Ok(ds)
}

fn epoch_path(out: &Path, epoch: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    out.with_file_name(format!("{stem}.epoch{epoch}.json"))
}

pub fn train(args: TrainArgs) -> CliResult {
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: args.seed,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let init_params = InitParams { seed: args.seed, sigma_g: args.sigma_g, sigma1: args.sigma1, sigma2: args.sigma2 };
    let init = RetinaModel::<f32>::init(&init_params).map_err(|e| CliError::usage(e.to_string()))?.with_padding(args.padding.into());

    let ds = dataset(&args.data, Split::Train)?;
    if ds.is_empty() {
        return Err(CliError { code: EXIT_IO, message: "training set is empty".into() });
    }

    let mut history = Vec::with_capacity(cfg.epochs);
    let on_epoch = |summary: &retina_core::training::EpochSummary, model: &RetinaModel<f32>| -> retina_core::Result<()> {
        println!("epoch={} mean_loss={}", summary.epoch + 1, summary.mean_loss);
        history.push(summary.mean_loss);
        if args.checkpoint_every_epoch {
            let meta = CheckpointMetadata { init: init_params, training: Some(cfg.clone()), loss_history: history.clone() };
            let path = epoch_path(&args.out, summary.epoch + 1);
            fs::write(&path, save_checkpoint(model, &meta)?).map_err(|e| Error::Io { path, source: e })?;
        }
        Ok(())
    };
    let (model, history) = if args.preload {
        train_with(&ds.preload()?, &cfg, init, on_epoch)?
    } else {
        train_with(&ds, &cfg, init, on_epoch)?
    };

    let meta = CheckpointMetadata { init: init_params, training: Some(cfg), loss_history: history };
    write(&args.out, &save_checkpoint(&model, &meta)?)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

pub fn enhance(args: EnhanceArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let img = read_image(&args.input)?;
    let out = model.predict(&img)?.clamped();
    write(&args.output, &encode_png(&out)?)
}

pub fn eval(args: EvalArgs) -> CliResult {
    let model = read_model(&args.model)?;
    let ds = dataset(&args.data, Split::Test)?;
    if ds.is_empty() {
        return Err(CliError { code: EXIT_IO, message: "test set is empty".into() });
    }
    let report = evaluate(&model, &ds)?;
    if args.json {
        eprint!("{}", report.table());
        println!("{}", report.to_json());
    } else {
        print!("{}", report.table());
    }
    Ok(())
}

#[derive(Serialize)]
struct StageDump<'a> {
    kernel_size: usize,
    kernels: Vec<&'a [f32]>,
    biases: &'a [f32],
}

#[derive(Serialize)]
struct KernelDump<'a> {
    stage_g: StageDump<'a>,
    stage_f: StageDump<'a>,
}

impl<'a> StageDump<'a> {
    fn new(p: &'a StageParams<f32>) -> Self {
        Self { kernel_size: p.kernel_size(), kernels: p.kernels.iter().map(|k| k.weights()).collect(), biases: &p.biases }
    }
}

/// Min-max normalized, nearest-neighbour upscaled grayscale image of a kernel.
pub fn kernel_heatmap(kernel: &Kernel2D<f32>, scale: usize) -> ImageTensor {
    let (lo, hi) = kernel.weights().iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
    let span = hi - lo;
    let k = kernel.size();
    ImageTensor::from_fn(k * scale, k * scale, 1, |r, c, _| {
        let w = kernel.get(r / scale, c / scale);
        if span > 0.0 {
            (w - lo) / span
        } else {
            0.0
        }
    })
    .expect("kernel is non-empty")
}

pub fn kernels(args: KernelsArgs) -> CliResult {
    let model = read_model(&args.model)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    for (stage, params) in [("stage_g", &model.stage_g), ("stage_f", &model.stage_f)] {
        for (c, kernel) in params.kernels.iter().enumerate() {
            let path = args.out_dir.join(format!("{stage}_c{c}.png"));
            write(&path, &encode_png(&kernel_heatmap(kernel, HEATMAP_SCALE))?)?;
        }
    }
    let dump = KernelDump { stage_g: StageDump::new(&model.stage_g), stage_f: StageDump::new(&model.stage_f) };
    let mut json = serde_json::to_vec_pretty(&dump).expect("kernels serialize");
    json.push(b'\n');
    write(&args.out_dir.join("kernels.json"), &json)
}

pub fn compare(args: CompareArgs) -> CliResult {
    let img = read_image(&args.input)?;
    let cfg = VariantConfig { alpha: args.alpha, beta: args.beta, variant: args.variant.into() };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let raw = bipolar_response(&img, &cfg, args.sigma, args.padding.into())?;
    if args.stats {
        let (min, max) = raw.min_max();
        println!("variant={} min={min} max={max} mean={}", cfg.variant, raw.mean());
    }
    if let Some(out) = &args.output {
        write(out, &encode_png(&raw.clamped())?)?;
    }
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> CliResult {
    if args.draws == 0 {
        return Err(CliError::usage("--draws must be at least 1"));
    }
    let mut worst: Vec<(String, f64)> = Vec::new();
    for seed in args.seed..args.seed + args.draws {
        let (model, img, target) = random_draw(seed);
        let report = if args.corrupt_gradient {
            grad_check_corrupted(&model, &img, &target, args.epsilon, 1e-3)?
        } else {
            grad_check(&model, &img, &target, args.epsilon)?
        };
        if worst.is_empty() {
            worst = report.params.iter().map(|p| (p.name.clone(), 0.0)).collect();
        }
        for (w, p) in worst.iter_mut().zip(&report.params) {
            w.1 = w.1.max(p.rel_error);
        }
        println!("draw seed={seed} max_rel_error={:e}", report.max_rel_error);
    }
    for (name, err) in &worst {
        println!("{name:<24} {err:e}");
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    println!("parameters={} max_rel_error={max:e} threshold={:e}", worst.len(), args.threshold);
    if max < args.threshold {
        Ok(())
    } else {
        Err(CliError { code: EXIT_CHECK, message: format!("gradient check failed: {max:e} >= {:e}", args.threshold) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_is_normalized_and_upscaled() {
        let k = Kernel2D::new(3, vec![-1.0, 0.0, 1.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let img = kernel_heatmap(&k, 4);
        assert_eq!(img.dims(), (12, 12, 1));
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert_eq!(img.get(3, 11, 0), 1.0);
        assert_eq!(img.get(5, 5, 0), 0.75);
        let flat = kernel_heatmap(&Kernel2D::zeros(3).unwrap(), 2);
        assert!(flat.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epoch_checkpoint_names() {
        assert_eq!(epoch_path(Path::new("/tmp/m.json"), 3), PathBuf::from("/tmp/m.epoch3.json"));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::NonFinite("x".into())).code, EXIT_NUMERIC);
        assert_eq!(CliError::from(Error::DivisionByZero { row: 0, col: 1 }).code, EXIT_NUMERIC);
        assert_eq!(CliError::from(Error::Layout("x".into())).code, EXIT_IO);
        assert_eq!(CliError::from(Error::InvalidParameter("x".into())).code, EXIT_USAGE);
    }
}
