#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use retina_core::{encode_png, save_checkpoint, CheckpointMetadata, ImageTensor, RetinaModel};

pub fn retina(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retina")).args(args).output().expect("spawn retina")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Well-exposed scene: smooth gradients plus mild texture.
pub fn bright_image(rng: &mut StdRng, h: usize, w: usize) -> ImageTensor {
    let phase: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    ImageTensor::from_fn(h, w, 3, |r, c, ch| {
        let base = 0.35 + 0.3 * (r as f32 / h as f32) + 0.2 * ((c as f32 * 0.4 + phase[ch] * 6.0).sin() * 0.5 + 0.5);
        (base + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0)
    })
    .unwrap()
}

/// Underexposed capture of `bright`: scaled down with sparse sensor specks.
pub fn dark_version(rng: &mut StdRng, bright: &ImageTensor) -> ImageTensor {
    let mut low = bright.map(|v| v * 0.12);
    for v in low.data_mut() {
        if rng.gen_bool(0.03) {
            *v += rng.gen_range(0.05..0.15);
        }
    }
    low
}

pub fn write_png(path: &Path, img: &ImageTensor) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, encode_png(img).unwrap()).unwrap();
}

/// Writes a LOL-layout tree under `root` with synthetic dark/bright pairs.
pub fn write_lol(root: &Path, train: usize, test: usize, h: usize, w: usize, seed: u64) {
    let mut rng = StdRng::seed_from_u64(seed);
    for (split, n) in [("our485", train), ("eval15", test)] {
        for k in 0..n {
            let high = bright_image(&mut rng, h, w);
            let low = dark_version(&mut rng, &high);
            let name = format!("{}.png", k + 1);
            write_png(&root.join(split).join("low").join(&name), &low);
            write_png(&root.join(split).join("high").join(&name), &high);
        }
    }
}

pub fn write_model(path: &Path, model: &RetinaModel<f32>) -> PathBuf {
    fs::write(path, save_checkpoint(model, &CheckpointMetadata::default()).unwrap()).unwrap();
    path.to_path_buf()
}
