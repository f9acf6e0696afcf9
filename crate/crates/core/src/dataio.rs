//! Paired low/normal-light datasets in the LOL directory layout:
//!
//! ```text
//! <root>/our485/{low,high}/*.png   training split
//! <root>/eval15/{low,high}/*.png   test split
//! ```
//!
//! Pairs are matched by identical file name and ordered lexicographically.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{decode_png, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "our485",
            Split::Test => "eval15",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub name: String,
    pub low_path: PathBuf,
    pub high_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedDataset {
    pub root: PathBuf,
    pub split: Split,
    pub pairs: Vec<ImagePair>,
    /// Normal-light files with no low-light counterpart. Reported, not fatal.
    pub unmatched_high: Vec<String>,
}

/// Anything that can hand out `(low, high)` tensors by index.
pub trait PairSource: Sync {
    fn len(&self) -> usize;

    fn name(&self, idx: usize) -> &str;

    fn load(&self, idx: usize) -> Result<(ImageTensor, ImageTensor)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn png_names(dir: &Path) -> Result<BTreeSet<String>> {
    if !dir.is_dir() {
        return Err(Error::Layout(format!("missing directory {}", dir.display())));
    }
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.insert(name.to_string());
            }
        }
    }
    Ok(names)
}

/// Pairs up `low_dir` and `high_dir` directly, bypassing the default layout.
pub fn discover_dirs(low_dir: &Path, high_dir: &Path, split: Split) -> Result<PairedDataset> {
    let low = png_names(low_dir)?;
    let high = png_names(high_dir)?;

    let orphans: Vec<String> = low.difference(&high).cloned().collect();
    if !orphans.is_empty() {
        return Err(Error::Pairing(orphans));
    }
    let unmatched_high: Vec<String> = high.difference(&low).cloned().collect();
    if !unmatched_high.is_empty() {
        log::warn!("{} normal-light files have no low-light pair: {}", unmatched_high.len(), unmatched_high.join(", "));
    }
    let pairs: Vec<ImagePair> = low
        .into_iter()
        .map(|name| ImagePair { low_path: low_dir.join(&name), high_path: high_dir.join(&name), name })
        .collect();
    if pairs.is_empty() {
        log::warn!("no image pairs found under {} and {}", low_dir.display(), high_dir.display());
    }
    let root = low_dir.parent().unwrap_or(low_dir).to_path_buf();
    Ok(PairedDataset { root, split, pairs, unmatched_high })
}

/// Finds the pairs of one split under a LOL-style root.
pub fn discover(root: &Path, split: Split) -> Result<PairedDataset> {
    let base = root.join(split.dir_name());
    let mut ds = discover_dirs(&base.join("low"), &base.join("high"), split)?;
    ds.root = root.to_path_buf();
    Ok(ds)
}

fn read_png(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| Error::Data { name: path.display().to_string(), reason: e.to_string() })
}

/// Decodes both images of a pair at native resolution.
pub fn load_pair(pair: &ImagePair) -> Result<(ImageTensor, ImageTensor)> {
    let low = read_png(&pair.low_path)?;
    let high = read_png(&pair.high_path)?;
    if low.dims() != high.dims() {
        return Err(Error::Data {
            name: pair.name.clone(),
            reason: format!("low is {:?} but high is {:?}", low.dims(), high.dims()),
        });
    }
    Ok((low, high))
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Decodes every pair up front. Pairs are decoded in parallel and kept in
    /// discovery order.
    pub fn preload(&self) -> Result<PreloadedDataset> {
        let pairs = self
            .pairs
            .par_iter()
            .map(|p| load_pair(p).map(|(low, high)| (p.name.clone(), low, high)))
            .collect::<Result<Vec<_>>>()?;
        PreloadedDataset::new(pairs)
    }
}

impl PairSource for PairedDataset {
    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn name(&self, idx: usize) -> &str {
        &self.pairs[idx].name
    }

    fn load(&self, idx: usize) -> Result<(ImageTensor, ImageTensor)> {
        load_pair(&self.pairs[idx])
    }
}

/// In-memory pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreloadedDataset {
    pairs: Vec<(String, ImageTensor, ImageTensor)>,
}

impl PreloadedDataset {
    pub fn new(pairs: Vec<(String, ImageTensor, ImageTensor)>) -> Result<Self> {
        for (name, low, high) in &pairs {
            if low.dims() != high.dims() {
                return Err(Error::Data {
                    name: name.clone(),
                    reason: format!("low is {:?} but high is {:?}", low.dims(), high.dims()),
                });
            }
        }
        Ok(Self { pairs })
    }
}

impl PairSource for PreloadedDataset {
    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn name(&self, idx: usize) -> &str {
        &self.pairs[idx].0
    }

    fn load(&self, idx: usize) -> Result<(ImageTensor, ImageTensor)> {
        let (_, low, high) = &self.pairs[idx];
        Ok((low.clone(), high.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::encode_png;

    fn write_png(path: &Path, h: usize, w: usize, v: f32) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, encode_png(&ImageTensor::filled(h, w, 3, v).unwrap()).unwrap()).unwrap();
    }

    fn layout(root: &Path, split: Split, names: &[&str]) {
        for n in names {
            write_png(&root.join(split.dir_name()).join("low").join(n), 8, 8, 0.1);
            write_png(&root.join(split.dir_name()).join("high").join(n), 8, 8, 0.6);
        }
    }

    #[test]
    fn discovers_sorted_pairs() {
        let tmp = tempfile::tempdir().unwrap();
        layout(tmp.path(), Split::Train, &["3.png", "10.png", "1.png"]);
        layout(tmp.path(), Split::Test, &["22.png"]);
        fs::write(tmp.path().join("our485/low/notes.txt"), "x").unwrap();

        let train = discover(tmp.path(), Split::Train).unwrap();
        let names: Vec<&str> = train.pairs.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["1.png", "10.png", "3.png"]);
        assert_eq!(discover(tmp.path(), Split::Test).unwrap().len(), 1);
        assert_eq!(train, discover(tmp.path(), Split::Train).unwrap());

        let (low, high) = load_pair(&train.pairs[0]).unwrap();
        assert_eq!(low.dims(), (8, 8, 3));
        assert!(low.data().iter().chain(high.data()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn missing_layout_and_orphans() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(discover(tmp.path(), Split::Train), Err(Error::Layout(_))));

        layout(tmp.path(), Split::Test, &["a.png"]);
        write_png(&tmp.path().join("eval15/low/b.png"), 8, 8, 0.1);
        write_png(&tmp.path().join("eval15/high/c.png"), 8, 8, 0.1);
        match discover(tmp.path(), Split::Test) {
            Err(Error::Pairing(names)) => assert_eq!(names, vec!["b.png".to_string()]),
            other => panic!("expected pairing error, got {other:?}"),
        }
        fs::remove_file(tmp.path().join("eval15/low/b.png")).unwrap();
        let ds = discover(tmp.path(), Split::Test).unwrap();
        assert_eq!(ds.unmatched_high, vec!["c.png".to_string()]);
    }

    #[test]
    fn empty_directories_yield_empty_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join("our485/low")).unwrap();
        fs::create_dir_all(tmp.path().join("our485/high")).unwrap();
        let ds = discover(tmp.path(), Split::Train).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn mismatched_sizes_are_named() {
        let tmp = tempfile::tempdir().unwrap();
        write_png(&tmp.path().join("l/x.png"), 8, 8, 0.1);
        write_png(&tmp.path().join("h/x.png"), 8, 9, 0.1);
        let ds = discover_dirs(&tmp.path().join("l"), &tmp.path().join("h"), Split::Test).unwrap();
        match load_pair(&ds.pairs[0]) {
            Err(Error::Data { name, .. }) => assert_eq!(name, "x.png"),
            other => panic!("expected data error, got {other:?}"),
        }
        assert!(ds.preload().is_err());
    }

    #[test]
    fn preload_matches_lazy_loading() {
        let tmp = tempfile::tempdir().unwrap();
        layout(tmp.path(), Split::Train, &["a.png", "b.png"]);
        let ds = discover(tmp.path(), Split::Train).unwrap();
        let pre = ds.preload().unwrap();
        assert_eq!(PairSource::len(&pre), 2);
        for i in 0..2 {
            assert_eq!(pre.name(i), PairSource::name(&ds, i));
            assert_eq!(pre.load(i).unwrap(), ds.load(i).unwrap());
        }
    }
}
