//! Labelled image datasets, IDX ingestion, preprocessing and synthetic data.

pub mod idx;
pub mod preprocess;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use idx::IdxArray;

pub use preprocess::{augment_hflip, hflip_with_probability, resize_bilinear, resize_to_32, to_grayscale};
pub use synthetic::{synthetic_pair, synthetic_raw_pair, synthetic_raw_splits, write_synthetic, SYNTH_NAMES};

/// Images in `[0, 1]` with integer labels. `provenance[i]` indexes `sources`
/// and records which original dataset sample `i` came from.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub provenance: Vec<usize>,
    pub sources: Vec<String>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let name = name.into();
        let [m, _, _, _] = images.dims4()?;
        if labels.len() != m {
            return Err(Error::data(format!("{m} images but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::data(format!("label {bad} outside [0, {num_classes})")));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::data(format!("dataset `{name}` has pixels outside [0, 1]")));
        }
        Ok(LabeledDataset { sources: vec![name.clone()], name, images, labels, num_classes, provenance: vec![0; m] })
    }

    pub fn empty_like(other: &LabeledDataset) -> Self {
        let mut shape = other.images.shape().to_vec();
        shape[0] = 0;
        LabeledDataset {
            name: format!("{}-empty", other.name),
            images: Tensor::zeros(&shape),
            labels: Vec::new(),
            num_classes: other.num_classes,
            provenance: Vec::new(),
            sources: vec![format!("{}-empty", other.name)],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]` of every image.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    fn image_len(&self) -> usize {
        self.image_shape().iter().product()
    }

    /// Stack the selected samples into a batch.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let len = self.image_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * len..(i + 1) * len]);
            labels.push(self.labels[i]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        (Tensor::new(shape, data).expect("gathered length matches"), labels)
    }

    /// A dataset holding the selected samples, provenance preserved.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> LabeledDataset {
        let (images, labels) = self.gather(indices);
        LabeledDataset {
            name: name.into(),
            images,
            labels,
            num_classes: self.num_classes,
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
            sources: self.sources.clone(),
        }
    }

    /// The samples whose provenance is source `source`.
    pub fn from_source(&self, source: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.provenance[i] == source).collect();
        let name = self.sources.get(source).cloned().unwrap_or_else(|| format!("source{source}"));
        let mut d = self.subset(&idx, name.clone());
        d.sources = vec![name];
        d.provenance = vec![0; d.len()];
        d
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Concatenate two datasets over the same task, keeping provenance.
pub fn union(a: &LabeledDataset, b: &LabeledDataset) -> Result<LabeledDataset> {
    if a.num_classes != b.num_classes {
        return Err(Error::data(format!("class counts differ: {} vs {}", a.num_classes, b.num_classes)));
    }
    if a.image_shape() != b.image_shape() {
        return Err(Error::data(format!("image shapes differ: {:?} vs {:?}", a.image_shape(), b.image_shape())));
    }
    let mut data = a.images.data().to_vec();
    data.extend_from_slice(b.images.data());
    let mut shape = a.images.shape().to_vec();
    shape[0] = a.len() + b.len();
    let offset = a.sources.len();
    let mut sources = a.sources.clone();
    sources.extend(b.sources.iter().cloned());
    Ok(LabeledDataset {
        name: format!("{}+{}", a.name, b.name),
        images: Tensor::new(shape, data)?,
        labels: a.labels.iter().chain(&b.labels).copied().collect(),
        num_classes: a.num_classes,
        provenance: a.provenance.iter().copied().chain(b.provenance.iter().map(|p| p + offset)).collect(),
        sources,
    })
}

/// Union of any number of datasets, left to right.
pub fn union_all(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
    let (first, rest) = parts.split_first().ok_or_else(|| Error::data("union of no datasets"))?;
    rest.iter().try_fold(first.clone(), |acc, d| union(&acc, d))
}

/// Per-class seeded split. Returns `(kept, held_out)` with `round(fraction * n_c)`
/// samples of each class `c` held out; both parts keep the source order.
pub fn stratified_split(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config(format!("split fraction {fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; ds.len()];
    for class in 0..ds.num_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let take = (fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..take] {
            held[i] = true;
        }
    }
    let kept: Vec<usize> = (0..ds.len()).filter(|&i| !held[i]).collect();
    let out: Vec<usize> = (0..ds.len()).filter(|&i| held[i]).collect();
    Ok((ds.subset(&kept, ds.name.clone()), ds.subset(&out, ds.name.clone())))
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Fraction of each training set held out for validation.
pub const VAL_FRACTION: f64 = 0.1;

impl Split {
    /// Stratified 90/10 train/validation split of `train`; `test` is kept as is.
    pub fn new(train: &LabeledDataset, test: LabeledDataset, seed: u64) -> Result<Self> {
        let (train, val) = stratified_split(train, VAL_FRACTION, seed)?;
        Ok(Split { train, val, test })
    }
}

/// Raw bytes of one dataset split as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSplit {
    pub images: IdxArray,
    pub labels: IdxArray,
}

impl RawSplit {
    /// Scale to `[0, 1]`, bring to 32x32 and wrap as a dataset.
    pub fn to_dataset(&self, name: &str, num_classes: usize) -> Result<LabeledDataset> {
        if self.images.dims.first() != self.labels.dims.first() {
            return Err(Error::data(format!(
                "`{name}`: image dims {:?} disagree with label dims {:?}",
                self.images.dims, self.labels.dims
            )));
        }
        let images = resize_to_32(&idx::images_to_tensor(&self.images)?)?;
        let labels = self.labels.data.iter().map(|&l| l as usize).collect();
        LabeledDataset::new(name, images, labels, num_classes)
    }
}

fn split_paths(root: &Path, name: &str, split: &str) -> (PathBuf, PathBuf) {
    let dir = root.join(name);
    (dir.join(format!("{split}-images.idx")), dir.join(format!("{split}-labels.idx")))
}

/// Read `<root>/<name>/{split}-images.idx` and `{split}-labels.idx`.
pub fn load_raw_split(root: &Path, name: &str, split: &str) -> Result<RawSplit> {
    let (img, lbl) = split_paths(root, name, split);
    Ok(RawSplit { images: idx::load_idx_images(img)?, labels: idx::load_idx_labels(lbl)? })
}

pub fn write_raw_split(root: &Path, name: &str, split: &str, raw: &RawSplit) -> Result<()> {
    fs::create_dir_all(root.join(name))?;
    let (img, lbl) = split_paths(root, name, split);
    idx::write_idx(img, &raw.images)?;
    idx::write_idx(lbl, &raw.labels)
}

/// Load the preprocessed train and test sets of dataset `name` under `root`.
pub fn load_dataset(root: &Path, name: &str, num_classes: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_raw_split(root, name, "train")?.to_dataset(name, num_classes)?;
    let test = load_raw_split(root, name, "test")?.to_dataset(name, num_classes)?;
    Ok((train, test))
}
