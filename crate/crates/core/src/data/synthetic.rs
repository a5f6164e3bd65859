//! Two synthetic datasets over one 10-class task with a controlled domain shift.
//!
//! Each class is a fixed constellation of Gaussian blobs. The layouts are drawn
//! once from a constant task seed, so every call (whatever its seed) shares the
//! same task. The per-call seed only drives sample-level variation. Dataset A
//! renders sharp bright blobs on a dark background; dataset B renders the same
//! constellations shifted, blurred and at low contrast over a bright,
//! shaded background. Images are produced as 28x28 bytes, like MNIST, and go
//! through the same `/255 -> 32x32` pipeline as files read from disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::idx::IdxArray;
use std::path::Path;

use super::{write_raw_split, LabeledDataset, RawSplit};
use crate::error::{Error, Result};

pub const RAW_SIZE: usize = 28;
const TASK_SEED: u64 = 0x7A5C_0B10_B5EE_D001;
const BLOBS_PER_CLASS: usize = 3;

#[derive(Clone, Copy, Debug)]
struct Blob {
    y: f64,
    x: f64,
    weight: f64,
}

/// Rendering regime of one domain.
#[derive(Clone, Copy, Debug)]
struct Domain {
    offset: (f64, f64),
    sigma: f64,
    amplitude: (f64, f64),
    background: f64,
    shading: f64,
    noise: f64,
    jitter: f64,
}

const DOMAIN_A: Domain = Domain {
    offset: (0.0, 0.0),
    sigma: 1.6,
    amplitude: (0.85, 1.0),
    background: 0.0,
    shading: 0.0,
    noise: 0.04,
    jitter: 1.5,
};

const DOMAIN_B: Domain = Domain {
    offset: (2.0, -2.0),
    sigma: 2.4,
    amplitude: (0.35, 0.5),
    background: 0.35,
    shading: 0.2,
    noise: 0.08,
    jitter: 1.5,
};

fn class_layouts(n_classes: usize) -> Vec<Vec<Blob>> {
    let mut rng = ChaCha8Rng::seed_from_u64(TASK_SEED);
    (0..n_classes)
        .map(|_| {
            (0..BLOBS_PER_CLASS)
                .map(|_| Blob {
                    y: rng.random_range(6.0..22.0),
                    x: rng.random_range(6.0..22.0),
                    weight: rng.random_range(0.6..1.0),
                })
                .collect()
        })
        .collect()
}

/// Standard normal via Box-Muller.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn render(layout: &[Blob], domain: &Domain, rng: &mut ChaCha8Rng, out: &mut Vec<u8>) {
    let dy = domain.offset.0 + rng.random_range(-domain.jitter..=domain.jitter);
    let dx = domain.offset.1 + rng.random_range(-domain.jitter..=domain.jitter);
    let amp = rng.random_range(domain.amplitude.0..=domain.amplitude.1);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (sy, sx) = (angle.sin(), angle.cos());
    let two_s2 = 2.0 * domain.sigma * domain.sigma;
    let centre = (RAW_SIZE as f64 - 1.0) / 2.0;
    for y in 0..RAW_SIZE {
        for x in 0..RAW_SIZE {
            let (yf, xf) = (y as f64, x as f64);
            let shade = domain.shading * ((yf - centre) * sy + (xf - centre) * sx) / RAW_SIZE as f64;
            let signal: f64 = layout
                .iter()
                .map(|b| {
                    let d2 = (yf - b.y - dy).powi(2) + (xf - b.x - dx).powi(2);
                    b.weight * (-d2 / two_s2).exp()
                })
                .sum();
            let v = domain.background + shade + amp * signal + domain.noise * gaussian(rng);
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
}

fn render_split(domain: &Domain, layouts: &[Vec<Blob>], m_per_class: usize, seed: u64) -> RawSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = m_per_class * layouts.len();
    let mut pixels = Vec::with_capacity(total * RAW_SIZE * RAW_SIZE);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % layouts.len();
        render(&layouts[class], domain, &mut rng, &mut pixels);
        labels.push(class as u8);
    }
    RawSplit {
        images: IdxArray { dims: vec![total, RAW_SIZE, RAW_SIZE], data: pixels },
        labels: IdxArray { dims: vec![total], data: labels },
    }
}

/// Raw 28x28 byte images for domains A and B, `m_per_class` samples per class,
/// classes interleaved.
pub fn synthetic_raw_pair(seed: u64, m_per_class: usize, n_classes: usize) -> Result<(RawSplit, RawSplit)> {
    if m_per_class == 0 {
        return Err(Error::config("m_per_class must be at least 1"));
    }
    if !(2..=256).contains(&n_classes) {
        return Err(Error::config(format!("n_classes must be in [2, 256], got {n_classes}")));
    }
    let layouts = class_layouts(n_classes);
    let a = render_split(&DOMAIN_A, &layouts, m_per_class, seed.wrapping_mul(2).wrapping_add(1));
    let b = render_split(&DOMAIN_B, &layouts, m_per_class, seed.wrapping_mul(2).wrapping_add(2));
    Ok((a, b))
}

/// Preprocessed `(A, B)` datasets, named `synth-a` and `synth-b`.
pub fn synthetic_pair(seed: u64, m_per_class: usize, n_classes: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let (a, b) = synthetic_raw_pair(seed, m_per_class, n_classes)?;
    Ok((a.to_dataset("synth-a", n_classes)?, b.to_dataset("synth-b", n_classes)?))
}

impl RawSplit {
    /// The first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(RawSplit, RawSplit)> {
        let total = self.labels.data.len();
        if n > total {
            return Err(Error::config(format!("cannot take {n} of {total} samples")));
        }
        let px: usize = self.images.dims[1..].iter().product();
        let part = |lo: usize, hi: usize| {
            let mut dims = self.images.dims.clone();
            dims[0] = hi - lo;
            RawSplit {
                images: IdxArray { dims, data: self.images.data[lo * px..hi * px].to_vec() },
                labels: IdxArray { dims: vec![hi - lo], data: self.labels.data[lo..hi].to_vec() },
            }
        };
        Ok((part(0, n), part(n, total)))
    }
}

pub const SYNTH_NAMES: [&str; 2] = ["synth-a", "synth-b"];

/// Disjoint `(train, test)` raw splits for domains A and B, class-balanced.
pub fn synthetic_raw_splits(
    seed: u64,
    train_per_class: usize,
    test_per_class: usize,
    n_classes: usize,
) -> Result<[(RawSplit, RawSplit); 2]> {
    let (a, b) = synthetic_raw_pair(seed, train_per_class + test_per_class, n_classes)?;
    // Classes are interleaved, so any prefix of whole rounds is balanced.
    Ok([a.split_at(train_per_class * n_classes)?, b.split_at(train_per_class * n_classes)?])
}

/// Write both domains as IDX files under `root/synth-a` and `root/synth-b`.
pub fn write_synthetic(root: &Path, seed: u64, train_per_class: usize, test_per_class: usize) -> Result<()> {
    let splits = synthetic_raw_splits(seed, train_per_class, test_per_class, 10)?;
    for (name, (train, test)) in SYNTH_NAMES.iter().zip(&splits) {
        write_raw_split(root, name, "train", train)?;
        write_raw_split(root, name, "test", test)?;
    }
    Ok(())
}
