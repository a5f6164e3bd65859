use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length every dataset is brought to.
pub const TARGET_SIZE: usize = 32;

/// ITU-R BT.601 luma: `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(images: &Tensor) -> Result<Tensor> {
    let [m, c, h, w] = images.dims4()?;
    if c != 3 {
        return Err(Error::shape(format!("grayscale conversion needs 3 channels, got {c}")));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(m * plane);
    for img in images.data().chunks_exact(3 * plane.max(1)).take(m) {
        let (r, rest) = img.split_at(plane);
        let (g, b) = rest.split_at(plane);
        out.extend(
            r.iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) as f32),
        );
    }
    Tensor::new(vec![m, 1, h, w], out)
}

/// Bilinear resampling with pixel centres aligned (`align_corners = false`).
pub fn resize_bilinear(images: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [m, c, h, w] = images.dims4()?;
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::shape("cannot resize an empty image"));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(images.clone());
    }
    // Source coordinate, lower neighbour and interpolation weight per output index.
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = taps(out_h, h);
    let xs = taps(out_w, w);
    let mut out = Vec::with_capacity(m * c * out_h * out_w);
    for plane in images.data().chunks_exact(h * w) {
        for &(y0, y1, ty) in &ys {
            for &(x0, x1, tx) in &xs {
                let p = |y: usize, x: usize| plane[y * w + x] as f64;
                let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                out.push((top * (1.0 - ty) + bottom * ty) as f32);
            }
        }
    }
    Tensor::new(vec![m, c, out_h, out_w], out)
}

pub fn resize_to_32(images: &Tensor) -> Result<Tensor> {
    resize_bilinear(images, TARGET_SIZE, TARGET_SIZE)
}

/// Mirror each image left-right with probability `p`. Returns the batch and
/// which images were flipped.
pub fn hflip_with_probability<R: Rng>(batch: &Tensor, p: f64, rng: &mut R) -> Result<(Tensor, Vec<bool>)> {
    let [m, c, h, w] = batch.dims4()?;
    let mut out = batch.clone();
    let mut flipped = Vec::with_capacity(m);
    let img_len = c * h * w;
    for i in 0..m {
        let flip = rng.random_bool(p.clamp(0.0, 1.0));
        flipped.push(flip);
        if flip {
            for row in out.data_mut()[i * img_len..(i + 1) * img_len].chunks_exact_mut(w) {
                row.reverse();
            }
        }
    }
    Ok((out, flipped))
}

/// Training-time augmentation: horizontal flip with probability 0.5.
pub fn augment_hflip<R: Rng>(batch: &Tensor, rng: &mut R) -> Result<Tensor> {
    Ok(hflip_with_probability(batch, 0.5, rng)?.0)
}
