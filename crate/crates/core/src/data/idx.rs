//! IDX container: big-endian magic (`0x00 0x00 type ndims`), one big-endian
//! `u32` per dimension, then the row-major payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A decoded unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("truncated header: need {} bytes, file has {}", at + 4, bytes.len())))
}

/// Parse an unsigned-byte IDX buffer whose magic must equal `expected`.
pub fn parse_idx(bytes: &[u8], expected: u32) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::format(format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        dims.push(read_u32(bytes, 4 + 4 * i)? as usize);
    }
    let header = 4 + 4 * ndims;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(format!("dimensions {dims:?} overflow")))?;
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(Error::format(format!("truncated payload: {} of {len} bytes", payload.len())));
    }
    if payload.len() > len {
        return Err(Error::format(format!("{} trailing bytes after payload", payload.len() - len)));
    }
    Ok(IdxArray { dims, data: payload.to_vec() })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Raw `[M, H, W]` image array.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?, IMAGES_MAGIC)
}

/// Raw `[M]` label array.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?, LABELS_MAGIC)
}

pub fn write_idx(path: impl AsRef<Path>, array: &IdxArray) -> Result<()> {
    fs::write(path, encode_idx(array))?;
    Ok(())
}

/// `[M, H, W]` bytes to a `[M, 1, H, W]` tensor scaled to `[0, 1]`.
pub fn images_to_tensor(images: &IdxArray) -> Result<Tensor> {
    let [m, h, w] = <[usize; 3]>::try_from(&images.dims[..])
        .map_err(|_| Error::format(format!("image array must be 3-D, got dims {:?}", images.dims)))?;
    Tensor::new(vec![m, 1, h, w], images.data.iter().map(|&b| b as f32 / 255.0).collect())
}

/// Inverse of [`images_to_tensor`] for values on the `k/255` grid.
pub fn tensor_to_images(images: &Tensor) -> Result<IdxArray> {
    let [m, c, h, w] = images.dims4()?;
    if c != 1 {
        return Err(Error::shape(format!("IDX images are single-channel, got {c} channels")));
    }
    let data = images.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Ok(IdxArray { dims: vec![m, h, w], data })
}
