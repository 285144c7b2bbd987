//! IDX container format as used by MNIST.
//!
//! A file is a big-endian `u32` magic (2051 for `u8` images of rank 3, 2049
//! for `u8` labels of rank 1), one big-endian `u32` per dimension, then the
//! raw bytes in row-major order.

use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

use super::{LabeledDataset, Normalization};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::IdxTruncated {
            what,
            needed: at + 4,
            available: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::IdxBadMagic { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    const WHAT: &str = "image file";
    check_magic(bytes, IMAGE_MAGIC, WHAT)?;
    let count = be_u32(bytes, 4, WHAT)? as usize;
    let rows = be_u32(bytes, 8, WHAT)? as usize;
    let cols = be_u32(bytes, 12, WHAT)? as usize;
    let needed = 16 + count * rows * cols;
    if bytes.len() < needed {
        return Err(Error::IdxTruncated {
            what: WHAT,
            needed,
            available: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..needed].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const WHAT: &str = "label file";
    check_magic(bytes, LABEL_MAGIC, WHAT)?;
    let count = be_u32(bytes, 4, WHAT)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(Error::IdxTruncated {
            what: WHAT,
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

/// Parses an image/label file pair into `[1, rows, cols]` inputs scaled to
/// `[-1, 1]`.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledDataset> {
    let images = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if images.count != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let norm = Normalization::pixels_to_unit_range();
    let size = images.rows * images.cols;
    let inputs = images
        .pixels
        .chunks_exact(size.max(1))
        .take(images.count)
        .map(|px| {
            let data = px.iter().map(|&p| f32::from(p) * norm.scale + norm.offset).collect();
            Tensor::new(vec![1, images.rows, images.cols], data)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = labels.into_iter().map(usize::from).collect();
    LabeledDataset::new(inputs, labels, &[], norm)
}

/// Re-serializes a dataset produced by [`parse_idx`] into `(images, labels)`
/// IDX bytes by inverting its normalization record.
pub fn encode_idx(ds: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let shape = ds.input_shape().unwrap_or(&[1, 0, 0]);
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::invalid("dataset", format!("input shape {shape:?} is not [1, rows, cols]")));
    }
    let norm = ds.normalization();
    let mut images = Vec::with_capacity(16 + ds.len() * shape[1] * shape[2]);
    images.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    images.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    images.extend_from_slice(&(shape[1] as u32).to_be_bytes());
    images.extend_from_slice(&(shape[2] as u32).to_be_bytes());
    for x in ds.inputs() {
        for &v in x.data() {
            let raw = ((v - norm.offset) / norm.scale).round();
            if !(0.0..=255.0).contains(&raw) {
                return Err(Error::invalid("dataset", format!("value {v} does not map to a byte")));
            }
            images.push(raw as u8);
        }
    }
    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &y in ds.labels() {
        let b = u8::try_from(y).map_err(|_| Error::invalid("dataset", format!("label {y} exceeds a byte")))?;
        labels.push(b);
    }
    Ok((images, labels))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            MnistSplit::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            MnistSplit::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

/// Loads the uncompressed MNIST files of `split` from `dir`.
pub fn load_mnist(dir: &Path, split: MnistSplit) -> Result<LabeledDataset> {
    let (img, lbl) = split.file_names();
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(p, e))
    };
    parse_idx(&read(img)?, &read(lbl)?)
}
