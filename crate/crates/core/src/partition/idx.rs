//! IDX (MNIST-family) image and label files.
//!
//! Big-endian. Images: magic `0x00000803`, count, rows, cols, then
//! `count * rows * cols` unsigned bytes. Labels: magic `0x00000801`, count,
//! then `count` unsigned bytes.

use std::fs;
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{LabeledBatch, Matrix};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::parse_at_byte(path, bytes.len(), format!("truncated header while reading {what}")))
}

/// Parses an image file into `(count, rows * cols, pixels scaled to [0, 1])`.
pub fn parse_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0, path, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse_at_byte(
            path,
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, path, "image count")? as usize;
    let rows = be_u32(bytes, 8, path, "row count")? as usize;
    let cols = be_u32(bytes, 12, path, "column count")? as usize;
    let dim = rows * cols;
    let expected = 16 + count * dim;
    if bytes.len() < expected {
        return Err(Error::parse_at_byte(
            path,
            bytes.len(),
            format!("truncated pixel data: header declares {count} images of {rows}x{cols}, needs {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::parse_at_byte(path, expected, "trailing bytes after pixel data"));
    }
    let pixels = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((count, dim, pixels))
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, path, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse_at_byte(
            path,
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, path, "label count")? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::parse_at_byte(
            path,
            bytes.len(),
            format!("truncated label data: header declares {count} labels"),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::parse_at_byte(path, expected, "trailing bytes after label data"));
    }
    Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect())
}

/// Loads an image/label pair as a batch plus its class count (`max label + 1`).
pub fn load_idx_batch(images_path: &Path, labels_path: &Path) -> Result<(LabeledBatch, usize)> {
    let img = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lab = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (count, dim, pixels) = parse_images(&img, images_path)?;
    let labels = parse_labels(&lab, labels_path)?;
    if labels.len() != count {
        return Err(Error::parse_at_byte(
            labels_path,
            4,
            format!("label count {} does not match image count {count}", labels.len()),
        ));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let batch = LabeledBatch::new(Matrix::new(count, dim, pixels)?, labels, num_classes)?;
    Ok((batch, num_classes))
}

/// Loads an IDX pair as a [`Dataset`] with an empty test split.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (batch, num_classes) = load_idx_batch(images_path, labels_path)?;
    let dim = batch.dim();
    Dataset::new(batch, LabeledBatch::empty(dim), num_classes.max(1))
}

/// Encodes images (each `rows * cols` bytes) in IDX format.
pub fn encode_images(rows: u32, cols: u32, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * (rows * cols) as usize);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    for im in images {
        out.extend_from_slice(im);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
