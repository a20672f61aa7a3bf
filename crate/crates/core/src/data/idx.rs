//! MNIST in IDX format: big-endian header, unsigned-byte payload.

use std::path::Path;

use super::{Dataset, Labels, Provenance};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset, field, "file ends inside header"))
}

/// Parsed image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            0,
            "magic",
            format!("expected 0x{IMAGES_MAGIC:08x} for images, found 0x{magic:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, "count")? as usize;
    let rows = be_u32(bytes, 8, "rows")? as usize;
    let cols = be_u32(bytes, 12, "cols")? as usize;
    for (v, off, name) in [(count, 4, "count"), (rows, 8, "rows"), (cols, 12, "cols")] {
        if v == 0 {
            return Err(Error::format(off, name, "must be positive"));
        }
    }
    let payload = &bytes[16..];
    let expect = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(4, "count", "payload size overflows"))?;
    if payload.len() != expect {
        return Err(Error::format(
            16,
            "payload",
            format!(
                "{count} images of {rows}x{cols} need {expect} bytes, found {}",
                payload.len()
            ),
        ));
    }
    Ok((count, rows, cols, payload))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            0,
            "magic",
            format!("expected 0x{LABELS_MAGIC:08x} for labels, found 0x{magic:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, "count")? as usize;
    if count == 0 {
        return Err(Error::format(4, "count", "must be positive"));
    }
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(
            8,
            "payload",
            format!("{count} labels declared, {} bytes present", payload.len()),
        ));
    }
    payload
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b < 10 {
                Ok(b as usize)
            } else {
                Err(Error::format(8 + i, "label", format!("class {b} out of range 0..10")))
            }
        })
        .collect()
}

/// Builds a dataset from in-memory IDX image and label files.
pub fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let classes = parse_idx_labels(labels)?;
    if classes.len() != count {
        return Err(Error::format(
            4,
            "count",
            format!("image count {count} != label count {}", classes.len()),
        ));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(
        DenseMatrix::from_vec(count, rows * cols, data)?,
        Labels::Classes(classes),
        10,
        Provenance::Mnist,
    )
}

pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    mnist_from_bytes(&images, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

/// Loads the standard file pair from a directory.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: MnistSplit) -> Result<Dataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    load_mnist(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
