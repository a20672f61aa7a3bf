//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 3072 pixel bytes (1024 red, 1024 green, 1024 blue).

use std::path::Path;

use super::{Dataset, Labels, Provenance};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const RECORD_BYTES: usize = 3073;
pub const PIXELS: usize = 3072;

/// Parses one batch file into `(labels, scaled pixels)`.
pub fn parse_cifar10(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    if bytes.is_empty() {
        return Err(Error::format(0, "length", "empty file"));
    }
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::format(
            bytes.len() - bytes.len() % RECORD_BYTES,
            "length",
            format!("{} bytes is not a multiple of {RECORD_BYTES}", bytes.len()),
        ));
    }
    let count = bytes.len() / RECORD_BYTES;
    let mut labels = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count * PIXELS);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::format(
                i * RECORD_BYTES,
                "label",
                format!("class {} out of range 0..10", rec[0]),
            ));
        }
        labels.push(rec[0] as usize);
        pixels.extend(rec[1..].iter().map(|&p| f64::from(p) / 255.0));
    }
    Ok((labels, pixels))
}

/// Concatenates the given batch files.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::arg("no CIFAR-10 batch files given"));
    }
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for p in batch_paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let (l, px) = parse_cifar10(&bytes)?;
        labels.extend(l);
        pixels.extend(px);
    }
    Dataset::new(
        DenseMatrix::from_vec(labels.len(), PIXELS, pixels)?,
        Labels::Classes(labels),
        10,
        Provenance::Cifar10,
    )
}

/// Training batches (`data_batch_1.bin` … `data_batch_5.bin`, whichever exist)
/// or the test batch from a directory.
pub fn load_cifar10_dir(dir: impl AsRef<Path>, test: bool) -> Result<Dataset> {
    let dir = dir.as_ref();
    let paths: Vec<_> = if test {
        vec![dir.join("test_batch.bin")]
    } else {
        (1..=5)
            .map(|i| dir.join(format!("data_batch_{i}.bin")))
            .filter(|p| p.exists())
            .collect()
    };
    if paths.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no CIFAR-10 batches found"),
        ));
    }
    load_cifar10(&paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(count: usize) -> Vec<u8> {
        let mut b = Vec::with_capacity(count * RECORD_BYTES);
        for i in 0..count {
            b.push((i % 10) as u8);
            b.extend((0..PIXELS).map(|j| ((i + j) % 256) as u8));
        }
        b
    }

    #[test]
    fn parses_records() {
        let (labels, px) = parse_cifar10(&batch(4)).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(px.len(), 4 * PIXELS);
        assert!(px.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_and_misaligned_files() {
        assert!(parse_cifar10(&[]).unwrap_err().is_format());
        let mut b = batch(2);
        b.pop();
        assert!(matches!(
            parse_cifar10(&b),
            Err(Error::Format { field: "length", .. })
        ));
    }

    #[test]
    fn label_out_of_range() {
        let mut b = batch(2);
        b[RECORD_BYTES] = 11;
        assert!(matches!(
            parse_cifar10(&b),
            Err(Error::Format { field: "label", offset: RECORD_BYTES, .. })
        ));
    }

    #[test]
    fn loads_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data_batch_1.bin");
        std::fs::write(&p, batch(3)).unwrap();
        let d = load_cifar10_dir(dir.path(), false).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.input_dim(), 3072);
        assert!(load_cifar10_dir(dir.path(), true).is_err());
    }
}
