//! IDX image and label files (MNIST family).

use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::fl::LabeledData;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("file ends before the {expected} bytes its header declares")]
    TruncatedFile { expected: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} is outside 0..{classes}")]
    LabelOutOfRange { label: u8, classes: usize },
}

fn header(bytes: &[u8], magic: u32, dims: usize) -> Result<(Vec<usize>, usize), IdxError> {
    let need = 4 + 4 * dims;
    let mut c = Cursor::new(bytes);
    let found = c
        .read_u32::<BigEndian>()
        .map_err(|_| IdxError::TruncatedFile { expected: need })?;
    if found != magic {
        return Err(IdxError::BadMagic { found, expected: magic });
    }
    if bytes.len() < need {
        return Err(IdxError::TruncatedFile { expected: need });
    }
    let shape = (0..dims)
        .map(|_| c.read_u32::<BigEndian>().expect("length checked") as usize)
        .collect();
    Ok((shape, need))
}

/// Images as rows scaled to [0, 1].
pub fn parse_images(bytes: &[u8]) -> Result<DMatrix<f64>, IdxError> {
    let (shape, start) = header(bytes, IMAGE_MAGIC, 3)?;
    let (n, pixels) = (shape[0], shape[1] * shape[2]);
    let body = &bytes[start..];
    if body.len() < n * pixels {
        return Err(IdxError::TruncatedFile { expected: start + n * pixels });
    }
    Ok(DMatrix::from_row_iterator(
        n,
        pixels,
        body[..n * pixels].iter().map(|&b| b as f64 / 255.0),
    ))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let (shape, start) = header(bytes, LABEL_MAGIC, 1)?;
    let body = &bytes[start..];
    if body.len() < shape[0] {
        return Err(IdxError::TruncatedFile { expected: start + shape[0] });
    }
    Ok(body[..shape[0]].to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| IdxError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

/// Loads an image/label pair. With a filter, only samples whose raw label
/// appears in it are kept and the label becomes its position in the filter.
pub fn load_idx_dataset(
    images: &Path,
    labels: &Path,
    filter: Option<&[u8]>,
    classes: usize,
) -> Result<LabeledData, IdxError> {
    let x = parse_images(&read(images)?)?;
    let y = parse_labels(&read(labels)?)?;
    select(x, y, filter, classes)
}

pub fn select(x: DMatrix<f64>, y: Vec<u8>, filter: Option<&[u8]>, classes: usize) -> Result<LabeledData, IdxError> {
    if x.nrows() != y.len() {
        return Err(IdxError::CountMismatch {
            images: x.nrows(),
            labels: y.len(),
        });
    }
    let mut rows = Vec::new();
    let mut out = Vec::new();
    for (i, &raw) in y.iter().enumerate() {
        let label = match filter {
            Some(f) => match f.iter().position(|&l| l == raw) {
                Some(p) => p,
                None => continue,
            },
            None => raw as usize,
        };
        if label >= classes {
            return Err(IdxError::LabelOutOfRange { label: raw, classes });
        }
        rows.push(i);
        out.push(label);
    }
    Ok(LabeledData {
        features: x.select_rows(&rows),
        labels: out,
    })
}

/// Encodes `n` images of `rows × cols` bytes.
pub fn encode_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.write_u32::<BigEndian>(IMAGE_MAGIC).unwrap();
    for d in [n, rows, cols] {
        out.write_u32::<BigEndian>(d as u32).unwrap();
    }
    out.write_all(pixels).unwrap();
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(LABEL_MAGIC).unwrap();
    out.write_u32::<BigEndian>(labels.len() as u32).unwrap();
    out.write_all(labels).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_scales_pixels() {
        let bytes = encode_images(2, 1, 2, &[0, 255, 51, 102]);
        let x = parse_images(&bytes).unwrap();
        assert_eq!(x.shape(), (2, 2));
        assert_eq!(x[(0, 1)], 1.0);
        assert!((x[(1, 0)] - 0.2).abs() < 1e-15);
        assert_eq!(parse_labels(&encode_labels(&[3, 7])).unwrap(), vec![3, 7]);
    }

    #[test]
    fn wrong_magic() {
        let err = parse_images(&encode_labels(&[1])).unwrap_err();
        assert!(matches!(err, IdxError::BadMagic { found: LABEL_MAGIC, expected: IMAGE_MAGIC }));
    }

    #[test]
    fn truncated_body() {
        let mut bytes = encode_images(2, 2, 2, &[0; 8]);
        bytes.truncate(20);
        assert!(matches!(parse_images(&bytes), Err(IdxError::TruncatedFile { expected: 24 })));
        assert!(matches!(parse_labels(&[0, 0]), Err(IdxError::TruncatedFile { .. })));
    }

    #[test]
    fn letter_filter_keeps_ten_classes() {
        let raw: Vec<u8> = (0..60).map(|i| (i % 26 + 1) as u8).collect();
        let x = DMatrix::from_element(60, 1, 0.5);
        let filter: Vec<u8> = (1..=10).collect();
        let d = select(x, raw, Some(&filter), 10).unwrap();
        let mut seen = d.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn unfiltered_letters_overflow() {
        let x = DMatrix::from_element(2, 1, 0.0);
        assert!(matches!(
            select(x, vec![3, 12], None, 10),
            Err(IdxError::LabelOutOfRange { label: 12, classes: 10 })
        ));
    }
}
