//! Reader for the big-endian IDX files MNIST and Fashion-MNIST ship in.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct PixelMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major intensities in `[0, 1]`.
    pub data: Vec<f64>,
}

impl PixelMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                what: "pixel matrix",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Rotates a square matrix 90 degrees counter-clockwise.
    pub fn rotate_ccw(&self) -> Result<Self> {
        self.require_square()?;
        let n = self.rows;
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = self.get(c, n - 1 - r);
            }
        }
        Ok(Self {
            rows: n,
            cols: n,
            data,
        })
    }

    fn require_square(&self) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::Shape {
                what: "square image (columns)",
                expected: self.rows,
                got: self.cols,
            });
        }
        Ok(())
    }
}

/// Inverts every pixel (`v -> 1 - v`) and rotates the result 90 degrees
/// counter-clockwise.
pub fn transform_group0_image(img: &PixelMatrix) -> Result<PixelMatrix> {
    img.require_square()?;
    let inverted = PixelMatrix {
        rows: img.rows,
        cols: img.cols,
        data: img.data.iter().map(|v| 1.0 - v).collect(),
    };
    inverted.rotate_ccw()
}

struct Reader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path,
            bytes,
            pos: 0,
        })
    }

    fn err(&self, field: &'static str, detail: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            field,
            detail: detail.into(),
        }
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.err(field, "file truncated inside header"))?;
        let v = u32::from_be_bytes(chunk.try_into().expect("4-byte slice"));
        self.pos = end;
        Ok(v)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let got = self.u32("magic")?;
        if got != expected {
            return Err(self.err(
                "magic",
                format!("expected {expected:#010x}, found {got:#010x}"),
            ));
        }
        Ok(())
    }

    fn body(&self, field: &'static str, len: usize) -> Result<&[u8]> {
        let avail = self.bytes.len() - self.pos;
        if avail < len {
            return Err(self.err(
                field,
                format!("file truncated: header promises {len} bytes, {avail} present"),
            ));
        }
        Ok(&self.bytes[self.pos..self.pos + len])
    }
}

/// Reads an image file; returns `(rows, cols, images)` with pixels scaled to `[0, 1]`.
pub fn load_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let mut r = Reader::open(path)?;
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32("item count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let size = rows * cols;
    let body = r.body("pixel data", count * size)?;
    let images = body
        .chunks_exact(size.max(1))
        .take(count)
        .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = Reader::open(path)?;
    r.magic(LABELS_MAGIC)?;
    let count = r.u32("item count")? as usize;
    Ok(r.body("label data", count)?.to_vec())
}

/// Pairs every image with its label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<(PixelMatrix, u8)>> {
    let (rows, cols, images) = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            field: "item count",
            detail: format!(
                "{} labels for {} images in {}",
                labels.len(),
                images.len(),
                images_path.display()
            ),
        });
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(data, label)| (PixelMatrix { rows, cols, data }, label))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> PixelMatrix {
        PixelMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn zero_image_becomes_all_ones() {
        let out = transform_group0_image(&m(2, 2, &[0.0; 4])).unwrap();
        assert_eq!(out.data, vec![1.0; 4]);
    }

    #[test]
    fn bright_corner_moves_counter_clockwise() {
        // Counter-clockwise rotation sends (0,0) to (n-1, 0).
        let mut data = [0.0; 9];
        data[0] = 0.8;
        let out = transform_group0_image(&m(3, 3, &data)).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expected = if (r, c) == (2, 0) { 1.0 - 0.8 } else { 1.0 };
                assert!((out.get(r, c) - expected).abs() < 1e-15, "({r},{c})");
            }
        }
    }

    #[test]
    fn rotation_index_map() {
        // 0 1 2        2 5 8
        // 3 4 5   ->   1 4 7
        // 6 7 8        0 3 6
        let src = m(3, 3, &[0., 1., 2., 3., 4., 5., 6., 7., 8.]);
        assert_eq!(
            src.rotate_ccw().unwrap().data,
            vec![2., 5., 8., 1., 4., 7., 0., 3., 6.]
        );
    }

    #[test]
    fn four_rotations_are_identity() {
        let src = m(3, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        let mut x = src.clone();
        for _ in 0..4 {
            x = x.rotate_ccw().unwrap();
        }
        assert_eq!(x, src);
        // Transform twice inverts twice; four transforms are the identity too.
        let mut y = src.clone();
        for _ in 0..4 {
            y = transform_group0_image(&y).unwrap();
        }
        for (a, b) in y.data.iter().zip(&src.data) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            transform_group0_image(&m(2, 3, &[0.0; 6])),
            Err(Error::Shape { .. })
        ));
    }
}
