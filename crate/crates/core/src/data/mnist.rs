//! MNIST IDX reader and stroke-pixel point-set conversion.

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
/// Pixels strictly above this intensity become points.
pub const STROKE_THRESHOLD: u8 = 127;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn short(what: &str) -> Error {
    Error::Format(format!("truncated IDX {what}"))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut r = bytes;
    let magic = r.read_u32::<BigEndian>().map_err(|_| short("header"))?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n = r.read_u32::<BigEndian>().map_err(|_| short("header"))? as usize;
    let rows = r.read_u32::<BigEndian>().map_err(|_| short("header"))? as usize;
    let cols = r.read_u32::<BigEndian>().map_err(|_| short("header"))? as usize;
    if r.len() < n * rows * cols {
        return Err(short("pixel data"));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: r[..n * rows * cols].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = bytes;
    let magic = r.read_u32::<BigEndian>().map_err(|_| short("header"))?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n = r.read_u32::<BigEndian>().map_err(|_| short("header"))? as usize;
    if r.len() < n {
        return Err(short("label data"));
    }
    Ok(r[..n].to_vec())
}

/// Reads an IDX image file, gzip-compressed or plain.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(&read_maybe_gz(path.as_ref())?)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_maybe_gz(path.as_ref())?)
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.len() as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Stroke pixels of a 28×28 image as 2-D points, `x = (col - 13.5) / 13.5`,
/// `y = (row - 13.5) / 13.5`. More than `max_points` strokes are subsampled
/// uniformly without replacement, preserving raster order.
pub fn mnist_to_points(image: &[u8], max_points: usize, rng: &mut SeededRng) -> Result<PointCloud> {
    if image.len() != SIDE * SIDE {
        return Err(Error::DimensionMismatch {
            expected: SIDE * SIDE,
            got: image.len(),
        });
    }
    if max_points == 0 {
        return Err(Error::invalid("max_points must be positive"));
    }
    let half = (SIDE as f64 - 1.0) / 2.0;
    let mut strokes: Vec<[f64; 2]> = image
        .iter()
        .enumerate()
        .filter(|(_, &px)| px > STROKE_THRESHOLD)
        .map(|(i, _)| {
            let (row, col) = (i / SIDE, i % SIDE);
            [(col as f64 - half) / half, (row as f64 - half) / half]
        })
        .collect();
    if strokes.is_empty() {
        return Err(Error::invalid("blank image: no pixel above threshold"));
    }
    if strokes.len() > max_points {
        let keep = rng.sample_indices(strokes.len(), max_points);
        strokes = keep.into_iter().map(|i| strokes[i]).collect();
    }
    let n = strokes.len();
    let data = strokes.into_iter().flatten().collect();
    PointCloud::new(Matrix::from_vec(n, 2, data)?, None, "mnist")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_is_error() {
        let mut rng = SeededRng::new(1);
        assert!(mnist_to_points(&[0u8; 784], 10, &mut rng).is_err());
        assert!(mnist_to_points(&[0u8; 10], 10, &mut rng).is_err());
    }

    #[test]
    fn single_pixel_mapping() {
        let mut img = [0u8; 784];
        img[14 * 28 + 14] = 255;
        let mut rng = SeededRng::new(1);
        let c = mnist_to_points(&img, 10, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        let expected = 0.5 / 13.5;
        assert!((c.point(0)[0] - expected).abs() < 1e-15);
        assert!((c.point(0)[1] - expected).abs() < 1e-15);
        assert!((expected - 0.037).abs() < 1e-3);
    }

    #[test]
    fn threshold_is_strict() {
        let mut img = [0u8; 784];
        img[0] = 127;
        img[1] = 128;
        let mut rng = SeededRng::new(1);
        let c = mnist_to_points(&img, 10, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.point(0), &[-1.0 + 1.0 / 13.5, -1.0]);
    }

    #[test]
    fn full_white_capped() {
        let mut rng = SeededRng::new(1);
        let c = mnist_to_points(&[255u8; 784], 128, &mut rng).unwrap();
        assert_eq!(c.len(), 128);
        assert!(c.iter().all(|p| p.iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn idx_round_trip_and_magic_check() {
        let images = IdxImages {
            rows: 2,
            cols: 3,
            pixels: (0..12).collect(),
        };
        let enc = encode_idx_images(&images);
        assert_eq!(&enc[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_idx_images(&enc).unwrap(), images);
        assert_eq!(images.image(1), &[6, 7, 8, 9, 10, 11]);
        let labels = vec![3u8, 1, 4];
        assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
        assert!(parse_idx_labels(&enc).is_err());
        assert!(parse_idx_images(&enc[..20]).is_err());
    }

    #[test]
    fn reads_gzip_files() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![7u8, 2];
        let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&encode_idx_labels(&labels)).unwrap();
        let path = dir.path().join("labels.gz");
        std::fs::write(&path, gz.finish().unwrap()).unwrap();
        assert_eq!(read_idx_labels(&path).unwrap(), labels);
        let plain = dir.path().join("labels");
        std::fs::write(&plain, encode_idx_labels(&labels)).unwrap();
        assert_eq!(read_idx_labels(&plain).unwrap(), labels);
    }
}
