//! Image representation, PNG I/O, color conversion, barrel-distortion
//! correction, and tray-to-plant grid splitting.

mod grid;
mod png_io;
mod undistort;

pub use grid::{split_grid, GridSpec};
pub use png_io::{label_color, load_label_png, load_png, save_label_png, save_png};
pub use undistort::{undistort, DistortionParams};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ImageCoreError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed PNG {path}: {detail}")]
    MalformedPng { path: PathBuf, detail: String },
    #[error("unsupported PNG {path}: {detail}")]
    UnsupportedPng { path: PathBuf, detail: String },
    #[error("grid cell {cell} out of bounds for {width}x{height} image")]
    GridOutOfBounds {
        cell: usize,
        width: usize,
        height: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// 8-bit RGB image, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    /// Build from a raw buffer. Panics unless `pixels.len() == w*h*3`
    /// and both dimensions are at least 1.
    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> RgbImage {
        assert!(width >= 1 && height >= 1, "empty image");
        assert_eq!(pixels.len(), width * height * 3, "pixel buffer size");
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    /// Solid-color image.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> RgbImage {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        RgbImage::from_raw(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Nearest in-bounds pixel (edge replication for out-of-range reads).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> [u8; 3] {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }
}

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl GrayImage {
    pub fn from_raw(width: usize, height: usize, values: Vec<f32>) -> GrayImage {
        assert!(width >= 1 && height >= 1, "empty image");
        assert_eq!(values.len(), width * height, "value buffer size");
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        GrayImage {
            width,
            height,
            values,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> GrayImage {
        GrayImage::from_raw(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    /// Edge-replicated read.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }
}

/// Per-pixel leaf labels: 0 is background, k >= 1 identifies a leaf.
///
/// Labels need not be contiguous; they are plain identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelImage {
    pub fn from_raw(width: usize, height: usize, labels: Vec<u32>) -> LabelImage {
        assert!(width >= 1 && height >= 1, "empty image");
        assert_eq!(labels.len(), width * height, "label buffer size");
        LabelImage {
            width,
            height,
            labels,
        }
    }

    pub fn zeros(width: usize, height: usize) -> LabelImage {
        LabelImage::from_raw(width, height, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u32) {
        self.labels[y * self.width + x] = label;
    }

    /// Distinct nonzero labels, ascending.
    pub fn leaf_labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }
}

/// ITU-R BT.601 luma, scaled to `[0, 1]`.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let values = img
        .pixels
        .chunks_exact(3)
        .map(|p| {
            let luma = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            ((luma / 255.0) as f32).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::from_raw(img.width, img.height, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_white_is_one_black_is_zero() {
        let img = RgbImage::from_raw(2, 1, vec![255, 255, 255, 0, 0, 0]);
        let gray = to_grayscale(&img);
        assert_eq!(gray.get(0, 0), 1.0);
        assert_eq!(gray.get(1, 0), 0.0);
    }

    #[test]
    fn grayscale_pure_red_matches_weight() {
        let img = RgbImage::from_raw(1, 1, vec![255, 0, 0]);
        let gray = to_grayscale(&img);
        assert!((gray.get(0, 0) - 0.299).abs() < 1e-6);
    }

    #[test]
    fn clamped_reads_replicate_edges() {
        let img = RgbImage::from_raw(2, 2, vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]);
        assert_eq!(img.get_clamped(-5, -5), [1, 1, 1]);
        assert_eq!(img.get_clamped(10, 10), [4, 4, 4]);
    }

    #[test]
    fn leaf_labels_sorted_distinct() {
        let img = LabelImage::from_raw(3, 1, vec![5, 0, 2]);
        assert_eq!(img.leaf_labels(), vec![2, 5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn grayscale_stays_in_unit_range(
                w in 1usize..8, h in 1usize..8, seed in any::<u64>()
            ) {
                let mut s = crate::rng::Stream::new(seed);
                let pixels: Vec<u8> = (0..w * h * 3).map(|_| s.below(256) as u8).collect();
                let gray = to_grayscale(&RgbImage::from_raw(w, h, pixels));
                prop_assert!(gray.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
