//! PNG load/save for color images and label annotations.
//!
//! Ground-truth annotations are PNGs with a black background and one
//! distinct non-black color per leaf. Loading maps distinct colors to
//! integer labels in first-occurrence scan order; saving assigns each
//! label a color from an injective colormap, so save/load round-trips
//! preserve the leaf partition.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::path::Path;

use image::{DynamicImage, ImageError};

use super::{ImageCoreError, LabelImage, RgbImage};

pub fn load_png(path: &Path) -> Result<RgbImage, ImageCoreError> {
    if !path.exists() {
        return Err(ImageCoreError::FileNotFound(path.to_path_buf()));
    }
    let decoded = image::open(path).map_err(|err| match err {
        ImageError::Unsupported(detail) => ImageCoreError::UnsupportedPng {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        },
        ImageError::IoError(source) if source.kind() == ErrorKind::NotFound => {
            ImageCoreError::FileNotFound(path.to_path_buf())
        }
        other => ImageCoreError::MalformedPng {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    // to_rgb8 downscales 16-bit channels and expands grayscale.
    let rgb = decoded.to_rgb8();
    let (width, height) = (rgb.width() as usize, rgb.height() as usize);
    Ok(RgbImage::from_raw(width, height, rgb.into_raw()))
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), ImageCoreError> {
    let buffer = image::RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .expect("buffer size checked by RgbImage invariant");
    DynamicImage::ImageRgb8(buffer)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|err| match err {
            ImageError::IoError(source) => ImageCoreError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => ImageCoreError::MalformedPng {
                path: path.to_path_buf(),
                detail: other.to_string(),
            },
        })
}

/// Color assigned to leaf label `k` in saved annotations.
///
/// Bit-spreading colormap (as used for segmentation palettes elsewhere):
/// injective for `k < 2^24`, black only at `k = 0`, and visually distinct
/// for small `k`.
pub fn label_color(k: u32) -> [u8; 3] {
    let mut c = k;
    let mut rgb = [0u8; 3];
    for shift in (0..8).rev() {
        for channel in 0..3 {
            rgb[channel] |= (((c >> channel) & 1) as u8) << shift;
        }
        c >>= 3;
    }
    rgb
}

pub fn save_label_png(img: &LabelImage, path: &Path) -> Result<(), ImageCoreError> {
    let mut pixels = Vec::with_capacity(img.width() * img.height() * 3);
    for &label in img.labels() {
        pixels.extend_from_slice(&label_color(label));
    }
    save_png(
        &RgbImage::from_raw(img.width(), img.height(), pixels),
        path,
    )
}

/// Load a ground-truth annotation: black is background, each distinct
/// non-black color becomes the next integer label in scan order.
pub fn load_label_png(path: &Path) -> Result<LabelImage, ImageCoreError> {
    let rgb = load_png(path)?;
    let mut mapping: HashMap<[u8; 3], u32> = HashMap::new();
    let mut labels = Vec::with_capacity(rgb.width() * rgb.height());
    for pixel in rgb.pixels().chunks_exact(3) {
        let color = [pixel[0], pixel[1], pixel[2]];
        if color == [0, 0, 0] {
            labels.push(0);
        } else {
            let next = mapping.len() as u32 + 1;
            labels.push(*mapping.entry(color).or_insert(next));
        }
    }
    Ok(LabelImage::from_raw(rgb.width(), rgb.height(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::fs;

    #[test]
    fn decodes_single_black_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.png");
        save_png(&RgbImage::from_raw(1, 1, vec![0, 0, 0]), &path).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!((img.width(), img.height()), (1, 1));
        assert_eq!(img.pixels(), &[0, 0, 0]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.png");
        let mut s = crate::rng::Stream::new(11);
        let pixels: Vec<u8> = (0..9 * 7 * 3).map(|_| s.below(256) as u8).collect();
        let img = RgbImage::from_raw(9, 7, pixels);

        save_png(&img, &path).unwrap();
        let loaded = load_png(&path).unwrap();
        assert_eq!(loaded, img);

        // Saving the loaded image again reproduces identical pixels.
        let path2 = dir.path().join("rt2.png");
        save_png(&loaded, &path2).unwrap();
        assert_eq!(load_png(&path2).unwrap(), img);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.png");
        save_png(&RgbImage::filled(8, 8, [10, 20, 30]), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_png(&path) {
            Err(ImageCoreError::MalformedPng { .. }) => {}
            other => panic!("expected MalformedPng, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_file_not_found() {
        match load_png(Path::new("/nonexistent/nope.png")) {
            Err(ImageCoreError::FileNotFound(_)) => {}
            other => panic!("expected FileNotFound, got {other:?}"),
        }
    }

    #[test]
    fn grayscale_png_expands_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let gray = image::GrayImage::from_raw(2, 1, vec![0, 200]).unwrap();
        gray.save(&path).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.get(0, 0), [0, 0, 0]);
        assert_eq!(img.get(1, 0), [200, 200, 200]);
    }

    #[test]
    fn sixteen_bit_png_downscales() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let deep: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(2, 1, vec![0, 0, 0, 65535, 65535, 65535]).unwrap();
        DynamicImage::ImageRgb16(deep).save(&path).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.get(0, 0), [0, 0, 0]);
        assert_eq!(img.get(1, 0), [255, 255, 255]);
    }

    #[test]
    fn label_colors_nonblack_and_distinct() {
        let mut seen = HashSet::new();
        for k in 1..=4096u32 {
            let c = label_color(k);
            assert_ne!(c, [0, 0, 0], "label {k} mapped to black");
            assert!(seen.insert(c), "label {k} color collides");
        }
        assert_eq!(label_color(0), [0, 0, 0]);
    }

    #[test]
    fn label_round_trip_preserves_partition() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        // Non-contiguous labels on purpose.
        let img = LabelImage::from_raw(4, 2, vec![0, 9, 9, 0, 4, 4, 0, 9]);
        save_label_png(&img, &path).unwrap();
        let loaded = load_label_png(&path).unwrap();

        // First-occurrence renumbering: 9 -> 1, 4 -> 2.
        assert_eq!(loaded.labels(), &[0, 1, 1, 0, 2, 2, 0, 1]);
    }
}
