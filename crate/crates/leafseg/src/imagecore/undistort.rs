//! Radial barrel-distortion correction.

use crate::config::{Config, ConfigError};

use super::RgbImage;

/// Two-coefficient radial model. Radii are normalized by the image
/// half-diagonal so coefficients are resolution-independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionParams {
    pub k1: f64,
    pub k2: f64,
    /// Distortion center, pixels.
    pub cx: f64,
    pub cy: f64,
}

impl DistortionParams {
    pub fn identity(cx: f64, cy: f64) -> DistortionParams {
        DistortionParams {
            k1: 0.0,
            k2: 0.0,
            cx,
            cy,
        }
    }

    /// Read `k1`, `k2`, `cx`, `cy` from a camera config; absent keys
    /// default to zero.
    pub fn from_config(cfg: &Config) -> Result<DistortionParams, ConfigError> {
        Ok(DistortionParams {
            k1: cfg.get_or("k1", 0.0)?,
            k2: cfg.get_or("k2", 0.0)?,
            cx: cfg.get_or("cx", 0.0)?,
            cy: cfg.get_or("cy", 0.0)?,
        })
    }
}

/// Correct barrel distortion by inverse radial mapping.
///
/// Each output pixel samples the input at
/// `src = center + (dst - center) * (1 + k1*r^2 + k2*r^4)` where `r` is
/// the output-pixel radius normalized by the half-diagonal. Sampling is
/// bilinear; source taps outside the image contribute black.
pub fn undistort(img: &RgbImage, params: &DistortionParams) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let half_diag = ((w * w + h * h) as f64).sqrt() / 2.0;
    let mut out = vec![0u8; w * h * 3];

    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - params.cx;
            let dy = y as f64 - params.cy;
            let r2 = (dx * dx + dy * dy) / (half_diag * half_diag);
            let scale = 1.0 + params.k1 * r2 + params.k2 * r2 * r2;
            let sx = params.cx + dx * scale;
            let sy = params.cy + dy * scale;
            let rgb = sample_bilinear(img, sx, sy);
            let i = (y * w + x) * 3;
            out[i..i + 3].copy_from_slice(&rgb);
        }
    }
    RgbImage::from_raw(w, h, out)
}

fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> [u8; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);

    let tap = |tx: isize, ty: isize| -> [f64; 3] {
        if tx < 0 || ty < 0 || tx >= img.width() as isize || ty >= img.height() as isize {
            [0.0; 3]
        } else {
            let p = img.get(tx as usize, ty as usize);
            [p[0] as f64, p[1] as f64, p[2] as f64]
        }
    };

    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    let (p00, p10, p01, p11) = (tap(x0, y0), tap(x0 + 1, y0), tap(x0, y0 + 1), tap(x0 + 1, y0 + 1));

    let mut rgb = [0u8; 3];
    for c in 0..3 {
        let v = p00[c] * w00 + p10[c] * w10 + p01[c] * w01 + p11[c] * w11;
        rgb[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_image(w: usize, h: usize, seed: u64) -> RgbImage {
        let mut s = crate::rng::Stream::new(seed);
        let pixels = (0..w * h * 3).map(|_| s.below(256) as u8).collect();
        RgbImage::from_raw(w, h, pixels)
    }

    #[test]
    fn zero_coefficients_are_identity() {
        let img = noisy_image(17, 13, 3);
        let params = DistortionParams::identity(8.5, 6.5);
        assert_eq!(undistort(&img, &params), img);
    }

    #[test]
    fn center_pixel_is_fixed_point() {
        let mut img = RgbImage::filled(21, 21, [0, 0, 0]);
        img.set(10, 10, [255, 255, 255]);
        for k1 in [0.05, 0.3, -0.1] {
            let params = DistortionParams {
                k1,
                k2: 0.0,
                cx: 10.0,
                cy: 10.0,
            };
            let out = undistort(&img, &params);
            assert_eq!(out.get(10, 10), [255, 255, 255], "k1={k1}");
        }
    }

    #[test]
    fn corners_pull_from_outside_become_black() {
        let img = RgbImage::filled(32, 32, [200, 200, 200]);
        let params = DistortionParams {
            k1: 0.5,
            k2: 0.0,
            cx: 15.5,
            cy: 15.5,
        };
        let out = undistort(&img, &params);
        assert_eq!(out.get(0, 0), [0, 0, 0]);
        assert_eq!(out.get(31, 31), [0, 0, 0]);
    }

    #[test]
    fn config_defaults_to_zeros() {
        let cfg = Config::parse("").unwrap();
        let params = DistortionParams::from_config(&cfg).unwrap();
        assert_eq!(params, DistortionParams::identity(0.0, 0.0));
    }
}
