//! Canny edge detection with per-pixel gradient orientation.
//!
//! The sequence is the standard one: Gaussian blur, Sobel gradients,
//! non-maximum suppression with 4-direction quantization, then hysteresis
//! thresholding with 8-connected chaining. Thresholds apply to gradient
//! magnitude normalized to `[0, 1]`, so they are independent of image
//! scale. The surviving pixels keep their gradient orientation, which
//! patch extraction later uses to sample along edge normals.

use crate::imagecore::GrayImage;

#[derive(Debug, thiserror::Error)]
pub enum EdgeError {
    #[error("image {width}x{height} too small, need at least 3x3")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid Canny parameters: {0}")]
    InvalidParams(String),
}

/// Canny parameters. Thresholds are on normalized gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    pub sigma: f32,
    pub low: f32,
    pub high: f32,
}

impl CannyParams {
    pub fn new(sigma: f32, low: f32, high: f32) -> Result<CannyParams, EdgeError> {
        if !(sigma > 0.0) {
            return Err(EdgeError::InvalidParams(format!("sigma={sigma}, need > 0")));
        }
        if !(0.0 <= low && low <= high && high <= 1.0) {
            return Err(EdgeError::InvalidParams(format!(
                "thresholds low={low} high={high}, need 0 <= low <= high <= 1"
            )));
        }
        Ok(CannyParams { sigma, low, high })
    }
}

impl Default for CannyParams {
    /// Biased toward over-detection; the classifier is responsible for
    /// discarding irrelevant edges.
    fn default() -> CannyParams {
        CannyParams {
            sigma: 1.4,
            low: 0.04,
            high: 0.10,
        }
    }
}

/// Detected edges: a boolean mask plus gradient orientation, which is
/// meaningful only where the mask is set.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    orientation: Vec<f32>,
}

impl EdgeMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Gradient angle at an edge pixel, radians in `(-pi, pi]`.
    #[inline]
    pub fn orientation(&self, x: usize, y: usize) -> f32 {
        self.orientation[y * self.width + x]
    }

    pub fn edge_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Edge pixels in row-major order with their orientations.
    pub fn edge_pixels(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        let w = self.width;
        self.mask.iter().enumerate().filter_map(move |(i, &m)| {
            m.then(|| (i % w, i / w, self.orientation[i]))
        })
    }
}

/// Separable Gaussian blur with edge replication at the borders.
///
/// Kernel radius is `ceil(3*sigma)` and the kernel is normalized to unit
/// sum, so constant images pass through unchanged.
pub fn gaussian_blur(img: &GrayImage, sigma: f32) -> GrayImage {
    assert!(sigma > 0.0, "sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    // Horizontal pass.
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &weight) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - radius;
                acc += weight * img.get_clamped(sx, y as isize) as f64;
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let tmp = GrayImage::from_raw(w, h, tmp.iter().map(|v| v.clamp(0.0, 1.0)).collect());

    // Vertical pass.
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for (k, &weight) in kernel.iter().enumerate() {
                let sy = y as isize + k as isize - radius;
                acc += weight * tmp.get_clamped(x as isize, sy) as f64;
            }
            out[y * w + x] = (acc as f32).clamp(0.0, 1.0);
        }
    }
    GrayImage::from_raw(w, h, out)
}

fn gaussian_kernel(sigma: f32) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let sigma = sigma as f64;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

/// Largest possible Sobel response on `[0, 1]` inputs: |gx| and |gy| are
/// each at most 4, so the magnitude is at most `4*sqrt(2)`.
const SOBEL_MAX_MAGNITUDE: f64 = 5.656854249492381;

/// 3x3 Sobel gradients with edge replication.
///
/// Returns `(magnitude, orientation)` fields with the image's shape.
/// Magnitude is normalized by the maximum possible response so it lies
/// in `[0, 1]`; orientation is `atan2(gy, gx)` in `(-pi, pi]`, with y
/// pointing down.
pub fn sobel_gradients(img: &GrayImage) -> Result<(Vec<f32>, Vec<f32>), EdgeError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(EdgeError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let mut magnitude = vec![0.0f32; w * h];
    let mut orientation = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| -> f64 {
                img.get_clamped(x as isize + dx, y as isize + dy) as f64
            };
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            magnitude[i] = ((gx * gx + gy * gy).sqrt() / SOBEL_MAX_MAGNITUDE) as f32;
            orientation[i] = gy.atan2(gx) as f32;
        }
    }
    Ok((magnitude, orientation))
}

/// Canny edge detection: blur, gradients, non-maximum suppression,
/// hysteresis. Orientation is copied from the gradient stage at the
/// surviving pixels.
pub fn canny(img: &GrayImage, params: &CannyParams) -> Result<EdgeMap, EdgeError> {
    let blurred = gaussian_blur(img, params.sigma);
    let (magnitude, orientation) = sobel_gradients(&blurred)?;
    let (w, h) = (img.width(), img.height());

    let thinned = non_maximum_suppression(&magnitude, &orientation, w, h);
    let mask = hysteresis(&thinned, w, h, params.low, params.high);

    Ok(EdgeMap {
        width: w,
        height: h,
        mask,
        orientation,
    })
}

/// Keep only local maxima along the quantized gradient direction.
///
/// The comparison is strict against the first neighbor and non-strict
/// against the second, so a two-pixel plateau keeps exactly one pixel.
/// Border pixels are dropped outright.
fn non_maximum_suppression(magnitude: &[f32], orientation: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = magnitude[i];
            if m == 0.0 {
                continue;
            }
            // Quantize to 0, 45, 90, 135 degrees, folding opposite signs.
            let mut angle = orientation[i].to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (d1, d2): ((isize, isize), (isize, isize)) = if !(22.5..157.5).contains(&angle) {
                ((-1, 0), (1, 0))
            } else if angle < 67.5 {
                ((-1, -1), (1, 1))
            } else if angle < 112.5 {
                ((0, -1), (0, 1))
            } else {
                ((-1, 1), (1, -1))
            };
            let n1 = magnitude[((y as isize + d1.1) * w as isize + x as isize + d1.0) as usize];
            let n2 = magnitude[((y as isize + d2.1) * w as isize + x as isize + d2.0) as usize];
            if m > n1 && m >= n2 {
                out[i] = m;
            }
        }
    }
    out
}

/// Double threshold with 8-connected chaining: strong pixels seed a
/// flood over weak pixels.
fn hysteresis(thinned: &[f32], w: usize, h: usize, low: f32, high: f32) -> Vec<bool> {
    let mut mask = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thinned.iter().enumerate() {
        if m >= high && !mask[i] {
            mask[i] = true;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (x, y) = (j % w, j / w);
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let n = ny as usize * w + nx as usize;
                        if !mask[n] && thinned[n] >= low {
                            mask[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::GrayImage;

    fn vertical_step(w: usize, h: usize, at: usize) -> GrayImage {
        let mut values = vec![0.0f32; w * h];
        for y in 0..h {
            for x in at..w {
                values[y * w + x] = 1.0;
            }
        }
        GrayImage::from_raw(w, h, values)
    }

    fn random_gray(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut s = crate::rng::Stream::new(seed);
        GrayImage::from_raw(w, h, (0..w * h).map(|_| s.unit_f64() as f32).collect())
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = GrayImage::filled(9, 9, 0.42);
        let out = gaussian_blur(&img, 1.0);
        for &v in out.values() {
            assert!((v - 0.42).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_impulse_matches_explicit_2d_kernel() {
        // Oracle: evaluate the normalized 2D Gaussian kernel directly and
        // convolve naively; the separable implementation must agree.
        let (w, h) = (15, 15);
        let mut img = GrayImage::filled(w, h, 0.0);
        img.set(7, 7, 1.0);
        let sigma = 1.0f32;
        let out = gaussian_blur(&img, sigma);

        let radius = (3.0 * sigma).ceil() as isize;
        let s = sigma as f64;
        let size = (2 * radius + 1) as usize;
        let mut kernel2d = vec![0.0f64; size * size];
        let mut sum = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let v = (-((dx * dx + dy * dy) as f64) / (2.0 * s * s)).exp();
                kernel2d[((dy + radius) * (2 * radius + 1) + dx + radius) as usize] = v;
                sum += v;
            }
        }
        for v in &mut kernel2d {
            *v /= sum;
        }

        // Naive full convolution of the impulse image.
        for y in 0..h {
            for x in 0..w {
                let mut expect = 0.0f64;
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        let sx = (x as isize + dx).clamp(0, w as isize - 1);
                        let sy = (y as isize + dy).clamp(0, h as isize - 1);
                        if sx == 7 && sy == 7 {
                            expect +=
                                kernel2d[((-dy + radius) * (2 * radius + 1) - dx + radius) as usize];
                        }
                    }
                }
                assert!(
                    (out.get(x, y) as f64 - expect).abs() < 1e-6,
                    "mismatch at ({x},{y}): {} vs {expect}",
                    out.get(x, y)
                );
            }
        }
        // Center value is the kernel's center weight.
        let center = kernel2d[(radius * (2 * radius + 1) + radius) as usize];
        assert!((out.get(7, 7) as f64 - center).abs() < 1e-6);
    }

    #[test]
    fn blur_preserves_mass_of_interior_support() {
        let (w, h) = (21, 21);
        let mut img = GrayImage::filled(w, h, 0.0);
        img.set(10, 10, 0.8);
        img.set(11, 10, 0.3);
        let out = gaussian_blur(&img, 1.0);
        let mass_in: f64 = img.values().iter().map(|&v| v as f64).sum();
        let mass_out: f64 = out.values().iter().map(|&v| v as f64).sum();
        assert!((mass_in - mass_out).abs() < 1e-5);
    }

    #[test]
    fn sobel_constant_image_has_zero_magnitude() {
        let img = GrayImage::filled(8, 8, 0.5);
        let (magnitude, _) = sobel_gradients(&img).unwrap();
        assert!(magnitude.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sobel_vertical_step_peaks_on_step_with_horizontal_gradient() {
        let img = vertical_step(9, 9, 4);
        let (magnitude, orientation) = sobel_gradients(&img).unwrap();
        for y in 1..8 {
            let row = &magnitude[y * 9..(y + 1) * 9];
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(peak == 3 || peak == 4, "peak at {peak}");
            // Gradient is horizontal: orientation 0 (or pi for reversed steps).
            let theta = orientation[y * 9 + peak];
            assert!(theta.abs() < 1e-6 || (theta.abs() - std::f32::consts::PI).abs() < 1e-6);
        }
    }

    #[test]
    fn sobel_diagonal_ramp_orientation_is_quarter_pi() {
        // Oracle: the analytic gradient of v = c*(x+y) points at 45 degrees.
        let (w, h) = (12, 12);
        let c = 0.04f32;
        let values = (0..w * h)
            .map(|i| c * ((i % w) + (i / w)) as f32)
            .collect();
        let img = GrayImage::from_raw(w, h, values);
        let (_, orientation) = sobel_gradients(&img).unwrap();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let theta = orientation[y * w + x];
                assert!(
                    (theta - std::f32::consts::FRAC_PI_4).abs() < 1e-5,
                    "orientation {theta} at ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn sobel_rejects_tiny_images() {
        let img = GrayImage::filled(2, 5, 0.0);
        assert!(matches!(
            sobel_gradients(&img),
            Err(EdgeError::ImageTooSmall { width: 2, height: 5 })
        ));
    }

    #[test]
    fn canny_constant_image_has_no_edges() {
        let img = GrayImage::filled(16, 16, 0.7);
        let edges = canny(&img, &CannyParams::default()).unwrap();
        assert_eq!(edges.edge_count(), 0);
    }

    #[test]
    fn canny_vertical_step_gives_one_pixel_per_interior_row() {
        // Oracle: count edge pixels per row; NMS must thin the response
        // to exactly one column.
        let (w, h) = (24, 16);
        let img = vertical_step(w, h, 12);
        let params = CannyParams::new(1.0, 0.05, 0.2).unwrap();
        let edges = canny(&img, &params).unwrap();
        for y in 1..h - 1 {
            let count = (0..w).filter(|&x| edges.is_edge(x, y)).count();
            assert_eq!(count, 1, "row {y} has {count} edge pixels");
        }
    }

    #[test]
    fn canny_lowering_low_threshold_never_removes_edges() {
        for seed in 0..8 {
            let img = random_gray(24, 24, seed);
            let high = 0.25f32;
            let loose = canny(&img, &CannyParams::new(1.0, 0.02, high).unwrap()).unwrap();
            let tight = canny(&img, &CannyParams::new(1.0, 0.10, high).unwrap()).unwrap();
            for y in 0..24 {
                for x in 0..24 {
                    if tight.is_edge(x, y) {
                        assert!(loose.is_edge(x, y), "seed {seed}: lost edge at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn canny_is_deterministic() {
        let img = random_gray(32, 20, 5);
        let params = CannyParams::default();
        let a = canny(&img, &params).unwrap();
        let b = canny(&img, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn surviving_strong_pixels_always_in_final_mask() {
        // Redo NMS here and check every pixel at or above `high` that
        // survives thinning is in the output mask.
        for seed in 20..26 {
            let img = random_gray(20, 20, seed);
            let params = CannyParams::new(1.2, 0.05, 0.18).unwrap();
            let blurred = gaussian_blur(&img, params.sigma);
            let (magnitude, orientation) = sobel_gradients(&blurred).unwrap();
            let thinned = non_maximum_suppression(&magnitude, &orientation, 20, 20);
            let edges = canny(&img, &params).unwrap();
            for (i, &m) in thinned.iter().enumerate() {
                if m >= params.high {
                    assert!(edges.is_edge(i % 20, i / 20), "seed {seed} pixel {i}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn nms_output_subset_of_nonzero_magnitude(seed in any::<u64>()) {
                let img = random_gray(16, 16, seed);
                let blurred = gaussian_blur(&img, 1.0);
                let (magnitude, orientation) = sobel_gradients(&blurred).unwrap();
                let thinned = non_maximum_suppression(&magnitude, &orientation, 16, 16);
                for (i, &t) in thinned.iter().enumerate() {
                    if t > 0.0 {
                        prop_assert!(magnitude[i] > 0.0);
                    }
                }
            }

            #[test]
            fn blur_output_stays_in_unit_range(seed in any::<u64>(), sigma in 0.5f32..3.0) {
                let img = random_gray(12, 12, seed);
                let out = gaussian_blur(&img, sigma);
                prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
