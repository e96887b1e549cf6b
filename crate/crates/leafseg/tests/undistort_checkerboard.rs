//! Undistortion straightens checkerboard lines.
//!
//! A checkerboard is rendered through the inverse of the radial model
//! (numerically inverted per pixel), so the resulting image is exactly
//! what the corrector expects for its coefficients. A least-squares line
//! fit to the detected vertical checker boundaries then measures
//! straightness before and after correction; correction must cut the
//! residual by at least half.

use leafseg::imagecore::{undistort, DistortionParams, RgbImage};

const SIZE: usize = 200;
const CELL: f64 = 25.0;
const K1: f64 = 0.1;
const DARK: f64 = 40.0;
const LIGHT: f64 = 215.0;

fn checker(x: f64, y: f64) -> f64 {
    let cx = (x / CELL).floor() as i64;
    let cy = (y / CELL).floor() as i64;
    if (cx + cy).rem_euclid(2) == 0 {
        DARK
    } else {
        LIGHT
    }
}

/// Radius scaling of the correction model.
fn scale(r_norm: f64) -> f64 {
    1.0 + K1 * r_norm * r_norm
}

/// Invert rho * scale(rho/halfdiag) = target by bisection.
fn invert_radius(target: f64, half_diag: f64) -> f64 {
    if target == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, target);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid * scale(mid / half_diag) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Render the checkerboard as the camera with this distortion would see
/// it: content the corrector will pull back into straight lines.
fn distorted_checkerboard(center: f64, half_diag: f64) -> RgbImage {
    let mut pixels = Vec::with_capacity(SIZE * SIZE * 3);
    for y in 0..SIZE {
        for x in 0..SIZE {
            // 3x3 supersampling for clean boundary profiles.
            let mut acc = 0.0;
            for sy in 0..3 {
                for sx in 0..3 {
                    let qx = x as f64 + (sx as f64 - 1.0) / 3.0;
                    let qy = y as f64 + (sy as f64 - 1.0) / 3.0;
                    let dx = qx - center;
                    let dy = qy - center;
                    let rho_q = (dx * dx + dy * dy).sqrt();
                    let rho_p = invert_radius(rho_q, half_diag);
                    let (px, py) = if rho_q == 0.0 {
                        (center, center)
                    } else {
                        (center + dx * rho_p / rho_q, center + dy * rho_p / rho_q)
                    };
                    acc += checker(px, py);
                }
            }
            let v = (acc / 9.0).round().clamp(0.0, 255.0) as u8;
            pixels.extend_from_slice(&[v, v, v]);
        }
    }
    RgbImage::from_raw(SIZE, SIZE, pixels)
}

/// Sub-pixel crossing of the mid intensity nearest `x0` on one row.
fn find_crossing(img: &RgbImage, y: usize, x0: f64) -> Option<f64> {
    let mid = (DARK + LIGHT) / 2.0;
    let lo = (x0 - 10.0).max(1.0) as usize;
    let hi = ((x0 + 10.0) as usize).min(img.width() - 2);
    let mut best: Option<f64> = None;
    for x in lo..hi {
        let a = img.get(x, y)[0] as f64;
        let b = img.get(x + 1, y)[0] as f64;
        if (a - mid) * (b - mid) <= 0.0 && a != b {
            let t = (mid - a) / (b - a);
            if (0.0..=1.0).contains(&t) {
                let pos = x as f64 + t;
                let better = match best {
                    None => true,
                    Some(prev) => (pos - x0).abs() < (prev - x0).abs(),
                };
                if better {
                    best = Some(pos);
                }
            }
        }
    }
    best
}

/// Mean squared residual of least-squares line fits (x as a function of
/// y) over the given vertical checker boundaries.
fn line_fit_residual(img: &RgbImage, boundary_columns: &[f64], rows: std::ops::Range<usize>) -> f64 {
    let mut total = 0.0;
    let mut fitted = 0usize;
    for &x0 in boundary_columns {
        let points: Vec<(f64, f64)> = rows
            .clone()
            .filter_map(|y| find_crossing(img, y, x0).map(|x| (y as f64, x)))
            .collect();
        assert!(
            points.len() * 10 >= rows.len() * 9,
            "boundary near {x0} barely detected: {} of {} rows",
            points.len(),
            rows.len()
        );
        let n = points.len() as f64;
        let sy: f64 = points.iter().map(|p| p.0).sum();
        let sx: f64 = points.iter().map(|p| p.1).sum();
        let syy: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sy * sx) / (n * syy - sy * sy);
        let intercept = (sx - slope * sy) / n;
        let ss: f64 = points
            .iter()
            .map(|&(y, x)| {
                let e = x - (intercept + slope * y);
                e * e
            })
            .sum();
        total += ss / n;
        fitted += 1;
    }
    total / fitted as f64
}

#[test]
fn correction_halves_line_fit_residual() {
    let center = SIZE as f64 / 2.0;
    let half_diag = ((SIZE * SIZE + SIZE * SIZE) as f64).sqrt() / 2.0;
    let distorted = distorted_checkerboard(center, half_diag);
    let params = DistortionParams {
        k1: K1,
        k2: 0.0,
        cx: center,
        cy: center,
    };
    let corrected = undistort(&distorted, &params);

    // Interior vertical boundaries over a tall row band, so the radial
    // bow is well above the resampling noise floor.
    let columns: Vec<f64> = (2..=6).map(|k| k as f64 * CELL).collect();
    let rows = 20..180;
    let before = line_fit_residual(&distorted, &columns, rows.clone());
    let after = line_fit_residual(&corrected, &columns, rows);

    assert!(
        after <= 0.5 * before,
        "residual did not drop by half: before {before:.4}, after {after:.4}"
    );
    // The distorted input is genuinely bowed, not borderline.
    assert!(before > 0.05, "fixture too easy: before {before:.5}");
}
