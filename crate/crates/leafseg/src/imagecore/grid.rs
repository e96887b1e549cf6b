//! Tray-to-plant splitting on a fixed pot grid.

use crate::config::{Config, ConfigError};

use super::{ImageCoreError, RgbImage};

/// Static grid of pot positions. Cell ids are row-major; only cells
/// listed in `active` contain plants and get extracted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub origin_x: usize,
    pub origin_y: usize,
    pub stride_x: usize,
    pub stride_y: usize,
    active: Vec<usize>,
}

impl GridSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        origin: (usize, usize),
        stride: (usize, usize),
        mut active: Vec<usize>,
    ) -> GridSpec {
        assert!(rows >= 1 && cols >= 1, "degenerate grid");
        assert!(stride.0 >= 1 && stride.1 >= 1, "degenerate stride");
        active.sort_unstable();
        active.dedup();
        assert!(
            active.iter().all(|&c| c < rows * cols),
            "active cell beyond grid"
        );
        GridSpec {
            rows,
            cols,
            origin_x: origin.0,
            origin_y: origin.1,
            stride_x: stride.0,
            stride_y: stride.1,
            active,
        }
    }

    /// Grid with every cell active.
    pub fn full(rows: usize, cols: usize, origin: (usize, usize), stride: (usize, usize)) -> GridSpec {
        GridSpec::new(rows, cols, origin, stride, (0..rows * cols).collect())
    }

    /// Active cell ids, ascending.
    pub fn active_cells(&self) -> &[usize] {
        &self.active
    }

    /// Read `rows`, `cols`, `origin_x`, `origin_y`, `stride_x`,
    /// `stride_y` and optional `active` from a camera config.
    pub fn from_config(cfg: &Config) -> Result<GridSpec, ConfigError> {
        let rows: usize = cfg.require("rows")?;
        let cols: usize = cfg.require("cols")?;
        let active = cfg
            .get_list::<usize>("active")?
            .unwrap_or_else(|| (0..rows * cols).collect());
        Ok(GridSpec::new(
            rows,
            cols,
            (cfg.get_or("origin_x", 0)?, cfg.get_or("origin_y", 0)?),
            (cfg.require("stride_x")?, cfg.require("stride_y")?),
            active,
        ))
    }
}

/// Crop one sub-image per active cell. Cell ids are stable row-major.
pub fn split_grid(
    img: &RgbImage,
    grid: &GridSpec,
) -> Result<Vec<(usize, RgbImage)>, ImageCoreError> {
    let mut out = Vec::with_capacity(grid.active_cells().len());
    for &cell in grid.active_cells() {
        let row = cell / grid.cols;
        let col = cell % grid.cols;
        let x0 = grid.origin_x + col * grid.stride_x;
        let y0 = grid.origin_y + row * grid.stride_y;
        if x0 + grid.stride_x > img.width() || y0 + grid.stride_y > img.height() {
            return Err(ImageCoreError::GridOutOfBounds {
                cell,
                width: img.width(),
                height: img.height(),
            });
        }
        let mut pixels = Vec::with_capacity(grid.stride_x * grid.stride_y * 3);
        for y in y0..y0 + grid.stride_y {
            let start = (y * img.width() + x0) * 3;
            pixels.extend_from_slice(&img.pixels()[start..start + grid.stride_x * 3]);
        }
        out.push((cell, RgbImage::from_raw(grid.stride_x, grid.stride_y, pixels)));
    }
    Ok(out)
}
