//! Patch extraction and training-set construction.
//!
//! Classification works on small color patches centered on detected edge
//! pixels. Training labels come from ground-truth label images: the set
//! of leaf labels in a small neighborhood of the edge pixel decides which
//! of the four edge classes the pixel belongs to.
//!
//! Patches are extracted with channels scaled to `[0, 1]` and then
//! mean-centered per channel; datasets store the centered values.

mod dataset_io;

pub use dataset_io::{load_dataset, save_dataset};

use crate::edges::{canny, CannyParams, EdgeMap};
use crate::imagecore::{to_grayscale, LabelImage, RgbImage};
use crate::rng::Stream;

#[derive(Debug, thiserror::Error)]
pub enum PatchGenError {
    #[error("center ({x},{y}) out of bounds for {width}x{height} image")]
    CenterOutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("pixel ({x},{y}) out of bounds for {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("temporal patches need at least two frames")]
    EmptyFrameList,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("patch length must be at least 2, got {0}")]
    InvalidLength(usize),
    #[error("malformed dataset file: {0}")]
    MalformedDataset(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Edge(#[from] crate::edges::EdgeError),
}

/// The four-way label of an edge pixel.
///
/// Encoding is stable: `Background = 0`, `PlantEdge = 1`, `LeafEdge = 2`,
/// `InternalNoise = 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EdgeClass {
    /// Edge wholly outside any plant.
    Background = 0,
    /// Edge where plant meets background (the plant silhouette).
    PlantEdge = 1,
    /// Edge inside a plant where two leaves overlap.
    LeafEdge = 2,
    /// Edge inside one leaf: shadows, specular highlights, venation.
    InternalNoise = 3,
}

impl EdgeClass {
    pub const COUNT: usize = 4;
    pub const ALL: [EdgeClass; 4] = [
        EdgeClass::Background,
        EdgeClass::PlantEdge,
        EdgeClass::LeafEdge,
        EdgeClass::InternalNoise,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<EdgeClass> {
        EdgeClass::ALL.get(i).copied()
    }
}

/// A fixed-size color patch. Single-frame patches are `side x side`
/// squares; temporal patches are `length x frames` with the spatial
/// samples along the rows and one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl Patch {
    pub const CHANNELS: usize = 3;

    pub fn from_values(rows: usize, cols: usize, values: Vec<f32>) -> Patch {
        assert_eq!(values.len(), rows * cols * Patch::CHANNELS);
        Patch { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.values[(row * self.cols + col) * Patch::CHANNELS + channel]
    }

    /// Subtract the per-channel mean.
    pub fn normalize(&mut self) {
        for channel in 0..Patch::CHANNELS {
            let mut sum = 0.0f64;
            for i in (channel..self.values.len()).step_by(Patch::CHANNELS) {
                sum += self.values[i] as f64;
            }
            let mean = (sum / (self.rows * self.cols) as f64) as f32;
            for i in (channel..self.values.len()).step_by(Patch::CHANNELS) {
                self.values[i] -= mean;
            }
        }
    }
}

/// Where a training patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSource {
    pub image_id: u32,
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub patch: Patch,
    pub label: EdgeClass,
    pub source: PatchSource,
}

/// Class-balancing strategy applied after patch collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Balance {
    /// Keep everything in scan order.
    None,
    /// Randomly drop patches from over-represented classes until no
    /// class exceeds `max_ratio` times the smallest populated class,
    /// nor the optional absolute per-class cap.
    Undersample {
        max_ratio: f64,
        cap: Option<usize>,
        seed: u64,
    },
}

/// An ordered collection of labeled patches with a class histogram.
///
/// `side` and `frames` describe the patch geometry: `frames == 1` means
/// square `side x side` patches, otherwise rows are `side` spatial
/// samples and columns are `frames` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    side: usize,
    frames: usize,
    patches: Vec<LabeledPatch>,
    histogram: [usize; EdgeClass::COUNT],
}

impl PatchDataset {
    pub fn new(side: usize, frames: usize) -> PatchDataset {
        PatchDataset {
            side,
            frames,
            patches: Vec::new(),
            histogram: [0; EdgeClass::COUNT],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Patch shape as `(rows, cols)`.
    pub fn patch_shape(&self) -> (usize, usize) {
        if self.frames == 1 {
            (self.side, self.side)
        } else {
            (self.side, self.frames)
        }
    }

    pub fn push(&mut self, item: LabeledPatch) {
        let (rows, cols) = self.patch_shape();
        assert_eq!(
            (item.patch.rows(), item.patch.cols()),
            (rows, cols),
            "patch shape mismatch"
        );
        self.histogram[item.label.index()] += 1;
        self.patches.push(item);
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[LabeledPatch] {
        &self.patches
    }

    /// Per-class counts, indexed by `EdgeClass::index()`.
    pub fn histogram(&self) -> [usize; EdgeClass::COUNT] {
        self.histogram
    }

    /// Keep only the items at the given sorted indices.
    fn retain_indices(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.patches.len());
        let mut idx = 0;
        self.patches.retain(|_| {
            let k = keep[idx];
            idx += 1;
            k
        });
        self.histogram = [0; EdgeClass::COUNT];
        for p in &self.patches {
            self.histogram[p.label.index()] += 1;
        }
    }
}

#[inline]
fn channel_unit(v: u8) -> f32 {
    v as f32 / 255.0
}

/// Extract a `side x side` patch centered on an edge pixel, channels
/// scaled to `[0, 1]`, off-image pixels replicated from the border. For
/// even sides the center pixel sits at index `side/2`.
pub fn extract_patch(
    img: &RgbImage,
    center: (usize, usize),
    side: usize,
) -> Result<Patch, PatchGenError> {
    let (cx, cy) = center;
    if cx >= img.width() || cy >= img.height() {
        return Err(PatchGenError::CenterOutOfBounds {
            x: cx,
            y: cy,
            width: img.width(),
            height: img.height(),
        });
    }
    let half = (side / 2) as isize;
    let mut values = Vec::with_capacity(side * side * Patch::CHANNELS);
    for row in 0..side {
        let sy = cy as isize + row as isize - half;
        for col in 0..side {
            let sx = cx as isize + col as isize - half;
            let rgb = img.get_clamped(sx, sy);
            values.extend(rgb.iter().map(|&v| channel_unit(v)));
        }
    }
    Ok(Patch::from_values(side, side, values))
}

/// Bilinear sample with border replication, channels in `[0, 1]`.
fn sample_line_point(img: &RgbImage, x: f64, y: f64) -> [f32; 3] {
    let x = x.clamp(0.0, img.width() as f64 - 1.0);
    let y = y.clamp(0.0, img.height() as f64 - 1.0);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;

    let mut out = [0.0f32; 3];
    let (p00, p10, p01, p11) = (
        img.get(x0, y0),
        img.get(x1, y0),
        img.get(x0, y1),
        img.get(x1, y1),
    );
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = ((top * (1.0 - fy) + bottom * fy) / 255.0) as f32;
    }
    out
}

/// Extract a temporal patch: `length` points along the edge normal
/// through `center`, sampled at the same locations in every frame.
///
/// Rows index the spatial samples, columns the frames (oldest first).
pub fn extract_temporal_patch(
    frames: &[RgbImage],
    center: (usize, usize),
    orientation: f32,
    length: usize,
) -> Result<Patch, PatchGenError> {
    if frames.len() < 2 {
        return Err(PatchGenError::EmptyFrameList);
    }
    if length < 2 {
        return Err(PatchGenError::InvalidLength(length));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    for f in &frames[1..] {
        if f.width() != w || f.height() != h {
            return Err(PatchGenError::DimensionMismatch(format!(
                "frame {}x{} vs {}x{}",
                f.width(),
                f.height(),
                w,
                h
            )));
        }
    }
    let (cx, cy) = center;
    if cx >= w || cy >= h {
        return Err(PatchGenError::CenterOutOfBounds {
            x: cx,
            y: cy,
            width: w,
            height: h,
        });
    }

    // Unit step along the gradient (normal to the edge), 1 pixel apart.
    let dir_x = (orientation as f64).cos();
    let dir_y = (orientation as f64).sin();
    let half = (length / 2) as f64;
    let mut values = Vec::with_capacity(length * frames.len() * Patch::CHANNELS);
    for i in 0..length {
        let t = i as f64 - half;
        let px = cx as f64 + t * dir_x;
        let py = cy as f64 + t * dir_y;
        for frame in frames {
            values.extend_from_slice(&sample_line_point(frame, px, py));
        }
    }
    Ok(Patch::from_values(length, frames.len(), values))
}

/// Classify an edge pixel from the ground-truth labels around it.
///
/// The `(2*radius+1)^2` neighborhood (clipped at image borders) is
/// scanned for distinct labels, then in order: only background means
/// [`EdgeClass::Background`]; background plus at least one leaf means
/// [`EdgeClass::PlantEdge`]; two or more leaves and no background means
/// [`EdgeClass::LeafEdge`]; a single leaf means [`EdgeClass::InternalNoise`].
pub fn label_edge_pixel(
    gt: &LabelImage,
    p: (usize, usize),
    radius: usize,
) -> Result<EdgeClass, PatchGenError> {
    let (x, y) = p;
    if x >= gt.width() || y >= gt.height() {
        return Err(PatchGenError::OutOfBounds {
            x,
            y,
            width: gt.width(),
            height: gt.height(),
        });
    }
    let r = radius as isize;
    let mut has_background = false;
    let mut first_leaf = 0u32;
    let mut second_leaf = false;
    for dy in -r..=r {
        for dx in -r..=r {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            if nx < 0 || ny < 0 || nx >= gt.width() as isize || ny >= gt.height() as isize {
                continue;
            }
            let label = gt.get(nx as usize, ny as usize);
            if label == 0 {
                has_background = true;
            } else if first_leaf == 0 {
                first_leaf = label;
            } else if label != first_leaf {
                second_leaf = true;
            }
        }
    }
    Ok(match (has_background, first_leaf > 0, second_leaf) {
        (true, false, _) => EdgeClass::Background,
        (true, true, _) => EdgeClass::PlantEdge,
        (false, _, true) => EdgeClass::LeafEdge,
        _ => EdgeClass::InternalNoise,
    })
}

/// Run edge detection over image/ground-truth pairs and emit one labeled,
/// normalized patch per edge pixel, then apply the balancing strategy.
///
/// Scan order is (image index, row, column), so output is deterministic;
/// undersampling randomness comes only from the strategy's seed.
pub fn build_training_set(
    pairs: &[(RgbImage, LabelImage)],
    canny_params: &CannyParams,
    side: usize,
    radius: usize,
    balance: Balance,
) -> Result<PatchDataset, PatchGenError> {
    let mut dataset = PatchDataset::new(side, 1);
    for (image_id, (img, gt)) in pairs.iter().enumerate() {
        if img.width() != gt.width() || img.height() != gt.height() {
            return Err(PatchGenError::DimensionMismatch(format!(
                "image {image_id}: {}x{} image vs {}x{} ground truth",
                img.width(),
                img.height(),
                gt.width(),
                gt.height()
            )));
        }
        let edge_map = canny(&to_grayscale(img), canny_params)?;
        collect_labeled_patches(&mut dataset, img, gt, &edge_map, image_id as u32, side, radius)?;
    }
    apply_balance(&mut dataset, balance);
    Ok(dataset)
}

fn collect_labeled_patches(
    dataset: &mut PatchDataset,
    img: &RgbImage,
    gt: &LabelImage,
    edge_map: &EdgeMap,
    image_id: u32,
    side: usize,
    radius: usize,
) -> Result<(), PatchGenError> {
    for (x, y, _) in edge_map.edge_pixels() {
        let mut patch = extract_patch(img, (x, y), side)?;
        patch.normalize();
        let label = label_edge_pixel(gt, (x, y), radius)?;
        dataset.push(LabeledPatch {
            patch,
            label,
            source: PatchSource {
                image_id,
                x: x as u32,
                y: y as u32,
            },
        });
    }
    Ok(())
}

/// Apply a balancing strategy to an existing dataset in place.
pub fn rebalance(dataset: &mut PatchDataset, balance: Balance) {
    apply_balance(dataset, balance);
}

fn apply_balance(dataset: &mut PatchDataset, balance: Balance) {
    let Balance::Undersample {
        max_ratio,
        cap,
        seed,
    } = balance
    else {
        return;
    };
    assert!(max_ratio >= 1.0, "max_ratio below 1 is unsatisfiable");
    let histogram = dataset.histogram();
    let Some(&min_count) = histogram.iter().filter(|&&c| c > 0).min() else {
        return;
    };
    let mut target = ((min_count as f64 * max_ratio).floor() as usize).max(min_count);
    if let Some(cap) = cap {
        target = target.min(cap.max(1));
    }

    let mut rng = Stream::derive(seed, 0x7061_7463_6862_616c); // "patchbal"
    let mut keep = vec![true; dataset.len()];
    for class in EdgeClass::ALL {
        let count = histogram[class.index()];
        if count <= target {
            continue;
        }
        let mut indices: Vec<usize> = dataset
            .patches()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.label == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut indices);
        for &drop in &indices[target..] {
            keep[drop] = false;
        }
    }
    dataset.retain_indices(&keep);
}
