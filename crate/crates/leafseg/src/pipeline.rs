//! End-to-end orchestration: the operations behind the CLI subcommands.
//!
//! Each image runs through undistort, optional grid split, Canny, patch
//! classification (single network or binary tree, single-frame or
//! temporal), regionization, and metric evaluation against ground truth.
//! Outputs are written as they are produced, so earlier results survive
//! a failure partway through a directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cnn::{
    classify_fourway, classify_tree, default_specs, train, train_tree, CnnError, Model, Network,
    TrainConfig, TrainLog,
};
use crate::config::{Config, ConfigError};
use crate::edges::{canny, CannyParams, EdgeMap};
use crate::eval::{evaluate_plant, report, EvalError, MetricReport};
use crate::imagecore::{
    label_color, load_label_png, load_png, save_label_png, save_png, split_grid, to_grayscale,
    undistort, DistortionParams, GridSpec, ImageCoreError, LabelImage, RgbImage,
};
use crate::patchgen::{
    build_training_set, extract_patch, extract_temporal_patch, label_edge_pixel, Balance,
    EdgeClass, LabeledPatch, Patch, PatchDataset, PatchGenError, PatchSource,
};
use crate::regionize::{class_color, regionize, ClassMap};
use crate::synth::{generate_dataset, DatasetSpec, SynthError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageCoreError),
    #[error(transparent)]
    Model(#[from] CnnError),
    #[error(transparent)]
    Patch(#[from] PatchGenError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> PipelineError {
        PipelineError::Config(e.to_string())
    }
}

impl From<crate::edges::EdgeError> for PipelineError {
    fn from(e: crate::edges::EdgeError) -> PipelineError {
        PipelineError::Config(e.to_string())
    }
}

impl PipelineError {
    /// Process exit code: 1 for configuration problems, 2 for I/O, 3
    /// for model or shape mismatches.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Io { .. } => 2,
            PipelineError::Image(_) => 2,
            PipelineError::Synth(_) => 1,
            PipelineError::Model(CnnError::Io(_)) => 2,
            PipelineError::Model(_) => 3,
            PipelineError::Patch(PatchGenError::Io(_)) => 2,
            PipelineError::Patch(_) => 3,
            PipelineError::Eval(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which classifier layout a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierMode {
    Tree,
    FourWay,
}

impl std::str::FromStr for ClassifierMode {
    type Err = String;

    fn from_str(s: &str) -> Result<ClassifierMode, String> {
        match s {
            "tree" => Ok(ClassifierMode::Tree),
            "fourway" => Ok(ClassifierMode::FourWay),
            other => Err(format!("unknown mode {other:?}, expected tree|fourway")),
        }
    }
}

/// Everything a pipeline run needs besides its input/output paths.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub canny: CannyParams,
    pub patch_side: usize,
    pub label_radius: usize,
    pub mode: ClassifierMode,
    /// `Some(n)`: classify with temporal patches over the n most recent
    /// frames; the input directory is then one time-lapse sequence.
    pub temporal_frames: Option<usize>,
    pub train: TrainConfig,
    /// Undersampling cap as a multiple of the smallest class.
    pub balance_ratio: f64,
    /// Absolute per-class patch cap applied with the undersampling.
    pub max_per_class: Option<usize>,
    pub grid: Option<GridSpec>,
    pub distortion: Option<DistortionParams>,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            canny: CannyParams::default(),
            patch_side: 16,
            label_radius: 2,
            mode: ClassifierMode::Tree,
            temporal_frames: None,
            train: TrainConfig::default(),
            balance_ratio: 4.0,
            max_per_class: Some(2000),
            grid: None,
            distortion: None,
        }
    }
}

impl PipelineConfig {
    /// Read a pipeline config file. Keys are namespaced by stage
    /// (`canny.low`, `patch.side`, `train.lr`, ...); a `camera_config`
    /// key points at a separate camera file holding grid and distortion
    /// parameters. Every key is optional.
    pub fn from_config(cfg: &Config, base_dir: &Path) -> Result<PipelineConfig, PipelineError> {
        let defaults = PipelineConfig::default();
        let canny = CannyParams::new(
            cfg.get_or("canny.sigma", 1.4f32)?,
            cfg.get_or("canny.low", 0.04f32)?,
            cfg.get_or("canny.high", 0.10f32)?,
        )
        .map_err(|e| PipelineError::Config(e.to_string()))?;

        let train = TrainConfig {
            learning_rate: cfg.get_or("train.lr", defaults.train.learning_rate)?,
            momentum: cfg.get_or("train.momentum", defaults.train.momentum)?,
            epochs: cfg.get_or("train.epochs", defaults.train.epochs)?,
            batch_size: cfg.get_or("train.batch", defaults.train.batch_size)?,
            seed: cfg.get_or("train.seed", defaults.train.seed)?,
            init: defaults.train.init,
        };

        let mode = match cfg.raw("mode") {
            None => defaults.mode,
            Some(raw) => raw.parse().map_err(PipelineError::Config)?,
        };

        let temporal = cfg.get_or("temporal", 0usize)?;
        let (grid, distortion) = match cfg.raw("camera_config") {
            None => (None, None),
            Some(rel) => {
                let path = base_dir.join(rel);
                let camera = Config::load(&path)?;
                let grid = if camera.contains("rows") {
                    Some(GridSpec::from_config(&camera)?)
                } else {
                    None
                };
                (grid, Some(DistortionParams::from_config(&camera)?))
            }
        };

        Ok(PipelineConfig {
            canny,
            patch_side: cfg.get_or("patch.side", defaults.patch_side)?,
            label_radius: cfg.get_or("patch.radius", defaults.label_radius)?,
            mode,
            temporal_frames: (temporal > 0).then_some(temporal),
            train,
            balance_ratio: cfg.get_or("train.balance_ratio", defaults.balance_ratio)?,
            max_per_class: match cfg.get::<usize>("train.max_per_class")? {
                None => defaults.max_per_class,
                Some(0) => None,
                Some(n) => Some(n),
            },
            grid,
            distortion,
        })
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let cfg = Config::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_config(&cfg, base)
    }

    fn balance(&self) -> Balance {
        Balance::Undersample {
            max_ratio: self.balance_ratio,
            cap: self.max_per_class,
            seed: self.train.seed,
        }
    }

    /// Network input shape for this configuration.
    fn input_shape(&self) -> (usize, usize, usize) {
        match self.temporal_frames {
            None => (self.patch_side, self.patch_side, Patch::CHANNELS),
            Some(frames) => (self.patch_side, frames, Patch::CHANNELS),
        }
    }
}

/// Classify one patch with whichever model kind is loaded.
fn classify_patch(model: &Model, patch: &Patch) -> Result<EdgeClass, CnnError> {
    match model {
        Model::Single(net) => classify_fourway(net, patch),
        Model::Tree(tree) => classify_tree(tree, patch),
    }
}

/// Classify every edge pixel of an image into a class map.
///
/// Pixels are processed in fixed chunks in parallel; results are
/// independent per pixel, so the map does not depend on thread count.
pub fn classify_image(
    img: &RgbImage,
    edge_map: &EdgeMap,
    model: &Model,
    cfg: &PipelineConfig,
) -> Result<ClassMap, PipelineError> {
    let pixels: Vec<(usize, usize, f32)> = edge_map.edge_pixels().collect();
    let classified: Vec<Result<EdgeClass, PipelineError>> = pixels
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|&(x, y, _)| {
                let mut patch = extract_patch(img, (x, y), cfg.patch_side)?;
                patch.normalize();
                Ok(classify_patch(model, &patch)?)
            })
        })
        .collect();

    let mut map = ClassMap::new(img.width(), img.height());
    for ((x, y, _), class) in pixels.iter().zip(classified) {
        map.set(*x, *y, Some(class?));
    }
    Ok(map)
}

/// Temporal variant: edges come from the newest frame, patches sample
/// the same normal line across the n most recent frames.
pub fn classify_sequence(
    frames: &[RgbImage],
    model: &Model,
    cfg: &PipelineConfig,
) -> Result<ClassMap, PipelineError> {
    let n = cfg
        .temporal_frames
        .ok_or_else(|| PipelineError::Config("temporal mode not configured".into()))?;
    if frames.len() < n {
        return Err(PipelineError::Config(format!(
            "temporal mode needs {n} frames, got {}",
            frames.len()
        )));
    }
    let window = &frames[frames.len() - n..];
    let newest = window.last().expect("nonempty window");
    let edge_map = canny(&to_grayscale(newest), &cfg.canny)?;

    let pixels: Vec<(usize, usize, f32)> = edge_map.edge_pixels().collect();
    let classified: Vec<Result<EdgeClass, PipelineError>> = pixels
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|&(x, y, theta)| {
                let mut patch = extract_temporal_patch(window, (x, y), theta, cfg.patch_side)?;
                patch.normalize();
                Ok(classify_patch(model, &patch)?)
            })
        })
        .collect();

    let mut map = ClassMap::new(newest.width(), newest.height());
    for ((x, y, _), class) in pixels.iter().zip(classified) {
        map.set(*x, *y, Some(class?));
    }
    Ok(map)
}

/// Detect, classify, and regionize one image.
pub fn segment_image(
    img: &RgbImage,
    model: &Model,
    cfg: &PipelineConfig,
) -> Result<(ClassMap, LabelImage), PipelineError> {
    let edge_map = canny(&to_grayscale(img), &cfg.canny)?;
    let map = classify_image(img, &edge_map, model, cfg)?;
    let labels = regionize(&map);
    Ok((map, labels))
}

/// Train a model (tree or four-way per config) on image/ground-truth
/// pairs. Returns the model and per-network training logs.
pub fn train_model(
    pairs: &[(RgbImage, LabelImage)],
    cfg: &PipelineConfig,
) -> Result<(Model, Vec<TrainLog>), PipelineError> {
    let dataset = match cfg.temporal_frames {
        None => build_training_set(
            pairs,
            &cfg.canny,
            cfg.patch_side,
            cfg.label_radius,
            cfg.balance(),
        )?,
        Some(frames) => build_temporal_training_set(pairs, cfg, frames)?,
    };
    train_on_dataset(&dataset, cfg)
}

/// Train directly on an already-built dataset.
pub fn train_on_dataset(
    dataset: &PatchDataset,
    cfg: &PipelineConfig,
) -> Result<(Model, Vec<TrainLog>), PipelineError> {
    let (rows, cols) = dataset.patch_shape();
    let shape = (rows, cols, Patch::CHANNELS);
    match cfg.mode {
        ClassifierMode::FourWay => {
            let specs = default_specs(shape, EdgeClass::COUNT);
            let net = Network::build(shape, &specs, cfg.train.init, cfg.train.seed)?;
            let (net, log) = train(net, dataset, &cfg.train)?;
            Ok((Model::Single(net), vec![log]))
        }
        ClassifierMode::Tree => {
            let specs = default_specs(shape, 2);
            let (tree, logs) = train_tree(dataset, &specs, &cfg.train)?;
            Ok((Model::Tree(tree), logs.into()))
        }
    }
}

/// Temporal training: each pair is interpreted as a plant whose frame
/// sequence is synthesized by brightness jitter around the given image
/// (the ground truth annotates the final frame).
fn build_temporal_training_set(
    pairs: &[(RgbImage, LabelImage)],
    cfg: &PipelineConfig,
    frames: usize,
) -> Result<PatchDataset, PipelineError> {
    let mut dataset = PatchDataset::new(cfg.patch_side, frames);
    for (image_id, (img, gt)) in pairs.iter().enumerate() {
        let sequence = crate::synth::brightness_jittered_frames(
            img,
            frames,
            0.05,
            cfg.train.seed ^ image_id as u64,
        );
        let edge_map = canny(&to_grayscale(img), &cfg.canny)?;
        for (x, y, theta) in edge_map.edge_pixels() {
            let mut patch = extract_temporal_patch(&sequence, (x, y), theta, cfg.patch_side)?;
            patch.normalize();
            let label = label_edge_pixel(gt, (x, y), cfg.label_radius)?;
            dataset.push(LabeledPatch {
                patch,
                label,
                source: PatchSource {
                    image_id: image_id as u32,
                    x: x as u32,
                    y: y as u32,
                },
            });
        }
    }
    crate::patchgen::rebalance(&mut dataset, cfg.balance());
    Ok(dataset)
}

/// Render a class map with the standard palette on black.
pub fn classmap_to_image(map: &ClassMap) -> RgbImage {
    let mut pixels = Vec::with_capacity(map.width() * map.height() * 3);
    for &cell in map.cells() {
        let rgb = match cell {
            None => [0, 0, 0],
            Some(class) => class_color(class),
        };
        pixels.extend_from_slice(&rgb);
    }
    RgbImage::from_raw(map.width(), map.height(), pixels)
}

/// Alpha-blend a segmentation or class-map rendering over an image.
/// Black layer pixels leave the image untouched.
pub fn overlay_image(img: &RgbImage, layer: &RgbImage) -> Result<RgbImage, PipelineError> {
    if img.width() != layer.width() || img.height() != layer.height() {
        return Err(PipelineError::Eval(EvalError::DimensionMismatch(format!(
            "{}x{} image vs {}x{} layer",
            img.width(),
            img.height(),
            layer.width(),
            layer.height()
        ))));
    }
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for (base, layer_px) in img
        .pixels()
        .chunks_exact(3)
        .zip(layer.pixels().chunks_exact(3))
    {
        if layer_px == [0, 0, 0] {
            pixels.extend_from_slice(base);
        } else {
            for (a, b) in base.iter().zip(layer_px) {
                pixels.push(((*a as u16 + *b as u16) / 2) as u8);
            }
        }
    }
    Ok(RgbImage::from_raw(img.width(), img.height(), pixels))
}

/// Tray number and timestamp from a phenotyping-platform file name like
/// `031_2015-12-14_12-54-06`. Used to order time-lapse sequences;
/// unparseable names fall back to lexicographic order.
pub fn parse_tray_timestamp(stem: &str) -> Option<(u32, String)> {
    let (tray, rest) = stem.split_once(['_', '-'])?;
    if tray.is_empty() || !tray.chars().all(|c| c.is_ascii_digit()) || rest.is_empty() {
        return None;
    }
    Some((tray.parse().ok()?, rest.to_string()))
}

/// PNG files in a directory, ordered for processing: by (tray,
/// timestamp) when every name parses, lexicographically otherwise.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()) == Some("png")
                && !p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| s.ends_with("_gt"))
        })
        .collect();
    files.sort();

    let keys: Option<Vec<(u32, String)>> = files
        .iter()
        .map(|p| parse_tray_timestamp(p.file_stem()?.to_str()?))
        .collect();
    if let Some(keys) = keys {
        let mut paired: Vec<((u32, String), PathBuf)> = keys.into_iter().zip(files).collect();
        paired.sort();
        return Ok(paired.into_iter().map(|(_, p)| p).collect());
    }
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

/// Ground truth for an image stem: `<stem>.png` or `<stem>_gt.png` in
/// the ground-truth directory.
pub fn find_gt(gt_dir: &Path, stem: &str) -> Option<PathBuf> {
    for candidate in [format!("{stem}.png"), format!("{stem}_gt.png")] {
        let path = gt_dir.join(candidate);
        if path.exists() {
            return Some(path);
        }
    }
    None
}

/// Undistort and optionally grid-split one tray image into named work
/// items.
fn preprocess(
    img: RgbImage,
    stem: &str,
    cfg: &PipelineConfig,
) -> Result<Vec<(String, RgbImage)>, PipelineError> {
    let img = match &cfg.distortion {
        Some(params) => undistort(&img, params),
        None => img,
    };
    match &cfg.grid {
        None => Ok(vec![(stem.to_string(), img)]),
        Some(grid) => Ok(split_grid(&img, grid)?
            .into_iter()
            .map(|(cell, sub)| (format!("{stem}_cell{cell}"), sub))
            .collect()),
    }
}

/// Generate a synthetic dataset on disk: `plant_<k>.png`,
/// `plant_<k>_gt.png`, `manifest.txt`.
pub fn cmd_synth(
    out_dir: &Path,
    n: usize,
    ranges: &DatasetSpec,
    seed: u64,
) -> Result<(), PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let (plants, manifest) = generate_dataset(n, ranges, seed)?;
    for plant in &plants {
        save_png(&plant.image, &out_dir.join(format!("{}.png", plant.name)))?;
        save_label_png(&plant.gt, &out_dir.join(format!("{}_gt.png", plant.name)))?;
    }
    fs::write(out_dir.join("manifest.txt"), manifest).map_err(io_err(out_dir))?;
    Ok(())
}

/// Load image/ground-truth pairs from two directories.
pub fn load_pairs(
    input_dir: &Path,
    gt_dir: &Path,
) -> Result<Vec<(RgbImage, LabelImage)>, PipelineError> {
    let mut pairs = Vec::new();
    for path in list_images(input_dir)? {
        let stem = stem_of(&path);
        let Some(gt_path) = find_gt(gt_dir, &stem) else {
            return Err(PipelineError::Config(format!(
                "no ground truth for {stem} in {}",
                gt_dir.display()
            )));
        };
        pairs.push((load_png(&path)?, load_label_png(&gt_path)?));
    }
    Ok(pairs)
}

/// Train a model from directories and write it (plus a `.log` file with
/// per-epoch losses) to `model_path`.
pub fn cmd_train(
    cfg: &PipelineConfig,
    input_dir: &Path,
    gt_dir: &Path,
    model_path: &Path,
) -> Result<(), PipelineError> {
    let pairs = load_pairs(input_dir, gt_dir)?;
    if pairs.is_empty() {
        return Err(PipelineError::Config(format!(
            "no training images in {}",
            input_dir.display()
        )));
    }
    let (model, logs) = train_model(&pairs, cfg)?;
    model.save(model_path)?;

    let mut text = String::new();
    for (i, log) in logs.iter().enumerate() {
        for (epoch, loss) in log.epoch_losses.iter().enumerate() {
            text.push_str(&format!("net{i},epoch{epoch},{loss:.6}\n"));
        }
    }
    let log_path = model_path.with_extension("log");
    fs::write(&log_path, text).map_err(io_err(&log_path))?;
    Ok(())
}

/// Segment every image in a directory. Returns `(name, labels)` for
/// each processed work item, writing `<name>.png` (and with `debug`,
/// `<name>_classmap.png`) as it goes.
pub fn cmd_segment(
    cfg: &PipelineConfig,
    input_dir: &Path,
    model_path: &Path,
    out_dir: &Path,
    debug: bool,
) -> Result<Vec<(String, LabelImage)>, PipelineError> {
    let model = crate::cnn::load_model(model_path)?;
    check_model_shape(&model, cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut results = Vec::new();
    if let Some(_frames) = cfg.temporal_frames {
        // The whole directory is one time-lapse sequence; segment its
        // newest frame.
        let paths = list_images(input_dir)?;
        if paths.is_empty() {
            return Ok(results);
        }
        let frames: Vec<RgbImage> = paths.iter().map(|p| load_png(p)).collect::<Result<_, _>>()?;
        let stem = stem_of(paths.last().expect("nonempty"));
        let map = classify_sequence(&frames, &model, cfg)?;
        let labels = regionize(&map);
        write_outputs(out_dir, &stem, &map, &labels, debug)?;
        results.push((stem, labels));
        return Ok(results);
    }

    for path in list_images(input_dir)? {
        let stem = stem_of(&path);
        for (name, img) in preprocess(load_png(&path)?, &stem, cfg)? {
            let (map, labels) = segment_image(&img, &model, cfg)?;
            write_outputs(out_dir, &name, &map, &labels, debug)?;
            results.push((name, labels));
        }
    }
    Ok(results)
}

fn write_outputs(
    out_dir: &Path,
    name: &str,
    map: &ClassMap,
    labels: &LabelImage,
    debug: bool,
) -> Result<(), PipelineError> {
    save_label_png(labels, &out_dir.join(format!("{name}.png")))?;
    if debug {
        save_png(
            &classmap_to_image(map),
            &out_dir.join(format!("{name}_classmap.png")),
        )?;
    }
    Ok(())
}

fn check_model_shape(model: &Model, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let expect = cfg.input_shape();
    if model.input_shape() != expect {
        return Err(PipelineError::Model(CnnError::ShapeMismatch(format!(
            "model input {:?} vs configured {:?}",
            model.input_shape(),
            expect
        ))));
    }
    Ok(())
}

/// Score predictions against ground truth and write the metric CSV.
/// With no matching pairs the CSV holds only the header.
pub fn cmd_evaluate(
    pred_dir: &Path,
    gt_dir: &Path,
    csv_path: &Path,
) -> Result<Option<MetricReport>, PipelineError> {
    let mut records = Vec::new();
    for path in list_images(pred_dir)? {
        let stem = stem_of(&path);
        let Some(gt_path) = find_gt(gt_dir, &stem) else {
            continue;
        };
        let pred = load_label_png(&path)?;
        let gt = load_label_png(&gt_path)?;
        records.push(evaluate_plant(&stem, &pred, &gt)?);
    }
    if records.is_empty() {
        fs::write(csv_path, "plant_id,dic,abs_dic,fbd,sbd,smj\n").map_err(io_err(csv_path))?;
        return Ok(None);
    }
    let report = report(records)?;
    fs::write(csv_path, report.to_csv()).map_err(io_err(csv_path))?;
    Ok(Some(report))
}

/// Full pipeline over a directory: segment everything, then evaluate
/// when ground truth is available. The metric CSV lands in
/// `out_dir/metrics.csv`.
pub fn cmd_pipeline(
    cfg: &PipelineConfig,
    input_dir: &Path,
    gt_dir: Option<&Path>,
    model_path: &Path,
    out_dir: &Path,
) -> Result<Option<MetricReport>, PipelineError> {
    let segmented = cmd_segment(cfg, input_dir, model_path, out_dir, false)?;
    let Some(gt_dir) = gt_dir else {
        return Ok(None);
    };
    let mut records = Vec::new();
    for (name, labels) in &segmented {
        let Some(gt_path) = find_gt(gt_dir, name) else {
            continue;
        };
        let gt = load_label_png(&gt_path)?;
        records.push(evaluate_plant(name, labels, &gt)?);
    }
    let csv_path = out_dir.join("metrics.csv");
    if records.is_empty() {
        fs::write(&csv_path, "plant_id,dic,abs_dic,fbd,sbd,smj\n").map_err(io_err(&csv_path))?;
        return Ok(None);
    }
    let report = report(records)?;
    fs::write(&csv_path, report.to_csv()).map_err(io_err(&csv_path))?;
    Ok(Some(report))
}

/// Undistort every image in a directory.
pub fn cmd_undistort(
    cfg: &PipelineConfig,
    input_dir: &Path,
    out_dir: &Path,
) -> Result<(), PipelineError> {
    let params = cfg.distortion.ok_or_else(|| {
        PipelineError::Config("undistort requires a camera_config with k1/k2/cx/cy".into())
    })?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for path in list_images(input_dir)? {
        let img = load_png(&path)?;
        let out = undistort(&img, &params);
        save_png(&out, &out_dir.join(format!("{}.png", stem_of(&path))))?;
    }
    Ok(())
}

/// Split every image in a directory on the configured grid.
pub fn cmd_split(
    cfg: &PipelineConfig,
    input_dir: &Path,
    out_dir: &Path,
) -> Result<(), PipelineError> {
    let grid = cfg.grid.clone().ok_or_else(|| {
        PipelineError::Config("split requires a camera_config with grid keys".into())
    })?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for path in list_images(input_dir)? {
        let img = load_png(&path)?;
        let stem = stem_of(&path);
        for (cell, sub) in split_grid(&img, &grid)? {
            save_png(&sub, &out_dir.join(format!("{stem}_cell{cell}.png")))?;
        }
    }
    Ok(())
}

/// Blend a segmentation or class map over its source image.
pub fn cmd_overlay(
    image_path: &Path,
    layer_path: &Path,
    out_path: &Path,
) -> Result<(), PipelineError> {
    let img = load_png(image_path)?;
    let layer = load_png(layer_path)?;
    let blended = overlay_image(&img, &layer)?;
    save_png(&blended, out_path)?;
    Ok(())
}

/// Render a label image with the annotation colormap, for viewing.
pub fn labels_to_image(labels: &LabelImage) -> RgbImage {
    let mut pixels = Vec::with_capacity(labels.width() * labels.height() * 3);
    for &l in labels.labels() {
        pixels.extend_from_slice(&label_color(l));
    }
    RgbImage::from_raw(labels.width(), labels.height(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tray_timestamp_parsing() {
        assert_eq!(
            parse_tray_timestamp("031_2015-12-14_12-54-06"),
            Some((31, "2015-12-14_12-54-06".to_string()))
        );
        assert_eq!(parse_tray_timestamp("not-a-tray_x"), None);
        assert_eq!(parse_tray_timestamp("plain"), None);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("tree".parse::<ClassifierMode>(), Ok(ClassifierMode::Tree));
        assert_eq!(
            "fourway".parse::<ClassifierMode>(),
            Ok(ClassifierMode::FourWay)
        );
        assert!("4way".parse::<ClassifierMode>().is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = Config::parse(
            "canny.low=0.02\npatch.side=12\nmode=fourway\ntrain.epochs=7\ntrain.balance_ratio=2.5\n",
        )
        .unwrap();
        let pc = PipelineConfig::from_config(&cfg, Path::new(".")).unwrap();
        assert_eq!(pc.canny.low, 0.02);
        assert_eq!(pc.canny.high, 0.10);
        assert_eq!(pc.patch_side, 12);
        assert_eq!(pc.mode, ClassifierMode::FourWay);
        assert_eq!(pc.train.epochs, 7);
        assert_eq!(pc.balance_ratio, 2.5);
        assert!(pc.grid.is_none());
    }

    #[test]
    fn bad_mode_is_a_config_error() {
        let cfg = Config::parse("mode=forest\n").unwrap();
        let err = PipelineConfig::from_config(&cfg, Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn overlay_ignores_black_and_blends_color() {
        let img = RgbImage::filled(2, 1, [100, 100, 100]);
        let mut layer = RgbImage::filled(2, 1, [0, 0, 0]);
        layer.set(1, 0, [0, 255, 0]);
        let out = overlay_image(&img, &layer).unwrap();
        assert_eq!(out.get(0, 0), [100, 100, 100]);
        assert_eq!(out.get(1, 0), [50, 177, 50]);
    }

    #[test]
    fn overlay_dimension_mismatch_is_exit_code_three() {
        let img = RgbImage::filled(2, 1, [0, 0, 0]);
        let layer = RgbImage::filled(1, 1, [0, 0, 0]);
        let err = overlay_image(&img, &layer).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn classmap_palette_colors() {
        let mut map = ClassMap::new(4, 1);
        map.set(0, 0, Some(EdgeClass::PlantEdge));
        map.set(1, 0, Some(EdgeClass::LeafEdge));
        map.set(2, 0, Some(EdgeClass::Background));
        map.set(3, 0, Some(EdgeClass::InternalNoise));
        let img = classmap_to_image(&map);
        assert_eq!(img.get(0, 0), [255, 255, 255]);
        assert_eq!(img.get(1, 0), [0, 255, 0]);
        assert_eq!(img.get(2, 0), [255, 165, 0]);
        assert_eq!(img.get(3, 0), [255, 0, 0]);
    }
}
