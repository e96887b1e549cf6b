//! Leaf-level segmentation of rosette plants from classified image edges.
//!
//! The pipeline has three stages: detect edges with Canny, classify each
//! edge pixel into one of four classes (background, plant edge, leaf edge,
//! internal noise) with a small convolutional network, then convert the
//! classified edges into a per-leaf region labeling with a short sequence
//! of morphological steps. Standard leaf-segmentation metrics (DiC, FBD,
//! SBD, subset-matched Jaccard) score the result.
//!
//! Modules mirror the stages:
//!
//! - [`imagecore`]: image types, PNG I/O, grayscale, undistortion, tray splitting
//! - [`edges`]: Canny edge detection with per-pixel gradient orientation
//! - [`patchgen`]: training/classification patches from images and edge maps
//! - [`cnn`]: a small trainable convolutional network (forward, backward, SGD)
//! - [`regionize`]: classified edges to per-leaf labels
//! - [`eval`]: segmentation and counting metrics
//! - [`synth`]: deterministic synthetic rosette generator for desk-scale runs
//! - [`pipeline`]: end-to-end orchestration used by the CLI

pub mod config;
pub mod edges;
pub mod eval;
pub mod imagecore;
pub mod patchgen;
pub mod pipeline;
pub mod regionize;
pub mod rng;
pub mod synth;

pub mod cnn;
